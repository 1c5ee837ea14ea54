//! Run reports and their CSV / JSON serializations.
//!
//! The CSV column order is a contract: seed, arch, client_id, epsilon, sigma,
//! injection_point, review, accuracy, ssim, dissimilarity, bytes_up,
//! bytes_down. Missing values render as empty strings, never as zero, and the
//! writer is deterministic for a given report set.

use std::path::Path;

use anyhow::{Context, Result};
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ClientReport {
    pub client_id: usize,
    pub epsilon: Option<f64>,
    pub sigma: f64,
    pub injection_point: String,
    pub accuracy: Option<f64>,
    pub ssim: Option<f64>,
    pub dissimilarity: Option<f64>,
    pub bytes_up: u64,
    pub bytes_down: u64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RunReport {
    pub seed: u64,
    pub arch: String,
    pub review: bool,
    pub clients: Vec<ClientReport>,
    /// Total client->server bytes per global epoch, summed over clients.
    pub bytes_up_per_epoch: Vec<u64>,
    pub bytes_down_per_epoch: Vec<u64>,
    pub wall_time_secs: f64,
    pub config_hash: String,
}

pub const CSV_HEADER: &str = "seed,arch,client_id,epsilon,sigma,injection_point,review,\
accuracy,ssim,dissimilarity,bytes_up,bytes_down";

fn opt(v: Option<f64>) -> String {
    v.map(|x| format!("{x:.6}")).unwrap_or_default()
}

/// Renders the canonical CSV, sorted so identical report sets serialize
/// byte-identically regardless of arrival order.
pub fn to_csv(reports: &[RunReport]) -> String {
    let mut rows: Vec<(String, String)> = Vec::new();
    for r in reports {
        for c in &r.clients {
            let key = format!(
                "{:020}|{}|{}|{}|{:010}",
                r.seed,
                r.arch,
                c.injection_point,
                opt(c.epsilon),
                c.client_id
            );
            let line = format!(
                "{},{},{},{},{},{},{},{},{},{},{},{}",
                r.seed,
                r.arch,
                c.client_id,
                opt(c.epsilon),
                format_args!("{:.6}", c.sigma),
                c.injection_point,
                r.review,
                opt(c.accuracy),
                opt(c.ssim),
                opt(c.dissimilarity),
                c.bytes_up,
                c.bytes_down
            );
            rows.push((key, line));
        }
    }
    rows.sort();
    let mut out = String::from(CSV_HEADER);
    out.push('\n');
    for (_, line) in rows {
        out.push_str(&line);
        out.push('\n');
    }
    out
}

/// Writes `report.csv` and `report.json` (the JSON mirrors the CSV rows and
/// embeds the config that produced them).
pub fn write_reports(
    reports: &[RunReport],
    config: &serde_json::Value,
    out_dir: &Path,
) -> Result<()> {
    std::fs::create_dir_all(out_dir)
        .with_context(|| format!("creating output dir {}", out_dir.display()))?;
    let csv_path = out_dir.join("report.csv");
    std::fs::write(&csv_path, to_csv(reports))
        .with_context(|| format!("writing {}", csv_path.display()))?;
    let json_path = out_dir.join("report.json");
    let doc = serde_json::json!({ "config": config, "runs": reports });
    std::fs::write(&json_path, serde_json::to_string_pretty(&doc)?)
        .with_context(|| format!("writing {}", json_path.display()))?;
    Ok(())
}

/// Reads back a `report.json` written by [`write_reports`].
pub fn read_report_json(path: &Path) -> Result<(serde_json::Value, Vec<RunReport>)> {
    let text = std::fs::read_to_string(path)
        .with_context(|| format!("reading {}", path.display()))?;
    let doc: serde_json::Value = serde_json::from_str(&text)?;
    let config = doc.get("config").cloned().unwrap_or(serde_json::Value::Null);
    let runs: Vec<RunReport> =
        serde_json::from_value(doc.get("runs").cloned().unwrap_or_default())
            .context("parsing runs")?;
    Ok((config, runs))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample_run(seed: u64, with_scores: bool) -> RunReport {
        RunReport {
            seed,
            arch: "lenet5-split1".into(),
            review: false,
            clients: vec![
                ClientReport {
                    client_id: 0,
                    epsilon: Some(2.0),
                    sigma: 2.422403,
                    injection_point: "MaxP(1)".into(),
                    accuracy: with_scores.then_some(0.7),
                    ssim: with_scores.then_some(0.31),
                    dissimilarity: with_scores.then_some(0.69),
                    bytes_up: 100,
                    bytes_down: 90,
                },
                ClientReport {
                    client_id: 1,
                    epsilon: None,
                    sigma: 0.0,
                    injection_point: "MaxP(1)".into(),
                    accuracy: None,
                    ssim: None,
                    dissimilarity: None,
                    bytes_up: 100,
                    bytes_down: 90,
                },
            ],
            bytes_up_per_epoch: vec![200],
            bytes_down_per_epoch: vec![180],
            wall_time_secs: 1.25,
            config_hash: "deadbeef".into(),
        }
    }

    #[test]
    fn csv_column_order_is_the_contract() {
        assert!(to_csv(&[]).starts_with(
            "seed,arch,client_id,epsilon,sigma,injection_point,review,accuracy,ssim,\
             dissimilarity,bytes_up,bytes_down\n"
        ));
    }

    #[test]
    fn missing_values_render_as_empty_strings_not_zero() {
        let csv = to_csv(&[sample_run(3, false)]);
        let row = csv.lines().nth(2).unwrap(); // client 1 of seed 3
        assert_eq!(row, "3,lenet5-split1,1,,0.000000,MaxP(1),false,,,,100,90");
    }

    #[test]
    fn identical_report_sets_serialize_byte_identically() {
        let a = vec![sample_run(1, true), sample_run(0, true)];
        let b = vec![sample_run(0, true), sample_run(1, true)];
        assert_eq!(to_csv(&a), to_csv(&b));
    }

    #[test]
    fn json_roundtrip_preserves_runs() {
        let dir = tempfile::tempdir().unwrap();
        let runs = vec![sample_run(0, true)];
        let cfg = serde_json::json!({"epochs": 1});
        write_reports(&runs, &cfg, dir.path()).unwrap();
        let (cfg2, runs2) = read_report_json(&dir.path().join("report.json")).unwrap();
        assert_eq!(cfg2, cfg);
        assert_eq!(runs2.len(), 1);
        assert_eq!(runs2[0].clients[0].accuracy, Some(0.7));
        let csv = std::fs::read_to_string(dir.path().join("report.csv")).unwrap();
        assert_eq!(csv, to_csv(&runs));
    }
}
