//! Experiment configuration: a JSON file validated at startup.

use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    /// Architecture preset: `lenet5-split1`, `lenet5-split2`, or `vgg11-lite`.
    pub arch: String,
    #[serde(default)]
    pub upsampled: bool,
    /// Conv channel scaling for the VGG preset.
    #[serde(default = "default_width_scale")]
    pub width_scale: f64,
    pub dataset: DatasetConfig,
    pub clients: usize,
    /// Per-client privacy budgets; clients not listed train without noise.
    #[serde(default)]
    pub privacy: Vec<ClientPrivacy>,
    /// Noise entry point; defaults to the preset's split layer.
    #[serde(default)]
    pub injection_point: Option<String>,
    #[serde(default)]
    pub review: ReviewConfig,
    #[serde(default)]
    pub partition: PartitionConfig,
    pub epochs: usize,
    #[serde(default = "default_batch_size")]
    pub batch_size: usize,
    pub base_lr: f64,
    #[serde(default = "default_true")]
    pub cosine_schedule: bool,
    pub seeds: Vec<u64>,
    #[serde(default)]
    pub attack: Option<AttackSection>,
    #[serde(default)]
    pub sweep: Option<SweepSection>,
}

fn default_width_scale() -> f64 {
    1.0
}

fn default_batch_size() -> usize {
    64
}

fn default_true() -> bool {
    true
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DatasetConfig {
    /// `synthetic`, `mnist` (IDX files), or `cifar10` (binary batches).
    pub kind: String,
    /// Directory holding the dataset files for `mnist` / `cifar10`.
    #[serde(default)]
    pub dir: Option<PathBuf>,
    /// Synthetic generator geometry.
    #[serde(default = "default_classes")]
    pub classes: usize,
    #[serde(default)]
    pub image: Option<(usize, usize, usize)>,
    /// Desk-scale subset sizes; ignored under --full-scale.
    #[serde(default = "default_train_subset")]
    pub train_subset: usize,
    #[serde(default = "default_test_subset")]
    pub test_subset: usize,
    #[serde(default)]
    pub data_seed: u64,
}

fn default_classes() -> usize {
    10
}

fn default_train_subset() -> usize {
    10_000
}

fn default_test_subset() -> usize {
    2_000
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ClientPrivacy {
    pub client: usize,
    pub epsilon: f64,
    #[serde(default = "default_delta")]
    pub delta: f64,
    #[serde(default = "default_sensitivity")]
    pub sensitivity: f64,
}

fn default_delta() -> f64 {
    1e-5
}

fn default_sensitivity() -> f64 {
    1.0
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize, Default)]
#[serde(deny_unknown_fields)]
pub struct ReviewConfig {
    #[serde(default)]
    pub enabled: bool,
    /// Fixed review target sigma; absent means max-over-clients.
    #[serde(default)]
    pub fixed_sigma: Option<f64>,
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
#[serde(deny_unknown_fields, tag = "mode", rename_all = "lowercase")]
pub enum PartitionConfig {
    Iid,
    Noniid {
        #[serde(default = "default_major")]
        major: f64,
    },
}

fn default_major() -> f64 {
    0.6
}

impl Default for PartitionConfig {
    fn default() -> Self {
        PartitionConfig::Iid
    }
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AttackSection {
    #[serde(default)]
    pub enabled: bool,
    #[serde(default = "default_query_budget")]
    pub query_budget: usize,
    #[serde(default = "default_eval_size")]
    pub eval_size: usize,
    #[serde(default = "default_attack_epochs")]
    pub epochs: usize,
    #[serde(default = "default_attack_hidden")]
    pub hidden_channels: usize,
    #[serde(default = "default_attack_lr")]
    pub lr: f64,
    /// How many reconstructions to export as PGM/PPM files (0 = none).
    #[serde(default)]
    pub export_images: usize,
}

impl Default for AttackSection {
    fn default() -> Self {
        serde_json::from_str("{}").expect("defaults")
    }
}

fn default_query_budget() -> usize {
    1000
}

fn default_eval_size() -> usize {
    200
}

fn default_attack_epochs() -> usize {
    30
}

fn default_attack_hidden() -> usize {
    16
}

fn default_attack_lr() -> f64 {
    2e-3
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepSection {
    /// Privacy budgets per cell; `null` entries run without noise.
    pub epsilons: Vec<Option<f64>>,
    /// Injection points per cell, e.g. `["Input", "MaxP(1)"]`.
    pub points: Vec<String>,
}

const ARCH_PRESETS: &[&str] = &["lenet5-split1", "lenet5-split2", "vgg11-lite"];
const DATASET_KINDS: &[&str] = &["synthetic", "mnist", "cifar10"];

impl ExperimentConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .with_context(|| format!("reading config {}", path.display()))?;
        let cfg: ExperimentConfig = serde_json::from_str(&text)
            .with_context(|| format!("parsing config {}", path.display()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        if !ARCH_PRESETS.contains(&self.arch.as_str()) {
            bail!("unknown arch preset {:?} (expected one of {ARCH_PRESETS:?})", self.arch);
        }
        if !DATASET_KINDS.contains(&self.dataset.kind.as_str()) {
            bail!("unknown dataset kind {:?}", self.dataset.kind);
        }
        if self.dataset.kind != "synthetic" && self.dataset.dir.is_none() {
            bail!("dataset kind {:?} requires a dir", self.dataset.kind);
        }
        if !(self.width_scale > 0.0 && self.width_scale <= 1.0) {
            bail!("width_scale {} out of (0, 1]", self.width_scale);
        }
        if self.clients == 0 {
            bail!("need at least one client");
        }
        if self.seeds.is_empty() {
            bail!("seed list must be nonempty");
        }
        if self.epochs == 0 || self.batch_size == 0 {
            bail!("epochs and batch_size must be positive");
        }
        if !(self.base_lr > 0.0) {
            bail!("base_lr must be positive");
        }
        for p in &self.privacy {
            if p.client >= self.clients {
                bail!("privacy entry for client {} out of range", p.client);
            }
            if !(p.epsilon > 0.0) || !(p.delta > 0.0 && p.delta < 1.0) || !(p.sensitivity > 0.0) {
                bail!("invalid privacy budget for client {}", p.client);
            }
        }
        let mut ids: Vec<usize> = self.privacy.iter().map(|p| p.client).collect();
        ids.sort_unstable();
        ids.dedup();
        if ids.len() != self.privacy.len() {
            bail!("duplicate privacy entries");
        }
        if let Some(sweep) = &self.sweep {
            if sweep.epsilons.is_empty() || sweep.points.is_empty() {
                bail!("sweep grids must be nonempty");
            }
        }
        Ok(())
    }

    /// Budget (if any) configured for a client id.
    pub fn budget_for(&self, client: usize) -> Option<&ClientPrivacy> {
        self.privacy.iter().find(|p| p.client == client)
    }

    /// Stable FNV-1a hash of the canonical JSON serialization.
    pub fn hash(&self) -> String {
        let text = serde_json::to_string(self).expect("config serializes");
        let mut h: u64 = 0xcbf2_9ce4_8422_2325;
        for b in text.as_bytes() {
            h ^= u64::from(*b);
            h = h.wrapping_mul(0x0000_0100_0000_01b3);
        }
        format!("{h:016x}")
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn minimal() -> serde_json::Value {
        serde_json::json!({
            "arch": "lenet5-split1",
            "dataset": {"kind": "synthetic"},
            "clients": 2,
            "epochs": 1,
            "base_lr": 0.001,
            "seeds": [0]
        })
    }

    fn parse(v: serde_json::Value) -> Result<ExperimentConfig> {
        let cfg: ExperimentConfig = serde_json::from_value(v)?;
        cfg.validate()?;
        Ok(cfg)
    }

    #[test]
    fn minimal_config_parses_with_defaults() {
        let cfg = parse(minimal()).unwrap();
        assert_eq!(cfg.batch_size, 64);
        assert_eq!(cfg.dataset.train_subset, 10_000);
        assert!(cfg.cosine_schedule);
        assert!(!cfg.review.enabled);
    }

    #[test]
    fn unknown_fields_are_rejected() {
        let mut v = minimal();
        v["banana"] = 1.into();
        assert!(parse(v).is_err());
    }

    #[test]
    fn semantic_validation_catches_bad_values() {
        let mut v = minimal();
        v["arch"] = "resnet".into();
        assert!(parse(v).is_err());

        let mut v = minimal();
        v["seeds"] = serde_json::json!([]);
        assert!(parse(v).is_err());

        let mut v = minimal();
        v["privacy"] = serde_json::json!([{"client": 5, "epsilon": 2.0}]);
        assert!(parse(v).is_err());

        let mut v = minimal();
        v["privacy"] =
            serde_json::json!([{"client": 0, "epsilon": 2.0}, {"client": 0, "epsilon": 3.0}]);
        assert!(parse(v).is_err());

        let mut v = minimal();
        v["dataset"]["kind"] = "mnist".into(); // requires dir
        assert!(parse(v).is_err());
    }

    #[test]
    fn hash_is_stable_and_sensitive() {
        let a = parse(minimal()).unwrap();
        let b = parse(minimal()).unwrap();
        assert_eq!(a.hash(), b.hash());
        let mut v = minimal();
        v["epochs"] = 2.into();
        assert_ne!(parse(v).unwrap().hash(), a.hash());
    }
}
