//! Experiment families: heterogeneous-privacy multi-client training,
//! layerwise trade-off sweeps, standalone attacks, and communication audits.

use std::path::Path;
use std::time::Instant;

use anyhow::{bail, Context, Result};
use serde::Serialize;
use splitsim::attack::{run_attack, write_pnm, AttackConfig};
use splitsim::data::{
    load_cifar10, load_idx, partition_iid, partition_noniid, stratified_subset, synthesize,
    Dataset, SplitTag,
};
use splitsim::dp::{InjectionPoint, PrivacyBudget};
use splitsim::nn::cosine_lr;
use splitsim::protocol::{
    evaluate_client, run_global_epoch, ClientState, ProtocolRng, ReviewPolicy, ReviewTarget,
    ServerState,
};
use splitsim::seed::stream_rng;
use splitsim::zoo::{
    build_lenet5, build_upsampled_client, build_vgg11_lite, LeNetSplit, SplitModelSpec,
};
use splitsim::{ChaCha8Rng, Tensor};

use crate::config::{ClientPrivacy, DatasetConfig, ExperimentConfig, PartitionConfig};
use crate::report::{ClientReport, RunReport};

const TEST_SEED_OFFSET: u64 = 0x5eed_7e57;

/// Input geometry implied by an architecture preset.
pub fn input_shape_for(arch: &str) -> (usize, usize, usize) {
    match arch {
        "vgg11-lite" => (3, 32, 32),
        _ => (1, 28, 28),
    }
}

/// Builds the (possibly upsampled) split spec for a config, seeded.
pub fn build_spec(cfg: &ExperimentConfig, rng: &mut ChaCha8Rng) -> Result<SplitModelSpec> {
    let base = match cfg.arch.as_str() {
        "lenet5-split1" => build_lenet5(LeNetSplit::Split1, rng),
        "lenet5-split2" => build_lenet5(LeNetSplit::Split2, rng),
        "vgg11-lite" => build_vgg11_lite(cfg.width_scale, rng)?,
        other => bail!("unknown arch preset {other:?}"),
    };
    Ok(if cfg.upsampled {
        build_upsampled_client(&base, rng)?
    } else {
        base
    })
}

/// Loads (train, test) per the dataset config. Desk-scale subsets apply
/// unless `full_scale` is set; the synthetic generator produces exactly the
/// requested subset sizes.
pub fn load_dataset(
    ds: &DatasetConfig,
    arch: &str,
    full_scale: bool,
) -> Result<(Dataset, Dataset)> {
    match ds.kind.as_str() {
        "synthetic" => {
            let shape = ds.image.unwrap_or_else(|| input_shape_for(arch));
            let train_pc = (ds.train_subset / ds.classes).max(1);
            let test_pc = (ds.test_subset / ds.classes).max(1);
            let train = synthesize(ds.classes, train_pc, shape, ds.data_seed)?;
            let mut test = synthesize(
                ds.classes,
                test_pc,
                shape,
                ds.data_seed.wrapping_add(TEST_SEED_OFFSET),
            )?;
            test.split = SplitTag::Test;
            Ok((train, test))
        }
        "mnist" => {
            let dir = ds.dir.as_ref().context("mnist requires dataset.dir")?;
            let train = load_idx(
                &dir.join("train-images-idx3-ubyte"),
                &dir.join("train-labels-idx1-ubyte"),
            )?;
            let mut test = load_idx(
                &dir.join("t10k-images-idx3-ubyte"),
                &dir.join("t10k-labels-idx1-ubyte"),
            )?;
            test.split = SplitTag::Test;
            subset_pair(train, test, ds, full_scale)
        }
        "cifar10" => {
            let dir = ds.dir.as_ref().context("cifar10 requires dataset.dir")?;
            let batches: Vec<_> = (1..=5).map(|i| dir.join(format!("data_batch_{i}.bin"))).collect();
            let train = load_cifar10(&batches)?;
            let mut test = load_cifar10(&[dir.join("test_batch.bin")])?;
            test.split = SplitTag::Test;
            subset_pair(train, test, ds, full_scale)
        }
        other => bail!("unknown dataset kind {other:?}"),
    }
}

fn subset_pair(
    train: Dataset,
    test: Dataset,
    ds: &DatasetConfig,
    full_scale: bool,
) -> Result<(Dataset, Dataset)> {
    if full_scale {
        return Ok((train, test));
    }
    let sub_train = stratified_subset(&train, ds.train_subset.min(train.len()), ds.data_seed)?;
    let mut sub_test =
        stratified_subset(&test, ds.test_subset.min(test.len()), ds.data_seed.wrapping_add(1))?;
    sub_test.split = SplitTag::Test;
    Ok((sub_train, sub_test))
}

fn budget_of(p: &ClientPrivacy) -> Result<PrivacyBudget> {
    Ok(PrivacyBudget::new(p.epsilon, p.delta, p.sensitivity)?)
}

fn review_policy(cfg: &ExperimentConfig) -> ReviewPolicy {
    ReviewPolicy {
        enabled: cfg.review.enabled,
        target: match cfg.review.fixed_sigma {
            Some(v) => ReviewTarget::Fixed(v),
            None => ReviewTarget::MaxOverClients,
        },
    }
}

fn injection_point(cfg: &ExperimentConfig, spec: &SplitModelSpec) -> InjectionPoint {
    match cfg.injection_point.as_deref() {
        Some("Input") => InjectionPoint::Input,
        Some(name) => InjectionPoint::AfterLayer(name.to_string()),
        None => spec.noise_point.clone(),
    }
}

/// A trained multi-client state, kept so callers can evaluate, attack, or
/// checkpoint the result.
pub struct TrainedRun {
    pub spec: SplitModelSpec,
    pub clients: Vec<ClientState>,
    pub server: ServerState,
    pub report: RunReport,
}

/// Trains one multi-client run for one seed and evaluates every client's
/// composed model on the test split under its own noise configuration.
pub fn run_multiclient(
    cfg: &ExperimentConfig,
    seed: u64,
    full_scale: bool,
) -> Result<TrainedRun> {
    let started = Instant::now();
    let (train, test) = load_dataset(&cfg.dataset, &cfg.arch, full_scale)?;
    let mut init_rng = stream_rng(seed, "model-init");
    let spec = build_spec(cfg, &mut init_rng)?;
    let point = injection_point(cfg, &spec);

    let shards = match cfg.partition {
        PartitionConfig::Iid => partition_iid(&train, cfg.clients, seed)?,
        PartitionConfig::Noniid { major } => partition_noniid(&train, cfg.clients, major, seed)?,
    };
    let mut clients = Vec::with_capacity(cfg.clients);
    for (i, shard) in shards.into_iter().enumerate() {
        let budget = cfg.budget_for(i).map(budget_of).transpose()?;
        clients.push(ClientState::new(i, &spec, budget, point.clone(), shard)?);
    }
    let mut server = ServerState::new(spec.server_part(), review_policy(cfg));

    let mut prng = ProtocolRng::from_seed(seed);
    let mut bytes_up_per_epoch = Vec::with_capacity(cfg.epochs);
    let mut bytes_down_per_epoch = Vec::with_capacity(cfg.epochs);
    let mut totals: Vec<(u64, u64)> = vec![(0, 0); cfg.clients];
    for epoch in 0..cfg.epochs {
        let lr = if cfg.cosine_schedule {
            cosine_lr(epoch, cfg.epochs, cfg.base_lr)?
        } else {
            cfg.base_lr
        };
        let ep = run_global_epoch(&mut clients, &mut server, lr, cfg.batch_size, &mut prng)?;
        bytes_up_per_epoch.push(ep.per_client.iter().map(|c| c.bytes_up).sum());
        bytes_down_per_epoch.push(ep.per_client.iter().map(|c| c.bytes_down).sum());
        for c in &ep.per_client {
            totals[c.id].0 += c.bytes_up;
            totals[c.id].1 += c.bytes_down;
        }
    }

    let mut eval_rng = stream_rng(seed, "eval-noise");
    let mut client_reports = Vec::with_capacity(cfg.clients);
    for client in &clients {
        let accuracy = evaluate_client(client, &server, &test, cfg.batch_size, &mut eval_rng)?;
        client_reports.push(ClientReport {
            client_id: client.id,
            epsilon: client.budget.as_ref().map(|b| b.epsilon),
            sigma: client.noise.sigma,
            injection_point: client.noise.point.to_string(),
            accuracy: Some(accuracy),
            ssim: None,
            dissimilarity: None,
            bytes_up: totals[client.id].0,
            bytes_down: totals[client.id].1,
        });
    }

    if let Some(atk) = cfg.attack.filter(|a| a.enabled) {
        for (i, cr) in client_reports.iter_mut().enumerate() {
            let scores = attack_client(&clients[i], &test, &atk, seed, None)?;
            cr.ssim = Some(scores.0);
            cr.dissimilarity = Some(scores.1);
        }
    }

    let report = RunReport {
        seed,
        arch: spec.arch_name.clone(),
        review: cfg.review.enabled,
        clients: client_reports,
        bytes_up_per_epoch,
        bytes_down_per_epoch,
        wall_time_secs: started.elapsed().as_secs_f64(),
        config_hash: cfg.hash(),
    };
    Ok(TrainedRun { spec, clients, server, report })
}

/// The client's head followed by the server tail as one graph, carrying the
/// trained parameters of both.
pub fn composed_graph(
    client: &ClientState,
    server: &ServerState,
) -> Result<splitsim::nn::ModelGraph> {
    let mut layers = client.part.layers().to_vec();
    layers.extend_from_slice(server.part.layers());
    Ok(splitsim::nn::ModelGraph::new(
        client.part.input_shape().to_vec(),
        layers,
    )?)
}

/// Runs the inversion attack against one client's head using query samples
/// and a disjoint eval slice from the test split. Returns (ssim, 1 - ssim).
pub fn attack_client(
    victim: &ClientState,
    test: &Dataset,
    atk: &crate::config::AttackSection,
    seed: u64,
    export_dir: Option<&Path>,
) -> Result<(f64, f64)> {
    let m = atk.query_budget.min(test.len().saturating_sub(atk.eval_size).max(1));
    let query = test.images.slice_rows(0, m)?;
    let eval_len = atk.eval_size.min(test.len() - m);
    if eval_len == 0 {
        bail!("test split too small for a disjoint attack eval set");
    }
    let eval = test.images.slice_rows(m, eval_len)?;
    let cfg = AttackConfig {
        hidden_channels: atk.hidden_channels,
        epochs: atk.epochs,
        lr: atk.lr,
        batch_size: 32,
    };
    let mut oracle_rng = stream_rng(seed, "attack-oracle");
    let mut oracle = |x: &Tensor| victim.forward_infer(x, &mut oracle_rng);
    let mut train_rng = stream_rng(seed, "attack-train");
    let report = run_attack(&mut oracle, &query, &eval, &cfg, &mut train_rng)?;
    if let Some(dir) = export_dir {
        std::fs::create_dir_all(dir)?;
        let shape = eval.shape()[1..].to_vec();
        let ext = if shape[0] == 3 { "ppm" } else { "pgm" };
        for i in 0..atk.export_images.min(eval.batch()) {
            let rec = report.reconstructions.slice_rows(i, 1)?.reshape(shape.clone())?;
            write_pnm(&rec, &dir.join(format!("recon-{i:03}.{ext}")))?;
            let orig = eval.slice_rows(i, 1)?.reshape(shape.clone())?;
            write_pnm(&orig, &dir.join(format!("orig-{i:03}.{ext}")))?;
        }
    }
    Ok((report.mean_ssim, report.mean_dissimilarity))
}

/// One sweep cell: a single client trained at (point, ε), then attacked.
/// Returns a run report whose single client row carries accuracy and SSIM.
pub fn run_tradeoff_cell(
    cfg: &ExperimentConfig,
    point: &str,
    epsilon: Option<f64>,
    seed: u64,
    full_scale: bool,
) -> Result<RunReport> {
    let mut cell = cfg.clone();
    cell.clients = 1;
    cell.privacy = epsilon
        .map(|e| {
            vec![ClientPrivacy {
                client: 0,
                epsilon: e,
                delta: 1e-5,
                sensitivity: 1.0,
            }]
        })
        .unwrap_or_default();
    cell.injection_point = Some(point.to_string());
    cell.review.enabled = false;
    let trained = run_multiclient(&cell, seed, full_scale)?;

    let atk = cfg.attack.unwrap_or_default();
    let (_, test) = load_dataset(&cfg.dataset, &cfg.arch, full_scale)?;
    let (ssim, dissim) = attack_client(&trained.clients[0], &test, &atk, seed, None)?;
    let mut report = trained.report;
    report.clients[0].ssim = Some(ssim);
    report.clients[0].dissimilarity = Some(dissim);
    Ok(report)
}

/// The full sweep: every (point, ε) cell for one seed.
pub fn run_tradeoff_sweep(
    cfg: &ExperimentConfig,
    seed: u64,
    full_scale: bool,
) -> Result<Vec<RunReport>> {
    let sweep = cfg.sweep.clone().context("config has no sweep section")?;
    let mut out = Vec::new();
    for point in &sweep.points {
        for eps in &sweep.epsilons {
            out.push(run_tradeoff_cell(cfg, point, *eps, seed, full_scale)?);
        }
    }
    Ok(out)
}

/// One communication-audit row.
#[derive(Debug, Clone, Serialize)]
pub struct AuditRow {
    pub arch: String,
    pub upsampled: bool,
    pub smashed_elements: usize,
    pub input_elements: usize,
    /// smashed / input element ratio; exactly 1.0 for the upsampled head.
    pub ratio: f64,
    pub bytes_up_per_epoch: u64,
    pub note: String,
}

/// Shape-arithmetic audit of the configured architecture, both baseline and
/// upsampled variants.
pub fn run_comm_audit(cfg: &ExperimentConfig, full_scale: bool) -> Result<Vec<AuditRow>> {
    let (train, _) = load_dataset(&cfg.dataset, &cfg.arch, full_scale)?;
    let n = train.len();
    let mut rows = Vec::new();
    for upsampled in [false, true] {
        let mut variant = cfg.clone();
        variant.upsampled = upsampled;
        let mut rng = stream_rng(0, "audit");
        let spec = build_spec(&variant, &mut rng)?;
        let smashed: usize = spec.smashed_shape().iter().product();
        let input: usize = spec.graph.input_shape().iter().product();
        // Every sample is transmitted once per epoch: features plus one label
        // word per sample (8 bytes each).
        let bytes_up_per_epoch = 8 * (n * smashed + n) as u64;
        let note = if cfg.arch == "vgg11-lite" && !upsampled {
            "full-scale reference: smashed 32x16x32, ~5.3x the 3x32x32 input".to_string()
        } else {
            String::new()
        };
        rows.push(AuditRow {
            arch: spec.arch_name.clone(),
            upsampled,
            smashed_elements: smashed,
            input_elements: input,
            ratio: smashed as f64 / input as f64,
            bytes_up_per_epoch,
            note,
        });
    }
    Ok(rows)
}

/// Renders audit rows as CSV (deterministic row order by construction).
pub fn audit_csv(rows: &[AuditRow]) -> String {
    let mut out = String::from(
        "arch,upsampled,smashed_elements,input_elements,ratio,bytes_up_per_epoch,note\n",
    );
    for r in rows {
        out.push_str(&format!(
            "{},{},{},{},{:.6},{},{}\n",
            r.arch, r.upsampled, r.smashed_elements, r.input_elements, r.ratio,
            r.bytes_up_per_epoch, r.note
        ));
    }
    out
}
