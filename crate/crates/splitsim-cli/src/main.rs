use std::path::PathBuf;

use anyhow::{Context, Result};
use clap::{Args, Parser, Subcommand};

use splitsim_cli::checkpoint::{load_checkpoint, save_checkpoint};
use splitsim_cli::config::ExperimentConfig;
use splitsim_cli::report::{read_report_json, write_reports, ClientReport, RunReport};
use splitsim_cli::runner;

#[derive(Parser)]
#[command(name = "splitsim", about = "Split-learning-with-DP experiment runner")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct CommonArgs {
    /// Path to the experiment config (JSON).
    #[arg(long)]
    config: PathBuf,
    /// Override the config's seed list with a single seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Output directory for reports and checkpoints.
    #[arg(long, default_value = "out")]
    out: PathBuf,
    /// Disable desk-scale dataset subsetting.
    #[arg(long)]
    full_scale: bool,
}

#[derive(Subcommand)]
enum Command {
    /// Multi-client training with per-client privacy budgets.
    Train(CommonArgs),
    /// Layerwise accuracy/leakage trade-off sweep over (point, epsilon) cells.
    Sweep(CommonArgs),
    /// Standalone inversion attack against a trained checkpoint.
    Attack {
        #[command(flatten)]
        common: CommonArgs,
        /// Checkpoint produced by `train`.
        #[arg(long)]
        checkpoint: PathBuf,
    },
    /// Communication audit: smashed/input ratios and bytes per epoch.
    Audit(CommonArgs),
    /// Merge previously written report.json files into one CSV/JSON pair.
    Report {
        /// report.json files to merge.
        #[arg(long, required = true, num_args = 1..)]
        inputs: Vec<PathBuf>,
        #[arg(long, default_value = "out")]
        out: PathBuf,
    },
}

fn seeds_of(cfg: &ExperimentConfig, over: Option<u64>) -> Vec<u64> {
    over.map(|s| vec![s]).unwrap_or_else(|| cfg.seeds.clone())
}

fn cmd_train(args: &CommonArgs) -> Result<()> {
    let cfg = ExperimentConfig::load(&args.config)?;
    std::fs::create_dir_all(&args.out)?;
    let mut reports = Vec::new();
    for seed in seeds_of(&cfg, args.seed) {
        let trained = runner::run_multiclient(&cfg, seed, args.full_scale)?;
        for client in &trained.clients {
            let composed = runner::composed_graph(client, &trained.server)?;
            let path = args.out.join(format!("checkpoint-seed{seed}-client{}.bin", client.id));
            save_checkpoint(
                &path,
                &cfg.arch,
                cfg.upsampled,
                cfg.width_scale,
                trained.spec.cut_index,
                &client.noise.point.to_string(),
                client.noise.sigma,
                client.budget.as_ref(),
                &composed,
            )?;
        }
        eprintln!(
            "seed {seed}: accuracies {:?}",
            trained
                .report
                .clients
                .iter()
                .map(|c| c.accuracy.unwrap_or(f64::NAN))
                .collect::<Vec<_>>()
        );
        reports.push(trained.report);
    }
    write_reports(&reports, &serde_json::to_value(&cfg)?, &args.out)
}

fn cmd_sweep(args: &CommonArgs) -> Result<()> {
    let cfg = ExperimentConfig::load(&args.config)?;
    let mut reports = Vec::new();
    for seed in seeds_of(&cfg, args.seed) {
        reports.extend(runner::run_tradeoff_sweep(&cfg, seed, args.full_scale)?);
    }
    write_reports(&reports, &serde_json::to_value(&cfg)?, &args.out)
}

fn cmd_attack(common: &CommonArgs, ckpt_path: &PathBuf) -> Result<()> {
    let cfg = ExperimentConfig::load(&common.config)?;
    let (spec, header) = load_checkpoint(ckpt_path)?;
    let (_, test) = runner::load_dataset(&cfg.dataset, &cfg.arch, common.full_scale)?;
    let point = match header.noise_point.as_str() {
        "Input" => splitsim::dp::InjectionPoint::Input,
        name => splitsim::dp::InjectionPoint::AfterLayer(name.to_string()),
    };
    // The victim never uses its shard here; a single-row placeholder keeps the
    // attack black-box.
    let placeholder = test.select(&[0])?;
    let victim =
        splitsim::protocol::ClientState::new(0, &spec, header.budget(), point, placeholder)?;
    let atk = cfg.attack.unwrap_or_default();
    let seed = common.seed.unwrap_or_else(|| cfg.seeds[0]);
    let recon_dir = common.out.join("reconstructions");
    let (ssim, dissim) =
        runner::attack_client(&victim, &test, &atk, seed, Some(recon_dir.as_path()))?;
    let report = RunReport {
        seed,
        arch: spec.arch_name.clone(),
        review: false,
        clients: vec![ClientReport {
            client_id: 0,
            epsilon: header.epsilon,
            sigma: header.sigma,
            injection_point: header.noise_point.clone(),
            accuracy: None,
            ssim: Some(ssim),
            dissimilarity: Some(dissim),
            bytes_up: 0,
            bytes_down: 0,
        }],
        bytes_up_per_epoch: Vec::new(),
        bytes_down_per_epoch: Vec::new(),
        wall_time_secs: 0.0,
        config_hash: cfg.hash(),
    };
    eprintln!("attack on {}: ssim {ssim:.4}, dissimilarity {dissim:.4}", ckpt_path.display());
    write_reports(&[report], &serde_json::to_value(&cfg)?, &common.out)
}

fn cmd_audit(args: &CommonArgs) -> Result<()> {
    let cfg = ExperimentConfig::load(&args.config)?;
    let rows = runner::run_comm_audit(&cfg, args.full_scale)?;
    std::fs::create_dir_all(&args.out)?;
    std::fs::write(args.out.join("audit.csv"), runner::audit_csv(&rows))?;
    std::fs::write(
        args.out.join("audit.json"),
        serde_json::to_string_pretty(&serde_json::json!({
            "config": &cfg,
            "rows": rows,
        }))?,
    )?;
    for r in &rows {
        eprintln!(
            "{} upsampled={}: smashed/input = {}/{} = {:.4} {}",
            r.arch, r.upsampled, r.smashed_elements, r.input_elements, r.ratio, r.note
        );
    }
    Ok(())
}

fn cmd_report(inputs: &[PathBuf], out: &PathBuf) -> Result<()> {
    let mut configs = Vec::new();
    let mut runs = Vec::new();
    for path in inputs {
        let (cfg, mut r) =
            read_report_json(path).with_context(|| format!("merging {}", path.display()))?;
        configs.push(cfg);
        runs.append(&mut r);
    }
    write_reports(&runs, &serde_json::Value::Array(configs), out)
}

fn main() -> Result<()> {
    match Cli::parse().command {
        Command::Train(args) => cmd_train(&args),
        Command::Sweep(args) => cmd_sweep(&args),
        Command::Attack { common, checkpoint } => cmd_attack(&common, &checkpoint),
        Command::Audit(args) => cmd_audit(&args),
        Command::Report { inputs, out } => cmd_report(&inputs, &out),
    }
}
