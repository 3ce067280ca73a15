//! `train`: drive the interleaved style/resolution loop against a manifest.

use crate::overrides;
use std::path::PathBuf;
use vhs2hdtv_core::data::DatasetManifest;
use vhs2hdtv_core::losses::LossReport;
use vhs2hdtv_core::trainer::{TrainConfig, Trainer};
use vhs2hdtv_core::{Error, Result};

#[derive(clap::Args)]
pub struct Args {
    /// Dataset manifest produced by `prepare`.
    #[arg(long)]
    pub manifest: PathBuf,
    /// Run directory for the echoed config, loss log, and checkpoints.
    #[arg(long, value_name = "DIR")]
    pub run_dir: PathBuf,
    /// Base config as a JSON file (defaults plus overrides otherwise).
    #[arg(long, conflicts_with = "preset")]
    pub config: Option<PathBuf>,
    /// Built-in baseline: `default` (full-scale) or `desk` (minutes-scale).
    #[arg(long, default_value = "default")]
    pub preset: String,
    /// Dotted-path config override, e.g. `weights.lambda_cyc=0.2` or
    /// `res_steps_per_cycle_step=0`. Repeatable.
    #[arg(long = "override", value_name = "KEY=VALUE")]
    pub overrides: Vec<String>,
    /// Cycles to run in this invocation (default: the config's `cycles`).
    #[arg(long)]
    pub cycles: Option<usize>,
    /// Continue the run directory from its latest checkpoint, reusing the
    /// stored config.
    #[arg(long, conflicts_with_all = ["config", "overrides"])]
    pub resume: bool,
}

fn load_config(args: &Args) -> Result<TrainConfig> {
    let mut value = match &args.config {
        Some(path) => {
            let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
            serde_json::from_str(&text)?
        }
        None => {
            let base = match args.preset.as_str() {
                "default" => TrainConfig::default(),
                "desk" => TrainConfig::desk(),
                other => {
                    return Err(Error::Config(format!(
                        "--preset must be `default` or `desk`, got `{}`",
                        other
                    )))
                }
            };
            serde_json::to_value(base)?
        }
    };
    overrides::apply(&mut value, &args.overrides)?;
    let cfg: TrainConfig = overrides::into_config(value)?;
    cfg.validate()?;
    Ok(cfg)
}

pub fn run(args: Args) -> Result<()> {
    let manifest = DatasetManifest::load(&args.manifest)?;
    let mut trainer = if args.resume {
        Trainer::resume(&args.run_dir)?
    } else {
        Trainer::new(load_config(&args)?)?
    };
    let cycles = args.cycles.unwrap_or(trainer.cfg().cycles);
    let final_ckpt = trainer.run(&manifest, &args.run_dir, cycles)?;
    println!(
        "trained {} cycle(s); run directory {}",
        cycles,
        args.run_dir.display()
    );
    if let Some(report) = last_report(&args.run_dir) {
        println!(
            "last cycle: total_g={:.6} cyc={:.6} perc={:.6}",
            report.total_g, report.cyc, report.perc
        );
    }
    println!("final checkpoint {}", final_ckpt.display());
    Ok(())
}

fn last_report(run_dir: &std::path::Path) -> Option<LossReport> {
    let text = std::fs::read_to_string(run_dir.join("log.jsonl")).ok()?;
    serde_json::from_str(text.lines().rev().find(|l| !l.trim().is_empty())?).ok()
}
