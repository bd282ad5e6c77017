use std::path::PathBuf;
use std::process::ExitCode;

use clap::Parser;
use toomio::experiment::{run_experiment, Analyses, ExperimentConfig};
use toomio::Error;

/// Run a multiplication I/O experiment described by a JSON config.
#[derive(Parser, Debug)]
#[command(name = "toomio", version, about)]
struct Args {
    /// Experiment config (JSON).
    #[arg(long)]
    config: PathBuf,
    /// Directory for the CSV outputs.
    #[arg(long, default_value = "out")]
    out: PathBuf,
    /// Overrides the config seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Comma-separated analyses to run instead of the config's toggles:
    /// simulate, bounds, census, lemmas, parallel.
    #[arg(long)]
    analyses: Option<String>,
}

fn load(args: &Args) -> Result<ExperimentConfig, Error> {
    let mut cfg = ExperimentConfig::load(&args.config)?;
    if let Some(seed) = args.seed {
        cfg.seed = seed;
    }
    if let Some(list) = &args.analyses {
        cfg.analyses = Analyses::from_list(list)?;
    }
    cfg.validate()?;
    Ok(cfg)
}

fn main() -> ExitCode {
    let args = Args::parse();
    let cfg = match load(&args) {
        Ok(c) => c,
        Err(e) => {
            eprintln!("config error: {e}");
            return ExitCode::from(2);
        }
    };
    let summary = match run_experiment(&cfg, &args.out) {
        Ok(s) => s,
        Err(e @ Error::Config(_)) => {
            eprintln!("config error: {e}");
            return ExitCode::from(2);
        }
        Err(e) => {
            eprintln!("error: {e}");
            return ExitCode::from(1);
        }
    };
    for s in &summary.stats {
        let r = |x: Option<f64>| x.map(|v| format!("{v:.3}")).unwrap_or_else(|| "-".into());
        println!(
            "{:<9} rows={:<6} ratio min/median/max = {}/{}/{} violations={}",
            s.analysis,
            s.rows,
            r(s.min),
            r(s.median),
            r(s.max),
            s.violations
        );
    }
    if summary.lemma_instances > 0 {
        println!("lemma instances={} failures={}", summary.lemma_instances, summary.lemma_failures);
    }
    for f in &summary.files {
        println!("wrote {}", f.display());
    }
    for v in summary.violations.iter().take(20) {
        eprintln!("violation [{}] {}: {}", v.analysis, v.run_id, v.detail);
    }
    if summary.ok() {
        ExitCode::SUCCESS
    } else {
        ExitCode::from(1)
    }
}
