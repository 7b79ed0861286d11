use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{bail, Context};
use clap::Parser;
use sperl_core::experiments::{
    run_suite, ExperimentConfig, Preset, RunOptions, Suite, ARTIFACT_REVISION,
};

fn version() -> &'static str {
    Box::leak(
        format!(
            "{} (artifact revision {ARTIFACT_REVISION})",
            env!("CARGO_PKG_VERSION")
        )
        .into_boxed_str(),
    )
}

/// Run an experiment suite and write its artifacts.
#[derive(Debug, Parser)]
#[command(name = "sperl", version = version(), about)]
struct Args {
    /// mv-train, bpi-verify, q-learn or oracle-fuzz.
    #[arg(value_name = "SUITE")]
    suite_arg: Option<Suite>,

    #[arg(long, conflicts_with = "suite_arg")]
    suite: Option<Suite>,

    /// JSON experiment config; flags override its fields.
    #[arg(long)]
    config: Option<PathBuf>,

    #[arg(long)]
    seed: Option<u64>,

    /// paper or desk scale for mv-train.
    #[arg(long)]
    preset: Option<Preset>,

    /// Output directory.
    #[arg(long, default_value = "out")]
    out: PathBuf,

    /// Also write per-iteration traces.
    #[arg(long)]
    trace: bool,

    /// Worker threads for independent instances.
    #[arg(long)]
    jobs: Option<usize>,

    /// Random instances for bpi-verify and oracle-fuzz.
    #[arg(long)]
    instances: Option<usize>,

    /// Annual drift of the risky asset for mv-train.
    #[arg(long, allow_hyphen_values = true)]
    mu: Option<f64>,

    /// Path cap for oracle-fuzz enumeration.
    #[arg(long)]
    max_leaves: Option<usize>,

    /// Episode budget for q-learn.
    #[arg(long)]
    episodes: Option<usize>,
}

fn resolve(args: &Args) -> anyhow::Result<ExperimentConfig> {
    let mut config = match &args.config {
        Some(path) => ExperimentConfig::load(path)?,
        None => {
            let Some(suite) = args.suite.or(args.suite_arg) else {
                bail!("name a suite or pass --config");
            };
            ExperimentConfig::new(suite)
        }
    };
    if let Some(suite) = args.suite.or(args.suite_arg) {
        config.suite = suite;
    }
    if let Some(seed) = args.seed {
        config.seed = seed;
    }
    if let Some(preset) = args.preset {
        config.preset = preset;
    }
    if let Some(n) = args.instances {
        config.instances = n;
    }
    if args.mu.is_some() {
        config.mu = args.mu;
    }
    if args.max_leaves.is_some() {
        config.max_leaves = args.max_leaves;
    }
    if args.episodes.is_some() {
        config.episodes = args.episodes;
    }
    config.trace |= args.trace;
    Ok(config)
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let args = Args::parse();
    let run = || -> anyhow::Result<bool> {
        let config = resolve(&args)?;
        let options = RunOptions {
            out: args.out.clone(),
            jobs: args.jobs,
        };
        let report = run_suite(&config, &options)
            .with_context(|| format!("suite {} failed", config.suite))?;
        for check in &report.checks {
            println!(
                "[{}] {}: {}",
                if check.passed { "PASS" } else { "FAIL" },
                check.name,
                check.detail
            );
        }
        println!("artifacts in {}", args.out.display());
        Ok(report.passed())
    };
    match run() {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}
