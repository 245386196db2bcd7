//! Command-line front end: load a JSON experiment config (or a packaged
//! scenario), run it, print one line per check, and exit with
//! 0 = clean, 1 = a check failed, 2 = bad config, 3 = budget exceeded.

use clap::Parser;
use pathgap::experiment::{self, ExperimentConfig, RunOptions};
use std::path::PathBuf;
use std::process::ExitCode;

#[derive(Parser)]
#[command(name = "pathgap", version, about = "Gap-bound tables and Monte-Carlo inequality checks")]
struct Cli {
    /// Path to a JSON experiment config, or `builtin:NAME` for a packaged
    /// scenario (see --list-scenarios)
    #[arg(long, required_unless_present = "list_scenarios")]
    config: Option<String>,
    /// Replace the base seed from the config
    #[arg(long)]
    seed_override: Option<u64>,
    /// Replace the path count from the config
    #[arg(long)]
    paths_override: Option<u32>,
    /// Directory the report files are written to
    #[arg(long, default_value = "out")]
    out_dir: PathBuf,
    /// Evaluate the bound tables only; skip every simulation
    #[arg(long)]
    bounds_only: bool,
    /// List the packaged scenario names and exit
    #[arg(long)]
    list_scenarios: bool,
}

fn load(spec: &str) -> Result<ExperimentConfig, String> {
    if let Some(name) = spec.strip_prefix("builtin:") {
        return experiment::builtin(name)
            .ok_or_else(|| format!("no packaged scenario named '{name}'; try --list-scenarios"));
    }
    let text = std::fs::read_to_string(spec).map_err(|e| format!("{spec}: {e}"))?;
    ExperimentConfig::from_json(&text).map_err(|e| format!("{spec}: {e}"))
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    if cli.list_scenarios {
        for (name, blurb) in experiment::builtin_scenarios() {
            println!("{name:<18} {blurb}");
        }
        return ExitCode::SUCCESS;
    }
    let cfg = match load(cli.config.as_deref().expect("clap enforces --config")) {
        Ok(cfg) => cfg,
        Err(msg) => {
            eprintln!("config error: {msg}");
            return ExitCode::from(2);
        }
    };
    let opts = RunOptions {
        out_dir: cli.out_dir,
        bounds_only: cli.bounds_only,
        seed_override: cli.seed_override,
        paths_override: cli.paths_override,
    };
    match experiment::run(&cfg, &opts) {
        Ok(outcome) => {
            for line in &outcome.check_lines {
                println!("{line}");
            }
            println!(
                "{}: {} bound rows, {} checks ({} failed, {} inconclusive) -> {}",
                cfg.name,
                outcome.bounds_rows,
                outcome.checks_run,
                outcome.failures,
                outcome.inconclusive,
                opts.out_dir.display(),
            );
            ExitCode::from(outcome.exit_code())
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
