//! A complete experiment from a JSON config string: bound table, checks
//! against a simulated ensemble, and the deterministic report files.
//!
//! The same schema drives the `pathgap` binary; rerunning this example
//! produces byte-identical files.

use pathgap::experiment::{run, ExperimentConfig, RunOptions};

const CONFIG: &str = r#"{
  "schema_version": 1,
  "name": "quickstart",
  "model": { "kind": "sphere", "dim": 2, "radius": 1.0 },
  "drift": { "kind": "zero" },
  "pinching": "derived",
  "sim": { "t_horizon": 1.0, "steps": 128, "n_paths": 8000, "seed": 42, "scheme": "geodesic_euler", "partition_cells": 8 },
  "functionals": [
    { "name": "height", "times": [1.0],
      "kernel": { "kind": "affine", "f": { "kind": "ambient_linear", "v": [1.0, 0.0, 0.0] }, "scale": 1.0, "offset": 0.0 } }
  ],
  "checks": [
    { "check": "rayleigh" },
    { "check": "poincare" },
    { "check": "log_sobolev" },
    { "check": "chain" }
  ],
  "bounds": { "mode": "closed_form_only", "t_grid": [0.25, 0.5, 0.75, 1.0] }
}"#;

fn main() {
    let cfg = ExperimentConfig::from_json(CONFIG).unwrap();
    let opts = RunOptions::new("out/quickstart");
    let outcome = run(&cfg, &opts).unwrap();
    for line in &outcome.check_lines {
        println!("{line}");
    }
    println!();
    println!(
        "{} bound rows, {} checks, {} failed, exit code {}",
        outcome.bounds_rows,
        outcome.checks_run,
        outcome.failures,
        outcome.exit_code()
    );
    for file in &outcome.files {
        println!("  wrote {}", file.display());
    }
}
