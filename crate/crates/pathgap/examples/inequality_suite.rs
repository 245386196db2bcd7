//! Variance and entropy inequalities across the model zoo.
//!
//! For each model the example simulates one ensemble, evaluates the bound at
//! the same horizon, and prints the two check verdicts for a functional of
//! the endpoint. Monte-Carlo can refute an inequality but never prove one:
//! `pass` here means "consistent with the bound at three standard errors".

use pathgap::bounds::SearchPolicy;
use pathgap::functional::{BaseFunction, CylindricalFunction};
use pathgap::geometry::{self, DriftField, ManifoldModel};
use pathgap::optimize::tilde_h;
use pathgap::pathsim::{simulate, SimConfig};
use pathgap::verify::{check_log_sobolev, check_poincare};

fn main() {
    let t_max = 1.0;
    let suite: Vec<(&str, ManifoldModel, DriftField, BaseFunction)> = vec![
        (
            "sphere S^2",
            ManifoldModel::Sphere { dim: 2, radius: 1.0 },
            DriftField::Zero,
            BaseFunction::ExpLinear { v: vec![0.5, 0.0, 0.0] },
        ),
        (
            "hyperbolic H^2",
            ManifoldModel::Hyperbolic { dim: 2, curvature: -1.0 },
            DriftField::Zero,
            BaseFunction::Bump { center: vec![1.0, 0.0, 0.0], width: 1.0 },
        ),
        (
            "flat OU",
            ManifoldModel::Euclidean { dim: 2 },
            DriftField::ornstein_uhlenbeck(2),
            BaseFunction::ExpLinear { v: vec![0.5, 0.0] },
        ),
    ];

    println!("{:<16} {:>10} {:>14} {:>14}", "model", "H", "poincare", "log-sobolev");
    for (label, model, drift, base) in suite {
        let cert = geometry::pinching(&model, &drift, t_max).unwrap();
        let bound = tilde_h(t_max, &cert.k1, &cert.k2, &SearchPolicy::closed_form()).unwrap();

        let f = CylindricalFunction::single(t_max, base).unwrap();
        let mut cfg = SimConfig::new(t_max, 256, 30_000, 4);
        cfg.partition_cells = 8;
        let x0 = model.base_point();
        let ens = simulate(&model, &drift, &x0, &cfg, &[t_max]).unwrap();

        let poincare = check_poincare(&f, &ens, &bound).unwrap();
        let log_sobolev = check_log_sobolev(&f, &ens, &bound).unwrap();
        println!(
            "{label:<16} {:>10.6} {:>14} {:>14}",
            bound.h,
            poincare.verdict.to_string(),
            log_sobolev.verdict.to_string()
        );
    }
}
