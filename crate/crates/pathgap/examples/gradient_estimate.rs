//! Pointwise gradient estimate for the heat semigroup on the sphere.
//!
//! f = x^1 is an eigenfunction, so everything is explicit: from a start
//! point with first coordinate a, the semigroup gradient satisfies
//! |grad P_t f|^2 = (1 - a^2) e^{-2t}, while the right-hand side carries
//! e^{-t} times the smoothed |grad f|^2. The check estimates the left side
//! by coupled finite differences and must never read a violation.

use pathgap::geometry::{DriftField, ManifoldModel};
use pathgap::verify::{check_gradient_estimate, ProbeParams};

fn main() {
    let model = ManifoldModel::Sphere { dim: 2, radius: 1.0 };
    let a = std::f64::consts::FRAC_1_SQRT_2;
    let start = vec![a, 0.0, a];
    // commutation rate from the k-average convention, (k1 + k2)/4
    let c = 0.5;

    println!("{:>6} {:>12} {:>12} {:>12} {:>14}", "t", "lhs", "exact lhs", "rhs", "verdict");
    for t in [0.25, 0.5, 1.0] {
        let params = ProbeParams {
            paths: 20_000,
            steps: 160,
            seed: 71,
            start: Some(start.clone()),
            ..ProbeParams::default()
        };
        let check = check_gradient_estimate(
            &model,
            &DriftField::Zero,
            &pathgap::functional::BaseFunction::AmbientLinear { v: vec![1.0, 0.0, 0.0] },
            t,
            c,
            &params,
        )
        .unwrap();
        let exact = (1.0 - a * a) * (-2.0 * t).exp();
        println!(
            "{t:6.2} {:12.6} {exact:12.6} {:12.6} {:>14}",
            check.lhs.mean,
            check.rhs.mean,
            check.verdict.to_string()
        );
    }
    println!();
    println!("the finite-difference lhs tracks (1 - a^2) e^(-2t) with a = 1/sqrt(2)");
}
