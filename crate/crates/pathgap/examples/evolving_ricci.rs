//! An evolving metric whose curvature form vanishes identically.
//!
//! The sphere expanding as phi^2(t) = 1 + (d-1)t absorbs its own Ricci
//! curvature into the metric's time derivative, so the drift-curvature form
//! that controls every bound is identically zero. The gap bound then
//! collapses to 1 at every horizon, as in flat space, and the variance check
//! saturates for linear functionals of the endpoint.

use pathgap::bounds::SearchPolicy;
use pathgap::functional::{BaseFunction, CylindricalFunction};
use pathgap::geometry::{self, DriftField, ManifoldModel, ScaleLaw};
use pathgap::optimize::tilde_h;
use pathgap::pathsim::{simulate, SimConfig};
use pathgap::verify::check_poincare;

fn main() {
    let model = ManifoldModel::EvolvingSphere { dim: 2, scale: ScaleLaw { c0: 1.0, rate: 1.0 } };
    let t_max = 0.5;

    let cert = geometry::pinching(&model, &DriftField::Zero, t_max).unwrap();
    println!("pinching witness: {}", cert.witness);
    let (k1, k2) = cert.as_constant().expect("vanishing form is a constant curve");
    println!("curvature form bounds: [{k1}, {k2}]");

    for i in 1..=5 {
        let t = 0.1 * i as f64;
        let bound = tilde_h(t, &cert.k1, &cert.k2, &SearchPolicy::closed_form()).unwrap();
        println!("  H({t:.1}) = {:.12}", bound.h);
    }

    let f = CylindricalFunction::single(
        t_max,
        BaseFunction::AmbientLinear { v: vec![1.0, 0.0, 0.0] },
    )
    .unwrap();
    let mut cfg = SimConfig::new(t_max, 128, 50_000, 9);
    cfg.partition_cells = 8;
    let x0 = model.base_point();
    let ens = simulate(&model, &DriftField::Zero, &x0, &cfg, &[t_max]).unwrap();
    let bound = tilde_h(t_max, &cert.k1, &cert.k2, &SearchPolicy::closed_form()).unwrap();
    let check = check_poincare(&f, &ens, &bound).unwrap();
    println!();
    println!(
        "variance {:.6} vs H * energy {:.6}: {}",
        check.lhs.mean, check.rhs.mean, check.verdict
    );
}
