//! The variance bound is sharp on flat space: for F = <v, path(T)> the
//! variance and the Dirichlet energy are both T |v|^2 and H = 1, so the
//! Rayleigh ratio sits at the bound.

use pathgap::bounds::{h_bound, ConstantPinching, SearchPolicy};
use pathgap::functional::{BaseFunction, CylindricalFunction};
use pathgap::geometry::{DriftField, ManifoldModel};
use pathgap::pathsim::{simulate, SimConfig};
use pathgap::verify::{check_poincare, rayleigh_quotient};

fn main() {
    let model = ManifoldModel::Euclidean { dim: 2 };
    let t_max = 1.0;
    let f = CylindricalFunction::single(
        t_max,
        BaseFunction::AmbientLinear { v: vec![1.0, 0.0] },
    )
    .unwrap();
    let cfg = SimConfig::new(t_max, 128, 100_000, 33);
    let ens = simulate(&model, &DriftField::Zero, &[0.0, 0.0], &cfg, &[t_max]).unwrap();

    let pin = ConstantPinching::new(0.0, 0.0).unwrap();
    let bound = h_bound(t_max, &pin, &SearchPolicy::closed_form()).unwrap();
    let rq = rayleigh_quotient(&f, &ens).unwrap();
    let check = check_poincare(&f, &ens, &bound).unwrap();

    println!("variance          = {:.6} +- {:.6}  (exact: {t_max})", rq.variance.mean, rq.variance.std_error);
    println!("dirichlet energy  = {:.6} +- {:.6}  (exact: {t_max})", rq.energy.mean, rq.energy.std_error);
    println!("H                 = {:.6}            (flat: exactly 1)", bound.h);
    println!("ratio / H         = {:.6} +- {:.6}", rq.ratio / bound.h, rq.ratio_std_error / bound.h);
    println!("verdict           = {}", check.verdict);
}
