//! Tabulate the gap bound H(T) for a few curvature pinchings.
//!
//! Both branches are printed next to the winner. The single-interval value
//! is the classical one; the product refinement takes over whenever the
//! pinching interval is wide or the horizon long.

use pathgap::bounds::{h_bound, ConstantPinching, SearchPolicy};

fn main() {
    let cases = [
        ("flat", 0.0, 0.0),
        ("round sphere", 1.0, 1.0),
        ("hyperbolic plane", -1.0, -1.0),
        ("wide nonnegative", 0.0, 2.0),
        ("mixed sign", -2.0, 1.0),
    ];
    let policy = SearchPolicy::closed_form();
    for (label, k1, k2) in cases {
        let pin = ConstantPinching::new(k1, k2).unwrap();
        println!("{label}: k1 = {k1}, k2 = {k2}");
        println!("{:>6} {:>12} {:>12} {:>12}  branch", "T", "single", "product", "H");
        for i in 1..=8 {
            let t = 0.25 * i as f64;
            let r = h_bound(t, &pin, &policy).unwrap();
            println!(
                "{t:6.2} {:12.6} {:12.6} {:12.6}  {}",
                r.fang_wu, r.product, r.h, r.branch
            );
        }
        println!();
    }

    // the commutation-rate search can only improve on the closed form
    let pin = ConstantPinching::new(-2.0, 1.0).unwrap();
    let closed = h_bound(2.0, &pin, &SearchPolicy::closed_form()).unwrap();
    let searched = h_bound(2.0, &pin, &SearchPolicy::optimize_c()).unwrap();
    println!("mixed sign at T = 2: closed form H = {:.6}", closed.h);
    println!("            searched H = {:.6} at c* = {:.4}", searched.h, searched.c_star);
}
