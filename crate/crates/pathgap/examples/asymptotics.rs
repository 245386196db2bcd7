//! Short-horizon behaviour of the bound: H(T) = 1 + aT + c2 T^2 + O(T^3).
//!
//! The table compares the exact bound against the quadratic polynomial on a
//! shrinking grid, then fits the T^2 coefficient of each branch by least
//! squares to show the product branch's smaller curvature term.

use pathgap::bounds::{branch_t2_coefficients, first_order_coefficient, ConstantPinching};
use pathgap::experiment::compare_asymptotics;

/// Least-squares slope of (y - 1 - a t) against t^2.
fn fit_t2(ts: &[f64], ys: &[f64], a: f64) -> f64 {
    let num: f64 = ts.iter().zip(ys).map(|(&t, &y)| (y - 1.0 - a * t) * t * t).sum();
    let den: f64 = ts.iter().map(|&t| t.powi(4)).sum();
    num / den
}

fn main() {
    let grid: Vec<f64> = (1..=20).map(|i| 0.005 * i as f64).collect();
    for (k1, k2) in [(0.0, 1.0), (-2.0, 1.0), (0.0, 0.0)] {
        let pin = ConstantPinching::new(k1, k2).unwrap();
        let rows = compare_asymptotics(k1, k2, &grid).unwrap();
        println!("pinching [{k1}, {k2}]");
        println!(
            "{:>8} {:>12} {:>12} {:>12} {:>12} {:>12}",
            "T", "H", "single", "product", "poly", "resid/T^2"
        );
        for row in rows.iter().step_by(4) {
            println!(
                "{:8.4} {:12.8} {:12.8} {:12.8} {:12.8} {:12.3e}",
                row.t, row.h, row.fang_wu, row.product, row.polynomial, row.residual_over_t2
            );
        }
        let a = first_order_coefficient(&pin);
        let (c2_single, c2_product) = branch_t2_coefficients(&pin);
        let fit_single = fit_t2(&grid, &rows.iter().map(|r| r.fang_wu).collect::<Vec<_>>(), a);
        let fit_product = fit_t2(&grid, &rows.iter().map(|r| r.product).collect::<Vec<_>>(), a);
        println!("  single  branch T^2 coefficient: fitted {fit_single:.6}, closed form {c2_single:.6}");
        println!("  product branch T^2 coefficient: fitted {fit_product:.6}, closed form {c2_product:.6}");
        println!();
    }
}
