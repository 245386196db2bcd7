//! Spectral-gap bounds for the Ornstein-Uhlenbeck operator on Riemannian
//! path space, together with Monte-Carlo verification of the functional
//! inequalities behind them on constant-curvature model manifolds.
//!
//! The crate has two halves that meet in [`verify`]:
//!
//! * a numerics half ([`bounds`], [`optimize`]) that evaluates the explicit
//!   gap bound `H(T, k1, k2)` for a diffusion whose Bakry-Emery curvature is
//!   pinched between `k1` and `k2`, including the time-dependent variant for
//!   evolving metrics, and
//! * a simulation half ([`geometry`], [`pathsim`], [`functional`]) that runs
//!   the horizontal diffusion on spheres, hyperbolic spaces and flat space,
//!   carries frames, parallel transports and the damped-transport functional
//!   along each path, and evaluates cylindrical functionals and their three
//!   path-space gradients.
//!
//! [`verify`] turns the two halves into statistical checks (variance and
//! entropy against `H` times the Dirichlet energy, gradient estimates for the
//! semigroup, martingale decompositions), and [`experiment`] wires everything
//! to a JSON-configured run that emits CSV / JSON-lines / plot data.
//!
//! Start with the runnable examples (`cargo run --release --example
//! bounds_sweep`, `... --example inequality_suite`) or the `pathgap` binary
//! (`pathgap --list-scenarios`).

pub mod bounds;
pub mod experiment;
pub mod functional;
pub mod geometry;
mod linalg;
pub mod optimize;
pub mod pathsim;
pub mod verify;
