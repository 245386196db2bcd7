//! Cylindrical functions `F = f(path(t_1), ..., path(t_n))` on path space,
//! their intrinsic, damped, and modified gradients, and Monte-Carlo
//! estimators for variance, entropy, and Dirichlet energy.
//!
//! All gradient work happens in frame coordinates, where the inverse
//! parallel transport to time `t` is free: the intrinsic gradient at `t` is
//! the plain sum of the per-time gradient coordinates over `{i : t < t_i}`,
//! the damped gradient left-multiplies each summand by `Psi(t)^{-1}
//! Psi(t_i)`, and the modified gradient scales each summand by
//! `exp(-1/4 int_t^{t_i} (k1 + k2))`. Coordinate 2-norms equal metric norms
//! exactly because the frames are orthonormal for the metric at their time.
//!
//! The indicator in the gradient sums is strictly `t < t_i`: the boundary
//! set has measure zero in every time integral we form, and the strict
//! convention makes the gradient right-continuous with left limits.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::linalg;
use crate::optimize::TimeCurve;
use crate::pathsim::{PathEnsemble, PathsimError};

#[derive(Debug, thiserror::Error)]
pub enum FunctionalError {
    #[error("cylindrical times must be strictly increasing and positive")]
    BadTimes,
    #[error("kernel expects {expected} base functions, got {got}")]
    KernelArity { expected: usize, got: usize },
    #[error("base function expects ambient dimension {expected}, got {got}")]
    AmbientMismatch { expected: usize, got: usize },
    #[error("bump width must be positive")]
    BadWidth,
    #[error("entropy saw F^2 = 0 and the zero convention is disabled")]
    EntropyDomain,
    #[error("need at least 2 paths for a standard error")]
    TooFewPaths,
    #[error(transparent)]
    Ensemble(#[from] PathsimError),
}

/// Scalar function on the manifold with an analytic ambient gradient.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum BaseFunction {
    /// `x -> <v, x>` in ambient coordinates
    AmbientLinear { v: Vec<f64> },
    /// `x -> exp(<v, x>)`
    ExpLinear { v: Vec<f64> },
    /// `x -> exp(-|x - center|^2 / (2 width^2))`, a strictly positive bump
    Bump { center: Vec<f64>, width: f64 },
}

impl BaseFunction {
    pub fn eval(&self, x: &[f64]) -> f64 {
        match self {
            BaseFunction::AmbientLinear { v } => linalg::dot(v, x),
            BaseFunction::ExpLinear { v } => linalg::dot(v, x).exp(),
            BaseFunction::Bump { center, width } => {
                let d2: f64 = x.iter().zip(center).map(|(a, b)| (a - b) * (a - b)).sum();
                (-0.5 * d2 / (width * width)).exp()
            }
        }
    }

    /// Euclidean gradient in the ambient space; project through
    /// [`crate::geometry::ManifoldModel::riemannian_gradient`] before
    /// pairing with tangents.
    pub fn ambient_grad(&self, x: &[f64]) -> Vec<f64> {
        match self {
            BaseFunction::AmbientLinear { v } => v.clone(),
            BaseFunction::ExpLinear { v } => {
                let f = self.eval(x);
                v.iter().map(|a| a * f).collect()
            }
            BaseFunction::Bump { center, width } => {
                let f = self.eval(x);
                x.iter().zip(center).map(|(a, b)| -f * (a - b) / (width * width)).collect()
            }
        }
    }

    pub fn validate(&self, ambient: usize) -> Result<(), FunctionalError> {
        let len = match self {
            BaseFunction::AmbientLinear { v } | BaseFunction::ExpLinear { v } => v.len(),
            BaseFunction::Bump { center, width } => {
                if !(*width > 0.0) {
                    return Err(FunctionalError::BadWidth);
                }
                center.len()
            }
        };
        if len != ambient {
            return Err(FunctionalError::AmbientMismatch { expected: ambient, got: len });
        }
        Ok(())
    }
}

/// How the cylindrical values combine the per-time base functions.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Kernel {
    Constant { value: f64 },
    /// `scale * f(path(t_1)) + offset`
    Affine { f: BaseFunction, scale: f64, offset: f64 },
    /// `sum_i f_i(path(t_i))`, one base function per time
    Sum { terms: Vec<BaseFunction> },
    /// `prod_i f_i(path(t_i))`
    Product { factors: Vec<BaseFunction> },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CylindricalFunction {
    times: Vec<f64>,
    kernel: Kernel,
}

impl CylindricalFunction {
    pub fn new(times: Vec<f64>, kernel: Kernel) -> Result<Self, FunctionalError> {
        if times.is_empty() || times[0] <= 0.0 || times.windows(2).any(|w| w[0] >= w[1]) {
            return Err(FunctionalError::BadTimes);
        }
        let expected = times.len();
        let got = match &kernel {
            Kernel::Constant { .. } => expected,
            Kernel::Affine { .. } => 1,
            Kernel::Sum { terms } => terms.len(),
            Kernel::Product { factors } => factors.len(),
        };
        if got != expected {
            return Err(FunctionalError::KernelArity { expected, got });
        }
        Ok(CylindricalFunction { times, kernel })
    }

    pub fn constant(time: f64, value: f64) -> Result<Self, FunctionalError> {
        Self::new(vec![time], Kernel::Constant { value })
    }

    pub fn single(time: f64, f: BaseFunction) -> Result<Self, FunctionalError> {
        Self::affine(time, f, 1.0, 0.0)
    }

    pub fn affine(time: f64, f: BaseFunction, scale: f64, offset: f64) -> Result<Self, FunctionalError> {
        Self::new(vec![time], Kernel::Affine { f, scale, offset })
    }

    pub fn sum(times: Vec<f64>, terms: Vec<BaseFunction>) -> Result<Self, FunctionalError> {
        Self::new(times, Kernel::Sum { terms })
    }

    pub fn product(times: Vec<f64>, factors: Vec<BaseFunction>) -> Result<Self, FunctionalError> {
        Self::new(times, Kernel::Product { factors })
    }

    pub fn times(&self) -> &[f64] {
        &self.times
    }

    pub fn validate(&self, ambient: usize) -> Result<(), FunctionalError> {
        match &self.kernel {
            Kernel::Constant { .. } => Ok(()),
            Kernel::Affine { f, .. } => f.validate(ambient),
            Kernel::Sum { terms } => terms.iter().try_for_each(|f| f.validate(ambient)),
            Kernel::Product { factors } => factors.iter().try_for_each(|f| f.validate(ambient)),
        }
    }

    /// Value at one tuple of points, `points[i]` being the path at `times[i]`.
    pub fn eval(&self, points: &[&[f64]]) -> f64 {
        match &self.kernel {
            Kernel::Constant { value } => *value,
            Kernel::Affine { f, scale, offset } => scale * f.eval(points[0]) + offset,
            Kernel::Sum { terms } => terms.iter().zip(points).map(|(f, x)| f.eval(x)).sum(),
            Kernel::Product { factors } => {
                factors.iter().zip(points).map(|(f, x)| f.eval(x)).product()
            }
        }
    }

    /// Ambient gradient with respect to the `i`-th argument.
    pub fn ambient_gradient(&self, i: usize, points: &[&[f64]]) -> Vec<f64> {
        match &self.kernel {
            Kernel::Constant { .. } => vec![0.0; points[i].len()],
            Kernel::Affine { f, scale, .. } => {
                let mut g = f.ambient_grad(points[0]);
                for v in &mut g {
                    *v *= scale;
                }
                g
            }
            Kernel::Sum { terms } => terms[i].ambient_grad(points[i]),
            Kernel::Product { factors } => {
                let rest: f64 = factors
                    .iter()
                    .zip(points)
                    .enumerate()
                    .filter(|(j, _)| *j != i)
                    .map(|(_, (f, x))| f.eval(x))
                    .product();
                let mut g = factors[i].ambient_grad(points[i]);
                for v in &mut g {
                    *v *= rest;
                }
                g
            }
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum GradientKind {
    Intrinsic,
    Damped,
    /// Exponentially weighted by the pinching curves: each summand carries
    /// `exp(-1/4 int_t^{t_i} (k1 + k2)(r) dr)`.
    Modified { k1: TimeCurve, k2: TimeCurve },
}

/// Exact integral of a (clamped piecewise linear) curve over `[a, b]`.
fn curve_integral(c: &TimeCurve, a: f64, b: f64) -> f64 {
    if b <= a {
        return 0.0;
    }
    let seg = |x0: f64, y0: f64, x1: f64, y1: f64, lo: f64, hi: f64| -> f64 {
        let lo = lo.max(x0);
        let hi = hi.min(x1);
        if hi <= lo {
            return 0.0;
        }
        let at = |t: f64| y0 + (y1 - y0) * (t - x0) / (x1 - x0);
        0.5 * (at(lo) + at(hi)) * (hi - lo)
    };
    let knots: Vec<(f64, f64)> = match c {
        TimeCurve::Constant { value } => return value * (b - a),
        TimeCurve::PiecewiseLinear { knots } => knots.clone(),
        TimeCurve::Tabulated { times, values } => {
            times.iter().copied().zip(values.iter().copied()).collect()
        }
    };
    let (t0, v0) = knots[0];
    let (tl, vl) = *knots.last().unwrap();
    let mut total = v0 * (t0.min(b) - a).max(0.0) + vl * (b - tl.max(a)).max(0.0);
    for w in knots.windows(2) {
        total += seg(w[0].0, w[0].1, w[1].0, w[1].1, a, b);
    }
    total
}

/// `int_0^t (k1 + k2)` for the modified-gradient weights.
fn kbar_primitive(k1: &TimeCurve, k2: &TimeCurve, t: f64) -> f64 {
    curve_integral(k1, 0.0, t) + curve_integral(k2, 0.0, t)
}

#[derive(Copy, Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EnergyEstimate {
    pub mean: f64,
    pub std_error: f64,
    pub n_paths: usize,
}

impl EnergyEstimate {
    /// Sample mean with its CLT standard error.
    pub fn from_samples(xs: &[f64]) -> Result<EnergyEstimate, FunctionalError> {
        let n = xs.len();
        if n < 2 {
            return Err(FunctionalError::TooFewPaths);
        }
        let mean = xs.iter().sum::<f64>() / n as f64;
        let var = xs.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / (n - 1) as f64;
        Ok(EnergyEstimate { mean, std_error: (var / n as f64).sqrt(), n_paths: n })
    }
}

/// Plug-in entropy estimate with a jackknife estimate of its bias
/// (the `log` of a mean is biased downward at finite sample size).
#[derive(Copy, Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EntropyEstimate {
    pub energy: EnergyEstimate,
    pub jackknife_bias: f64,
}

/// Partition indices of the cylindrical times, or an error naming the
/// missing time.
fn cyl_indices(f: &CylindricalFunction, ens: &PathEnsemble) -> Result<Vec<usize>, FunctionalError> {
    f.validate(ens.ambient_dim())?;
    f.times().iter().map(|&t| Ok(ens.time_index(t)?)).collect()
}

fn path_points<'a>(ens: &'a PathEnsemble, path: usize, idxs: &[usize]) -> Vec<&'a [f64]> {
    idxs.iter().map(|&i| ens.point(path, i)).collect()
}

/// Frame coordinates of the Riemannian gradient at every cylindrical time.
fn grad_coords(
    f: &CylindricalFunction,
    ens: &PathEnsemble,
    path: usize,
    idxs: &[usize],
) -> Vec<Vec<f64>> {
    let model = &ens.meta.model;
    let points = path_points(ens, path, idxs);
    f.times()
        .iter()
        .enumerate()
        .map(|(i, &ti)| {
            let amb = f.ambient_gradient(i, &points);
            let riem = model.riemannian_gradient(ti, points[i], &amb);
            ens.frame(path, idxs[i]).coords(model, ti, &riem)
        })
        .collect()
}

/// Coordinates of the chosen gradient at partition index `t_idx`, in the
/// frame carried at that time. `coords[i]` are per-time gradients.
fn combine_coords(
    ens: &PathEnsemble,
    path: usize,
    t_idx: usize,
    t: f64,
    times: &[f64],
    idxs: &[usize],
    coords: &[Vec<f64>],
    kind: &GradientKind,
) -> Vec<f64> {
    let dim = ens.dim();
    let mut out = vec![0.0; dim];
    let active = |ti: f64| ti > t + 1e-12;
    match kind {
        GradientKind::Intrinsic => {
            for (i, &ti) in times.iter().enumerate() {
                if active(ti) {
                    linalg::axpy(&mut out, 1.0, &coords[i]);
                }
            }
        }
        GradientKind::Damped => {
            for (i, &ti) in times.iter().enumerate() {
                if active(ti) {
                    let moved = ens.psi(path, idxs[i]).mul_vec(&coords[i]);
                    linalg::axpy(&mut out, 1.0, &moved);
                }
            }
            let inv = ens.psi(path, t_idx).inverse().expect("Psi invertible");
            out = inv.mul_vec(&out);
        }
        GradientKind::Modified { k1, k2 } => {
            let base = kbar_primitive(k1, k2, t);
            for (i, &ti) in times.iter().enumerate() {
                if active(ti) {
                    let w = (-0.25 * (kbar_primitive(k1, k2, ti) - base)).exp();
                    linalg::axpy(&mut out, w, &coords[i]);
                }
            }
        }
    }
    out
}

/// The chosen gradient of `F` along one path at partition time `t`,
/// returned as a tangent vector at the path's position (metric at time `t`).
pub fn gradient_at(
    f: &CylindricalFunction,
    ens: &PathEnsemble,
    path: usize,
    t: f64,
    kind: &GradientKind,
) -> Result<Vec<f64>, FunctionalError> {
    let t_idx = ens.time_index(t)?;
    let idxs = cyl_indices(f, ens)?;
    let coords = grad_coords(f, ens, path, &idxs);
    let c = combine_coords(ens, path, t_idx, t, f.times(), &idxs, &coords, kind);
    Ok(ens.frame(path, t_idx).vector(&c))
}

/// Per-interval suffix data: between consecutive cylindrical times the
/// active set `{i : t < t_i}` is constant, so each gradient kind is either
/// constant, an explicit exponential, or a fixed vector bent by `Psi`.
struct IntervalWalk<'a> {
    times: &'a [f64],
}

impl IntervalWalk<'_> {
    /// Calls `visit(j, lo, hi)` for each interval `[lo, hi]` between
    /// consecutive events (starting at 0), where the active set is `{i >= j}`.
    fn walk(&self, mut visit: impl FnMut(usize, f64, f64)) {
        let mut lo = 0.0;
        for (j, &ti) in self.times.iter().enumerate() {
            if ti > lo {
                visit(j, lo, ti);
            }
            lo = ti;
        }
    }

    fn suffix_sums(&self, coords: &[Vec<f64>], weight: impl Fn(usize) -> f64) -> Vec<Vec<f64>> {
        let n = coords.len();
        let dim = coords[0].len();
        let mut out = vec![vec![0.0; dim]; n + 1];
        for i in (0..n).rev() {
            let mut s = out[i + 1].clone();
            linalg::axpy(&mut s, weight(i), &coords[i]);
            out[i] = s;
        }
        out
    }
}

/// Monte-Carlo Dirichlet energy `E int_0^T |D_t F|^2 dt` for the chosen
/// gradient kind. Intrinsic and constant-pinching modified energies
/// integrate exactly per interval; damped (and curve-pinching modified)
/// energies use the trapezoid rule on the stored partition.
pub fn dirichlet_energy(
    f: &CylindricalFunction,
    ens: &PathEnsemble,
    kind: &GradientKind,
) -> Result<EnergyEstimate, FunctionalError> {
    EnergyEstimate::from_samples(&dirichlet_energy_samples(f, ens, kind)?)
}

/// Per-path Dirichlet energies `int_0^T |D_t F|^2 dt`, one entry per path.
/// Useful when a caller pairs energies with other per-path statistics.
pub fn dirichlet_energy_samples(
    f: &CylindricalFunction,
    ens: &PathEnsemble,
    kind: &GradientKind,
) -> Result<Vec<f64>, FunctionalError> {
    let idxs = cyl_indices(f, ens)?;
    let partition = ens.partition().to_vec();
    let times = f.times().to_vec();
    let walk = IntervalWalk { times: &times };
    let energies: Vec<f64> = (0..ens.n_paths())
        .into_par_iter()
        .map(|p| {
            let coords = grad_coords(f, ens, p, &idxs);
            match kind {
                GradientKind::Intrinsic => {
                    let sums = walk.suffix_sums(&coords, |_| 1.0);
                    let mut e = 0.0;
                    walk.walk(|j, lo, hi| {
                        let s = &sums[j];
                        e += linalg::dot(s, s) * (hi - lo);
                    });
                    e
                }
                GradientKind::Modified { k1, k2 } => {
                    // |D^_t|^2 = e^{K(t)/2} |M_j|^2 with K the primitive of
                    // k1 + k2 and M_j the weighted suffix sum
                    let sums =
                        walk.suffix_sums(&coords, |i| (-0.25 * kbar_primitive(k1, k2, times[i])).exp());
                    let constant_kbar = match (k1, k2) {
                        (TimeCurve::Constant { value: a }, TimeCurve::Constant { value: b }) => {
                            Some(0.5 * (a + b))
                        }
                        _ => None,
                    };
                    let mut e = 0.0;
                    walk.walk(|j, lo, hi| {
                        let m2 = linalg::dot(&sums[j], &sums[j]);
                        if m2 == 0.0 {
                            return;
                        }
                        if let Some(kbar) = constant_kbar {
                            e += m2 * if kbar.abs() < 1e-14 {
                                hi - lo
                            } else {
                                ((kbar * hi).exp() - (kbar * lo).exp()) / kbar
                            };
                        } else {
                            // trapezoid of the exact integrand on the partition
                            let a = partition.partition_point(|&x| x < lo - 1e-12);
                            let b = partition.partition_point(|&x| x < hi - 1e-12);
                            for w in partition[a..=b].windows(2) {
                                let f0 = (0.5 * kbar_primitive(k1, k2, w[0])).exp();
                                let f1 = (0.5 * kbar_primitive(k1, k2, w[1])).exp();
                                e += m2 * 0.5 * (f0 + f1) * (w[1] - w[0]);
                            }
                        }
                    });
                    e
                }
                GradientKind::Damped => {
                    let moved: Vec<Vec<f64>> = coords
                        .iter()
                        .enumerate()
                        .map(|(i, c)| ens.psi(p, idxs[i]).mul_vec(c))
                        .collect();
                    let sums = walk.suffix_sums(&moved, |_| 1.0);
                    let mut e = 0.0;
                    walk.walk(|j, lo, hi| {
                        let m = &sums[j];
                        if linalg::dot(m, m) == 0.0 {
                            return;
                        }
                        let a = partition.partition_point(|&x| x < lo - 1e-12);
                        let b = partition.partition_point(|&x| x < hi - 1e-12);
                        let mut prev: Option<(f64, f64)> = None;
                        for (off, &tau) in partition[a..=b].iter().enumerate() {
                            let inv = ens.psi(p, a + off).inverse().expect("Psi invertible");
                            let v = inv.mul_vec(m);
                            let val = linalg::dot(&v, &v);
                            if let Some((pt, pv)) = prev {
                                e += 0.5 * (pv + val) * (tau - pt);
                            }
                            prev = Some((tau, val));
                        }
                    });
                    e
                }
            }
        })
        .collect();
    Ok(energies)
}

/// Value of `F` on every path.
pub fn path_values(f: &CylindricalFunction, ens: &PathEnsemble) -> Result<Vec<f64>, FunctionalError> {
    let idxs = cyl_indices(f, ens)?;
    Ok((0..ens.n_paths())
        .into_par_iter()
        .map(|p| f.eval(&path_points(ens, p, &idxs)))
        .collect())
}

/// Unbiased sample variance of `F` with a moment-based standard error
/// (`sqrt((m4 - m2^2)/n)` from the CLT for the second moment).
pub fn variance(f: &CylindricalFunction, ens: &PathEnsemble) -> Result<EnergyEstimate, FunctionalError> {
    let vals = path_values(f, ens)?;
    let n = vals.len();
    if n < 2 {
        return Err(FunctionalError::TooFewPaths);
    }
    let mean = vals.iter().sum::<f64>() / n as f64;
    let m2 = vals.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / n as f64;
    let m4 = vals.iter().map(|x| (x - mean).powi(4)).sum::<f64>() / n as f64;
    Ok(EnergyEstimate {
        mean: m2 * n as f64 / (n - 1) as f64,
        std_error: ((m4 - m2 * m2).max(0.0) / n as f64).sqrt(),
        n_paths: n,
    })
}

/// Plug-in estimate of `E[F^2 log F^2] - E[F^2] log E[F^2]` with an
/// influence-function standard error and a jackknife bias estimate.
/// With `zero_convention` the convention `0 log 0 = 0` applies; otherwise
/// any vanishing `F^2` is a domain error.
pub fn entropy(
    f: &CylindricalFunction,
    ens: &PathEnsemble,
    zero_convention: bool,
) -> Result<EntropyEstimate, FunctionalError> {
    let vals = path_values(f, ens)?;
    let n = vals.len();
    if n < 2 {
        return Err(FunctionalError::TooFewPaths);
    }
    let xlogx = |g: f64| if g > 0.0 { g * g.ln() } else { 0.0 };
    let mut gs = Vec::with_capacity(n);
    for v in &vals {
        let g = v * v;
        if g == 0.0 && !zero_convention {
            return Err(FunctionalError::EntropyDomain);
        }
        gs.push(g);
    }
    let mean_g = gs.iter().sum::<f64>() / n as f64;
    let mean_glg = gs.iter().map(|&g| xlogx(g)).sum::<f64>() / n as f64;
    let ent = |mg: f64, mglg: f64| mglg - xlogx(mg);
    let estimate = ent(mean_g, mean_glg);
    // influence function of g -> E[g log g] - E[g] log E[g]
    let dlog = if mean_g > 0.0 { mean_g.ln() + 1.0 } else { 0.0 };
    let mut if2 = 0.0;
    for &g in &gs {
        let inf = (xlogx(g) - mean_glg) - dlog * (g - mean_g);
        if2 += inf * inf;
    }
    let std_error = (if2 / ((n - 1) as f64 * n as f64)).sqrt();
    let mut loo_sum = 0.0;
    for &g in &gs {
        let mg = (mean_g * n as f64 - g) / (n - 1) as f64;
        let mglg = (mean_glg * n as f64 - xlogx(g)) / (n - 1) as f64;
        loo_sum += ent(mg, mglg);
    }
    let jackknife_bias = (n as f64 - 1.0) * (loo_sum / n as f64 - estimate);
    Ok(EntropyEstimate {
        energy: EnergyEstimate { mean: estimate, std_error, n_paths: n },
        jackknife_bias,
    })
}

/// `|D^_t F|^2` at every partition time for one path, for the modified
/// gradient with constant pinching. The gradient jumps at each cylindrical
/// time, so both one-sided limits `(left, right)` are returned; integrate a
/// partition cell with the right limit at its start and the left limit at
/// its end. One pass over the suffix sums.
pub fn modified_gradient_sq_curve(
    f: &CylindricalFunction,
    ens: &PathEnsemble,
    path: usize,
    k1: f64,
    k2: f64,
) -> Result<Vec<(f64, f64)>, FunctionalError> {
    let idxs = cyl_indices(f, ens)?;
    let coords = grad_coords(f, ens, path, &idxs);
    let times = f.times();
    let kbar = 0.5 * (k1 + k2);
    let walk = IntervalWalk { times };
    let sums = walk.suffix_sums(&coords, |i| (-0.5 * kbar * times[i]).exp());
    Ok(ens
        .partition()
        .iter()
        .map(|&tau| {
            let grow = (kbar * tau).exp();
            let value = |a: usize| {
                let m = &sums[a];
                grow * linalg::dot(m, m)
            };
            let left = times.partition_point(|&ti| ti < tau - 1e-12);
            let right = times.partition_point(|&ti| ti <= tau + 1e-12);
            (value(left), value(right))
        })
        .collect())
}

/// `int_lo^hi e^{-kappa (s - t)/2} ds` in closed form.
fn damping_kernel_integral(kappa: f64, t: f64, lo: f64, hi: f64) -> f64 {
    if hi <= lo {
        0.0
    } else if kappa.abs() < 1e-14 {
        hi - lo
    } else {
        (2.0 / kappa) * ((-0.5 * kappa * (lo - t)).exp() - (-0.5 * kappa * (hi - t)).exp())
    }
}

fn chain_slack(
    f: &CylindricalFunction,
    ens: &PathEnsemble,
    k1: f64,
    k2: f64,
    t: f64,
    damped: bool,
) -> Result<Vec<f64>, FunctionalError> {
    let t_idx = ens.time_index(t)?;
    let idxs = cyl_indices(f, ens)?;
    let times = f.times().to_vec();
    let walk = IntervalWalk { times: &times };
    let (kappa, factor) = if damped {
        (k1, 0.5 * k1.abs().max(k2.abs()))
    } else {
        let kbar = 0.5 * (k1 + k2);
        (kbar, 0.5 * kbar.abs())
    };
    let kind = if damped {
        GradientKind::Damped
    } else {
        GradientKind::Modified { k1: TimeCurve::constant(k1), k2: TimeCurve::constant(k2) }
    };
    Ok((0..ens.n_paths())
        .into_par_iter()
        .map(|p| {
            let coords = grad_coords(f, ens, p, &idxs);
            let lhs_c = combine_coords(ens, p, t_idx, t, &times, &idxs, &coords, &kind);
            let lhs = linalg::norm(&lhs_c);
            let intrinsic =
                combine_coords(ens, p, t_idx, t, &times, &idxs, &coords, &GradientKind::Intrinsic);
            let mut rhs = linalg::norm(&intrinsic);
            let sums = walk.suffix_sums(&coords, |_| 1.0);
            walk.walk(|j, lo, hi| {
                if hi <= t {
                    return;
                }
                let s = linalg::norm(&sums[j]);
                rhs += factor * s * damping_kernel_integral(kappa, t, lo.max(t), hi);
            });
            rhs - lhs
        })
        .collect())
}

/// Per-path slack of the damped chain inequality
/// `|D~_t F| <= |D_t F| + ((|k1| v |k2|)/2) int_t^T e^{-k1(s-t)/2} |D_s F| ds`;
/// nonnegative up to discretization error.
pub fn damped_chain_slack(
    f: &CylindricalFunction,
    ens: &PathEnsemble,
    k1: f64,
    k2: f64,
    t: f64,
) -> Result<Vec<f64>, FunctionalError> {
    chain_slack(f, ens, k1, k2, t, true)
}

/// Per-path slack of the modified chain inequality with
/// `kbar = (k1 + k2)/2` in place of the damping rate.
pub fn modified_chain_slack(
    f: &CylindricalFunction,
    ens: &PathEnsemble,
    k1: f64,
    k2: f64,
    t: f64,
) -> Result<Vec<f64>, FunctionalError> {
    chain_slack(f, ens, k1, k2, t, false)
}
