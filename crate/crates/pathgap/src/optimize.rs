//! Scalar optimization and quadrature for the bound evaluations: the sup over
//! the time variable and the inf over the commutation rate `c` that define
//! `S(T, K1, K2)`, plus the quadrature engine behind the time-dependent
//! variant used for evolving metrics.
//!
//! Everything here is deterministic: grid scans break ties toward the
//! smallest argument, refinement is plain golden-section, and quadrature uses
//! fixed composite rules with doubling until a tolerance is met.

use serde::{Deserialize, Serialize};

use crate::bounds::{BoundBranch, BoundReport, SearchMode, SearchPolicy};

#[derive(Debug, thiserror::Error)]
pub enum OptimizeError {
    #[error("c-search range [{lo}, {hi}] must contain 0")]
    RangeExcludesZero { lo: f64, hi: f64 },
    #[error("quadrature failed to reach tolerance {tol:e} (best interval error {best:e})")]
    QuadratureTolerance { tol: f64, best: f64 },
    #[error("c-search did not converge: best value {found} exceeds the c = 0 value {at_zero} by more than {tol:e}")]
    CSearchDiverged { found: f64, at_zero: f64, tol: f64 },
    #[error("time {t} outside [0, {t_max}]")]
    TimeOutOfRange { t: f64, t_max: f64 },
    #[error("curve does not cover [0, {t_max}]: {what}")]
    CurveDomain { t_max: f64, what: String },
    #[error("pinching curves must satisfy k1(t) <= k2(t) on [0, {t_max}]")]
    CurveOrder { t_max: f64 },
    #[error("horizon must be positive, got {0}")]
    NonPositiveHorizon(f64),
}

/// A scalar function of time on `[0, T]`, used for time-dependent curvature
/// pinchings and for the commutation rate in the evolving-metric bound.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum TimeCurve {
    Constant { value: f64 },
    /// Linear interpolation through `(time, value)` knots with strictly
    /// increasing times. Evaluation clamps outside the knot range.
    PiecewiseLinear { knots: Vec<(f64, f64)> },
    /// Dense samples on an increasing time grid, linearly interpolated.
    Tabulated { times: Vec<f64>, values: Vec<f64> },
}

impl TimeCurve {
    pub fn constant(v: f64) -> Self {
        TimeCurve::Constant { value: v }
    }

    pub fn eval(&self, t: f64) -> f64 {
        match self {
            TimeCurve::Constant { value } => *value,
            TimeCurve::PiecewiseLinear { knots } => {
                interp_at(t, knots.len(), |i| knots[i].0, |i| knots[i].1)
            }
            TimeCurve::Tabulated { times, values } => {
                interp_at(t, times.len(), |i| times[i], |i| values[i])
            }
        }
    }

    /// sup of |value| over `[0, t_max]`. Exact for all three kinds because
    /// each is piecewise linear in t.
    pub fn sup_abs(&self, t_max: f64) -> f64 {
        match self {
            TimeCurve::Constant { value } => value.abs(),
            TimeCurve::PiecewiseLinear { knots } => {
                let mut m = self.eval(0.0).abs().max(self.eval(t_max).abs());
                for &(t, v) in knots {
                    if t >= 0.0 && t <= t_max {
                        m = m.max(v.abs());
                    }
                }
                m
            }
            TimeCurve::Tabulated { times, values } => {
                let mut m = self.eval(0.0).abs().max(self.eval(t_max).abs());
                for (t, v) in times.iter().zip(values) {
                    if *t >= 0.0 && *t <= t_max {
                        m = m.max(v.abs());
                    }
                }
                m
            }
        }
    }

    pub fn validate(&self, t_max: f64) -> Result<(), OptimizeError> {
        let check_grid = |ts: &[f64]| -> Result<(), OptimizeError> {
            if ts.len() < 2 {
                return Err(OptimizeError::CurveDomain { t_max, what: "needs at least two knots".into() });
            }
            if !ts.windows(2).all(|w| w[0] < w[1]) {
                return Err(OptimizeError::CurveDomain { t_max, what: "knot times must be strictly increasing".into() });
            }
            if ts[0] > 1e-12 || ts[ts.len() - 1] < t_max - 1e-12 {
                return Err(OptimizeError::CurveDomain {
                    t_max,
                    what: format!("knots span [{}, {}]", ts[0], ts[ts.len() - 1]),
                });
            }
            Ok(())
        };
        match self {
            TimeCurve::Constant { value } => {
                if value.is_finite() {
                    Ok(())
                } else {
                    Err(OptimizeError::CurveDomain { t_max, what: "non-finite constant".into() })
                }
            }
            TimeCurve::PiecewiseLinear { knots } => check_grid(&knots.iter().map(|k| k.0).collect::<Vec<_>>()),
            TimeCurve::Tabulated { times, values } => {
                if times.len() != values.len() {
                    return Err(OptimizeError::CurveDomain { t_max, what: "times/values length mismatch".into() });
                }
                check_grid(times)
            }
        }
    }
}

fn interp_at(t: f64, n: usize, ts: impl Fn(usize) -> f64, vs: impl Fn(usize) -> f64) -> f64 {
    if n == 0 {
        return 0.0;
    }
    if t <= ts(0) {
        return vs(0);
    }
    if t >= ts(n - 1) {
        return vs(n - 1);
    }
    // rightmost i with ts(i) <= t, by bisection on the sorted knot times
    let (mut lo, mut hi) = (0usize, n - 1);
    while hi - lo > 1 {
        let mid = lo + (hi - lo) / 2;
        if ts(mid) <= t {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    let (t0, t1) = (ts(lo), ts(hi));
    let w = (t - t0) / (t1 - t0);
    vs(lo) * (1.0 - w) + vs(hi) * w
}

/// Default search interval for the commutation rate: `[-5(1+K), 5(1+K)]`
/// where `K` is the sup norm of the pinching data. Wide enough that the
/// optimum is interior for every parameter set exercised here.
pub fn default_c_range(k_sup: f64) -> (f64, f64) {
    let b = 5.0 * (1.0 + k_sup);
    (-b, b)
}

const GOLDEN_RATIO: f64 = 1.618_033_988_749_895;

fn golden_min<F: Fn(f64) -> f64>(f: &F, mut a: f64, mut b: f64, iters: usize) -> (f64, f64) {
    let inv = 1.0 / GOLDEN_RATIO;
    let mut c = b - (b - a) * inv;
    let mut d = a + (b - a) * inv;
    let mut fc = f(c);
    let mut fd = f(d);
    for _ in 0..iters {
        if fc <= fd {
            b = d;
            d = c;
            fd = fc;
            c = b - (b - a) * inv;
            fc = f(c);
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + (b - a) * inv;
            fd = f(d);
        }
    }
    let x = 0.5 * (a + b);
    (x, f(x))
}

/// Maximize `f` over `[0, t_max]`: a coarse scan over `grid` cells (at least
/// 16) picks a bracket, golden-section refines it. Ties on the scan break
/// toward the smallest t. Returns `(argmax, max)`.
pub fn sup_over_t<F: Fn(f64) -> f64>(f: F, t_max: f64, grid: usize, refinement_iters: usize) -> (f64, f64) {
    let grid = grid.max(16);
    let mut best_i = 0usize;
    let mut best_v = f64::NEG_INFINITY;
    let mut vals = Vec::with_capacity(grid + 1);
    for i in 0..=grid {
        let t = t_max * i as f64 / grid as f64;
        let v = f(t);
        vals.push(v);
        if v > best_v {
            best_v = v;
            best_i = i;
        }
    }
    let lo = if best_i == 0 { 0.0 } else { t_max * (best_i - 1) as f64 / grid as f64 };
    let hi = if best_i == grid { t_max } else { t_max * (best_i + 1) as f64 / grid as f64 };
    let iters = (refinement_iters * 3).min(240);
    let (t_ref, v_ref) = golden_min(&|t| -f(t), lo, hi, iters);
    if -v_ref > best_v {
        (t_ref, -v_ref)
    } else {
        (t_max * best_i as f64 / grid as f64, best_v)
    }
}

/// Minimize `g` over a c-range that must contain 0: a 64-cell scan (with 0
/// forced into the candidate set) brackets the minimum, golden-section
/// refines it. Guarantees the returned value is `<= g(0)`; errors if the
/// refined value somehow exceeds `g(0) + tol`.
pub fn inf_over_c<G: Fn(f64) -> f64>(
    g: G,
    c_range: (f64, f64),
    refinement_iters: usize,
    tol: f64,
) -> Result<(f64, f64), OptimizeError> {
    let (lo, hi) = c_range;
    if !(lo <= 0.0 && 0.0 <= hi) || !(lo < hi) {
        return Err(OptimizeError::RangeExcludesZero { lo, hi });
    }
    const SCAN: usize = 64;
    let mut cs: Vec<f64> = (0..=SCAN).map(|i| lo + (hi - lo) * i as f64 / SCAN as f64).collect();
    cs.push(0.0);
    cs.sort_by(f64::total_cmp);
    cs.dedup();
    let mut best_i = 0usize;
    let mut best_v = f64::INFINITY;
    let mut at_zero = f64::INFINITY;
    let vals: Vec<f64> = cs.iter().map(|&c| g(c)).collect();
    for (i, (&c, &v)) in cs.iter().zip(&vals).enumerate() {
        if c == 0.0 {
            at_zero = v;
        }
        if v < best_v {
            best_v = v;
            best_i = i;
        }
    }
    let bl = if best_i == 0 { cs[0] } else { cs[best_i - 1] };
    let bh = if best_i + 1 == cs.len() { cs[cs.len() - 1] } else { cs[best_i + 1] };
    let iters = (refinement_iters * 3).min(240);
    let (c_ref, v_ref) = golden_min(&g, bl, bh, iters);
    let (c_star, v_star) = if v_ref < best_v { (c_ref, v_ref) } else { (cs[best_i], best_v) };
    if v_star > at_zero + tol {
        return Err(OptimizeError::CSearchDiverged { found: v_star, at_zero, tol });
    }
    Ok((c_star, v_star.min(at_zero)))
}

/// Composite Simpson on `[a, b]`, doubling the cell count from 1024 until
/// two successive refinements agree to `tol` (relative to max(1, |value|)).
pub fn integrate<F: Fn(f64) -> f64>(f: F, a: f64, b: f64, tol: f64) -> Result<f64, OptimizeError> {
    if a == b {
        return Ok(0.0);
    }
    let simpson = |n: usize| -> f64 {
        let h = (b - a) / n as f64;
        let mut s = f(a) + f(b);
        for i in 1..n {
            let x = a + h * i as f64;
            s += if i % 2 == 1 { 4.0 * f(x) } else { 2.0 * f(x) };
        }
        s * h / 3.0
    };
    let mut n = 1024usize;
    let mut prev = simpson(n);
    loop {
        n *= 2;
        let cur = simpson(n);
        let err = (cur - prev).abs();
        if err <= tol * cur.abs().max(1.0) {
            return Ok(cur);
        }
        if n >= 1 << 20 {
            return Err(OptimizeError::QuadratureTolerance { tol, best: err });
        }
        prev = cur;
    }
}

/// Cumulative integral of uniformly sampled values (step `dt`): fourth-order
/// accurate. Even nodes use composite Simpson over cell pairs, odd nodes the
/// three-point parabolic rule for the leading half-pair.
fn cumulative_integral(f: &[f64], dt: f64) -> Vec<f64> {
    let m = f.len() - 1;
    debug_assert!(m >= 2 && m % 2 == 0);
    let mut out = vec![0.0; m + 1];
    for i in (2..=m).step_by(2) {
        out[i] = out[i - 2] + dt / 3.0 * (f[i - 2] + 4.0 * f[i - 1] + f[i]);
    }
    for i in (1..m).step_by(2) {
        out[i] = out[i - 1] + dt / 12.0 * (5.0 * f[i - 1] + 8.0 * f[i] - f[i + 1]);
    }
    out
}

/// Cubic Hermite interpolation of `y` on `[0, dt]` given endpoint values and
/// derivatives.
fn hermite(y0: f64, y1: f64, d0: f64, d1: f64, dt: f64, s: f64) -> f64 {
    let u = s / dt;
    let u2 = u * u;
    let u3 = u2 * u;
    let h00 = 2.0 * u3 - 3.0 * u2 + 1.0;
    let h10 = u3 - 2.0 * u2 + u;
    let h01 = -2.0 * u3 + 3.0 * u2;
    let h11 = u3 - u2;
    h00 * y0 + h10 * dt * d0 + h01 * y1 + h11 * dt * d1
}

/// Quadrature engine for the time-dependent comparison function
///
/// ```text
/// L_c(t) = alpha(t) + (K2(t)/2) * Int_0^t alpha(s) exp(-(1/2) Int_s^t (K1 + 2c)) ds
/// alpha(t) = 1 + (1/2) * Int_t^T K2(s) exp(-(1/2) Int_t^s (K1 - 2c)) ds
/// ```
///
/// built from cumulative integrals on a uniform grid, so a full sweep over t
/// costs O(grid). Off-node evaluation interpolates the cumulants with cubic
/// Hermite polynomials using their exact derivatives.
struct TildeEngine {
    m: usize,
    dt: f64,
    t_max: f64,
    k2v: Vec<f64>,
    cum_p: Vec<f64>,
    cum_q: Vec<f64>,
    cum_g: Vec<f64>,
    cum_m: Vec<f64>,
    alpha: Vec<f64>,
    dp: Vec<f64>,
    dq: Vec<f64>,
}

impl TildeEngine {
    fn build(t_max: f64, k1: &dyn Fn(f64) -> f64, k2: &dyn Fn(f64) -> f64, c: &dyn Fn(f64) -> f64, m: usize) -> Self {
        debug_assert!(m % 2 == 0);
        let dt = t_max / m as f64;
        let node = |i: usize| t_max * i as f64 / m as f64;
        let k1v: Vec<f64> = (0..=m).map(|i| k1(node(i))).collect();
        let k2v: Vec<f64> = (0..=m).map(|i| k2(node(i))).collect();
        let cv: Vec<f64> = (0..=m).map(|i| c(node(i))).collect();
        let dp: Vec<f64> = (0..=m).map(|i| 0.5 * (k1v[i] - 2.0 * cv[i])).collect();
        let dq: Vec<f64> = (0..=m).map(|i| 0.5 * (k1v[i] + 2.0 * cv[i])).collect();
        let cum_p = cumulative_integral(&dp, dt);
        let cum_q = cumulative_integral(&dq, dt);
        let g_integrand: Vec<f64> = (0..=m).map(|i| k2v[i] * (-cum_p[i]).exp()).collect();
        let cum_g = cumulative_integral(&g_integrand, dt);
        let g_end = cum_g[m];
        let alpha: Vec<f64> = (0..=m).map(|i| 1.0 + 0.5 * cum_p[i].exp() * (g_end - cum_g[i])).collect();
        let m_integrand: Vec<f64> = (0..=m).map(|i| alpha[i] * cum_q[i].exp()).collect();
        let cum_m = cumulative_integral(&m_integrand, dt);
        TildeEngine { m, dt, t_max, k2v, cum_p, cum_q, cum_g, cum_m, alpha, dp, dq }
    }

    fn lambda_at_node(&self, i: usize) -> f64 {
        self.alpha[i] + 0.5 * self.k2v[i] * (-self.cum_q[i]).exp() * self.cum_m[i]
    }

    fn lambda_at(&self, t: f64, k2: &dyn Fn(f64) -> f64) -> f64 {
        let i = ((t / self.dt).floor() as usize).min(self.m - 1);
        let s = t - self.dt * i as f64;
        if s.abs() < 1e-15 * self.t_max {
            return self.lambda_at_node(i);
        }
        let p = hermite(self.cum_p[i], self.cum_p[i + 1], self.dp[i], self.dp[i + 1], self.dt, s);
        let q = hermite(self.cum_q[i], self.cum_q[i + 1], self.dq[i], self.dq[i + 1], self.dt, s);
        let dg = |j: usize| self.k2v[j] * (-self.cum_p[j]).exp();
        let g = hermite(self.cum_g[i], self.cum_g[i + 1], dg(i), dg(i + 1), self.dt, s);
        let dm = |j: usize| self.alpha[j] * self.cum_q[j].exp();
        let mm = hermite(self.cum_m[i], self.cum_m[i + 1], dm(i), dm(i + 1), self.dt, s);
        let g_end = self.cum_g[self.m];
        let alpha = 1.0 + 0.5 * p.exp() * (g_end - g);
        alpha + 0.5 * k2(t) * (-q).exp() * mm
    }

    fn sup(&self, k2: &dyn Fn(f64) -> f64, iters: usize) -> (f64, f64) {
        let mut best_i = 0usize;
        let mut best_v = f64::NEG_INFINITY;
        for i in 0..=self.m {
            let v = self.lambda_at_node(i);
            if v > best_v {
                best_v = v;
                best_i = i;
            }
        }
        let lo = self.dt * best_i.saturating_sub(1) as f64;
        let hi = (self.dt * (best_i + 1) as f64).min(self.t_max);
        let (t_ref, neg) = golden_min(&|t| -self.lambda_at(t, k2), lo, hi, iters.min(240));
        if -neg > best_v {
            (t_ref, -neg)
        } else {
            (self.dt * best_i as f64, best_v)
        }
    }
}

const TILDE_TOL: f64 = 1e-9;
const TILDE_GRID_START: usize = 512;
const TILDE_GRID_MAX: usize = 1 << 15;

fn tilde_lambda_fn(
    t: f64,
    t_max: f64,
    k1: &dyn Fn(f64) -> f64,
    k2: &dyn Fn(f64) -> f64,
    c: &dyn Fn(f64) -> f64,
) -> Result<f64, OptimizeError> {
    if !(t_max > 0.0) {
        return Err(OptimizeError::NonPositiveHorizon(t_max));
    }
    if !(0.0..=t_max * (1.0 + 1e-12)).contains(&t) {
        return Err(OptimizeError::TimeOutOfRange { t, t_max });
    }
    let t = t.min(t_max);
    let mut m = TILDE_GRID_START;
    let mut prev = TildeEngine::build(t_max, k1, k2, c, m).lambda_at(t, k2);
    loop {
        m *= 2;
        let cur = TildeEngine::build(t_max, k1, k2, c, m).lambda_at(t, k2);
        let err = (cur - prev).abs();
        if err <= TILDE_TOL * cur.abs().max(1.0) {
            return Ok(cur);
        }
        if m >= TILDE_GRID_MAX {
            return Err(OptimizeError::QuadratureTolerance { tol: TILDE_TOL, best: err });
        }
        prev = cur;
    }
}

/// Time-dependent comparison function for curve-valued pinching and
/// commutation rate. Reduces to the constant-parameter `lambda_c` when all
/// three curves are constant.
pub fn tilde_lambda_c(
    t: f64,
    t_max: f64,
    k1: &TimeCurve,
    k2: &TimeCurve,
    c: &TimeCurve,
) -> Result<f64, OptimizeError> {
    k1.validate(t_max)?;
    k2.validate(t_max)?;
    c.validate(t_max)?;
    tilde_lambda_fn(t, t_max, &|s| k1.eval(s), &|s| k2.eval(s), &|s| c.eval(s))
}

fn tilde_sup_fn(
    t_max: f64,
    k1: &dyn Fn(f64) -> f64,
    k2: &dyn Fn(f64) -> f64,
    c: &dyn Fn(f64) -> f64,
    policy: &SearchPolicy,
) -> Result<f64, OptimizeError> {
    let mut m = policy.t_grid.next_power_of_two().max(TILDE_GRID_START);
    let iters = policy.refinement_iters * 3;
    let mut prev = TildeEngine::build(t_max, k1, k2, c, m).sup(k2, iters).1;
    loop {
        m *= 2;
        let cur = TildeEngine::build(t_max, k1, k2, c, m).sup(k2, iters).1;
        let err = (cur - prev).abs();
        if err <= TILDE_TOL * cur.abs().max(1.0) {
            return Ok(cur);
        }
        if m >= TILDE_GRID_MAX {
            return Err(OptimizeError::QuadratureTolerance { tol: TILDE_TOL, best: err });
        }
        prev = cur;
    }
}

/// `S~(T, K1, K2)`: sup over t of the time-dependent comparison function,
/// minimized over the commutation rate. The rate search is restricted to
/// constant curves, which keeps the result a valid upper bound; the closed
/// form policy fixes c = 0.
fn tilde_s(
    t_max: f64,
    k1: &dyn Fn(f64) -> f64,
    k2: &dyn Fn(f64) -> f64,
    policy: &SearchPolicy,
    k_sup: f64,
) -> Result<(f64, f64), OptimizeError> {
    match policy.mode {
        SearchMode::ClosedFormOnly => {
            let v = tilde_sup_fn(t_max, k1, k2, &|_| 0.0, policy)?;
            Ok((0.0, v))
        }
        SearchMode::OptimizeC => {
            let range = policy.c_range.unwrap_or_else(|| default_c_range(k_sup));
            let g = |c: f64| tilde_sup_fn(t_max, k1, k2, &|_| c, policy).unwrap_or(f64::INFINITY);
            inf_over_c(g, range, policy.refinement_iters, policy.tol)
        }
    }
}

/// Gap bound `H~` for a time-dependent pinching `k1(t) <= Ric <= k2(t)`:
/// minimum of the single-interval branch and the two-factor product branch,
/// each evaluated through [`tilde_lambda_c`]'s engine. Reduces to
/// [`bounds::h_bound`] for constant curves.
pub fn tilde_h(
    t_max: f64,
    k1: &TimeCurve,
    k2: &TimeCurve,
    policy: &SearchPolicy,
) -> Result<BoundReport, OptimizeError> {
    if !(t_max > 0.0) {
        return Err(OptimizeError::NonPositiveHorizon(t_max));
    }
    k1.validate(t_max)?;
    k2.validate(t_max)?;
    policy.validate().map_err(|_| OptimizeError::CurveDomain { t_max, what: "invalid search policy".into() })?;
    let probe = 4096;
    for i in 0..=probe {
        let t = t_max * i as f64 / probe as f64;
        if k1.eval(t) > k2.eval(t) + 1e-12 {
            return Err(OptimizeError::CurveOrder { t_max });
        }
    }
    let k_sup = k1.sup_abs(t_max).max(k2.sup_abs(t_max));
    let k1f = |t: f64| k1.eval(t);
    let k2f = |t: f64| k2.eval(t);

    let fw_k2 = |t: f64| k1f(t).abs().max(k2f(t).abs());
    let (c_fw, fang_wu) = tilde_s(t_max, &k1f, &fw_k2, policy, k_sup)?;

    let p1_k2 = |t: f64| 0.5 * (k2f(t) - k1f(t));
    let (c_p1, s1) = tilde_s(t_max, &k1f, &p1_k2, policy, k_sup)?;
    let p2_k1 = |t: f64| 0.5 * (k1f(t) + k2f(t));
    let p2_k2 = |t: f64| 0.5 * (k1f(t) + k2f(t)).abs();
    let (_c_p2, s2) = tilde_s(t_max, &p2_k1, &p2_k2, policy, k_sup)?;
    let product = s1 * s2;

    let (h, branch, c_star) = if fang_wu <= product {
        (fang_wu, BoundBranch::FangWu, c_fw)
    } else {
        (product, BoundBranch::Product, c_p1)
    };
    Ok(BoundReport { t_horizon: t_max, fang_wu, product, h, branch, c_star })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::bounds::lambda_c;
    use approx::assert_relative_eq;

    #[test]
    fn integrate_exponential() {
        let v = integrate(|x| x.exp(), 0.0, 1.0, 1e-12).unwrap();
        assert_relative_eq!(v, 1f64.exp() - 1.0, max_relative = 1e-12);
    }

    #[test]
    fn sup_over_t_finds_interior_max() {
        // max of t(1-t) on [0,1] is 0.25 at t = 0.5
        let (t, v) = sup_over_t(|t| t * (1.0 - t), 1.0, 32, 40);
        assert_relative_eq!(t, 0.5, epsilon = 1e-9);
        assert_relative_eq!(v, 0.25, epsilon = 1e-12);
    }

    #[test]
    fn sup_over_t_endpoint() {
        let (t, v) = sup_over_t(|t| t, 2.0, 16, 40);
        assert_relative_eq!(t, 2.0, epsilon = 1e-9);
        assert_relative_eq!(v, 2.0, epsilon = 1e-9);
    }

    #[test]
    fn inf_over_c_quadratic() {
        let (c, v) = inf_over_c(|c| (c - 0.3) * (c - 0.3) + 1.0, (-2.0, 2.0), 40, 1e-9).unwrap();
        // the argmin of a quadratic is only locatable to sqrt(machine eps)
        assert_relative_eq!(c, 0.3, epsilon = 1e-6);
        assert_relative_eq!(v, 1.0, epsilon = 1e-12);
    }

    #[test]
    fn inf_over_c_requires_zero_in_range() {
        let err = inf_over_c(|c| c * c, (1.0, 2.0), 40, 1e-9).unwrap_err();
        assert!(matches!(err, OptimizeError::RangeExcludesZero { .. }));
    }

    #[test]
    fn inf_over_c_value_never_above_zero_value() {
        // monotone increasing: optimum sits at the left end, but must still
        // be <= g(0)
        let g = |c: f64| c.exp();
        let (_, v) = inf_over_c(g, (-1.0, 1.0), 40, 1e-9).unwrap();
        assert!(v <= 1.0 + 1e-12);
    }

    #[test]
    fn cumulative_integral_cubic_exact_nodes() {
        // f = 3t^2 integrates to t^3; the rule is exact for cubics at even
        // nodes and fourth-order at odd ones.
        let m = 8;
        let dt = 0.25;
        let f: Vec<f64> = (0..=m).map(|i| 3.0 * (dt * i as f64).powi(2)).collect();
        let cum = cumulative_integral(&f, dt);
        for i in 0..=m {
            let t = dt * i as f64;
            assert_relative_eq!(cum[i], t.powi(3), epsilon = 1e-12);
        }
    }

    #[test]
    fn tilde_reduces_to_constant_lambda() {
        let cases = [
            (0.3, 1.0, 0.5, 2.0, 0.0),
            (0.8, 1.0, -1.0, 1.0, 0.4),
            (0.5, 2.0, 1.5, 1.5, -0.3),
            (1.0, 1.0, 0.0, 2.0, 0.0),
        ];
        for &(t, t_max, k1, k2, c) in &cases {
            let tilde = tilde_lambda_c(
                t,
                t_max,
                &TimeCurve::constant(k1),
                &TimeCurve::constant(k2),
                &TimeCurve::constant(c),
            )
            .unwrap();
            let exact = lambda_c(t, t_max, k1, k2, c).unwrap();
            assert_relative_eq!(tilde, exact, epsilon = 1e-8);
        }
    }

    #[test]
    fn tilde_alpha_frozen_value() {
        // K1(t) = t, K2 = 1, c = 0, evaluated at t = 0 where the value is
        // alpha(0) = 1 + (1/2) Int_0^1 exp(-s^2/4) ds. The expected constant
        // comes from the brute-force nested trapezoid below.
        let k1 = TimeCurve::PiecewiseLinear { knots: vec![(0.0, 0.0), (1.0, 1.0)] };
        let k2 = TimeCurve::constant(1.0);
        let c = TimeCurve::constant(0.0);
        let v = tilde_lambda_c(0.0, 1.0, &k1, &k2, &c).unwrap();

        let n = 200_000usize;
        let h = 1.0 / n as f64;
        let mut acc = 0.0;
        for i in 0..n {
            let s0 = h * i as f64;
            let s1 = h * (i + 1) as f64;
            let f = |s: f64| (-s * s / 4.0f64).exp();
            acc += 0.5 * h * (f(s0) + f(s1));
        }
        let oracle = 1.0 + 0.5 * acc;
        assert_relative_eq!(v, oracle, epsilon = 1e-7);
        assert_relative_eq!(v, 1.461_281_006_5, epsilon = 1e-7);
    }

    #[test]
    fn piecewise_linear_eval_and_sup() {
        let c = TimeCurve::PiecewiseLinear { knots: vec![(0.0, 1.0), (0.5, -3.0), (1.0, 2.0)] };
        assert_relative_eq!(c.eval(0.25), -1.0);
        assert_relative_eq!(c.eval(2.0), 2.0); // clamped
        assert_relative_eq!(c.sup_abs(1.0), 3.0);
        c.validate(1.0).unwrap();
        assert!(c.validate(2.0).is_err());
    }
}
