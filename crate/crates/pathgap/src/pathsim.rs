//! Simulation of the metric diffusion with generator `(Delta_t + Z_t)/2`,
//! its horizontal frame, and the damping functional `Q_{r,t}` along each
//! path.
//!
//! Everything a path produces is recorded in frame coordinates at a fixed
//! partition of `[0, T]`: the point, the `g_t`-orthonormal frame carried by
//! the stochastic parallel transport, and the fundamental solution `Psi(t)`
//! of the damping ODE. Parallel transport between partition times is then
//! frame composition (`u_t u_s^{-1}`), and `Q_{r,t} = Psi(r)^{-1} Psi(t)`,
//! so no per-pair matrices are stored.
//!
//! Brownian increments are drawn per uniform base step from a per-path
//! counter-based stream and split onto finer grid cells by Brownian
//! bridging from a second per-path stream. Refining the partition therefore
//! never changes the base increments, which is what makes [`replay`] exact
//! on the coarse grid and bit-identical when no new times are added.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::geometry::{DriftField, Frame, GeometryError, ManifoldModel};
use crate::linalg::{self, SqMat};

#[derive(Debug, thiserror::Error)]
pub enum PathsimError {
    #[error("horizon must be positive, got {0}")]
    BadHorizon(f64),
    #[error("steps must be at least 1")]
    NoSteps,
    #[error("n_paths must be at least 1")]
    NoPaths,
    #[error("step size h = {0} exceeds 0.1; increase steps")]
    StepTooLarge(f64),
    #[error("n_paths * steps = {needed} exceeds the budget {budget}")]
    BudgetExceeded { needed: u64, budget: u64 },
    #[error("time {t} outside [0, {t_max}]")]
    TimeOutsideRange { t: f64, t_max: f64 },
    #[error("cylindrical times must be sorted strictly increasing")]
    TimesNotSorted,
    #[error("start point is {defect} away from the model surface")]
    OffManifold { defect: f64 },
    #[error("{t} is not a partition time of this ensemble")]
    MissingPartitionTime { t: f64 },
    #[error("incompatible with the stored ensemble: {0}")]
    IncompatibleConfig(String),
    #[error(transparent)]
    Geometry(#[from] GeometryError),
    #[error("ensemble dump: {0}")]
    BadDump(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

#[derive(Copy, Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Scheme {
    GeodesicEuler,
    GeodesicHeun,
}

fn default_partition_cells() -> u32 {
    32
}

fn default_budget() -> u64 {
    1_000_000_000
}

/// Simulation controls. `partition_cells` sets the uniform refinement of the
/// stored partition (cylindrical times are always included on top);
/// `budget` caps `n_paths * steps` against accidental monster runs.
#[derive(Copy, Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SimConfig {
    pub t_horizon: f64,
    pub steps: u32,
    pub n_paths: u32,
    pub seed: u64,
    pub scheme: Scheme,
    #[serde(default = "default_partition_cells")]
    pub partition_cells: u32,
    #[serde(default = "default_budget")]
    pub budget: u64,
}

impl SimConfig {
    pub fn new(t_horizon: f64, steps: u32, n_paths: u32, seed: u64) -> Self {
        SimConfig {
            t_horizon,
            steps,
            n_paths,
            seed,
            scheme: Scheme::GeodesicEuler,
            partition_cells: default_partition_cells(),
            budget: default_budget(),
        }
    }

    pub fn step_size(&self) -> f64 {
        self.t_horizon / self.steps as f64
    }

    pub fn validate(&self) -> Result<(), PathsimError> {
        if !(self.t_horizon > 0.0) || !self.t_horizon.is_finite() {
            return Err(PathsimError::BadHorizon(self.t_horizon));
        }
        if self.steps == 0 {
            return Err(PathsimError::NoSteps);
        }
        if self.n_paths == 0 {
            return Err(PathsimError::NoPaths);
        }
        let h = self.step_size();
        if h > 0.1 + 1e-12 {
            return Err(PathsimError::StepTooLarge(h));
        }
        let needed = self.n_paths as u64 * self.steps as u64;
        if needed > self.budget {
            return Err(PathsimError::BudgetExceeded { needed, budget: self.budget });
        }
        Ok(())
    }
}

/// Everything needed to reproduce an ensemble, kept with the data.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct EnsembleMeta {
    pub model: ManifoldModel,
    pub drift: DriftField,
    pub x0: Vec<f64>,
    pub cfg: SimConfig,
    pub cylindrical: Vec<f64>,
    /// 0 for a fresh simulation; each replay bumps it and moves the bridge
    /// stream to a fresh block so chained refinements never reuse draws.
    pub replay_generation: u32,
}

/// Simulated paths sampled at the stored partition times. Layouts are flat:
/// path-major, then partition index, then the ambient / matrix entries.
#[derive(Clone, Debug)]
pub struct PathEnsemble {
    pub meta: EnsembleMeta,
    /// stored times: uniform refinement of `[0, T]` plus all cylindrical times
    partition: Vec<f64>,
    /// integration grid: uniform base steps plus the partition
    grid: Vec<f64>,
    points: Vec<f64>,
    frames: Vec<f64>,
    psis: Vec<f64>,
    /// per-cell Brownian increments (R^d coordinates); `None` for fresh
    /// ensembles, whose increments regenerate from the streams
    increments: Option<Vec<f64>>,
}

const TIME_TOL: f64 = 1e-9;

fn merge_times(t_max: f64, lists: &[&[f64]]) -> Vec<f64> {
    let tol = 1e-12 * t_max.max(1.0);
    let mut all: Vec<f64> = lists.iter().flat_map(|l| l.iter().copied()).collect();
    all.sort_by(f64::total_cmp);
    let mut out: Vec<f64> = Vec::with_capacity(all.len());
    for t in all {
        if out.last().is_none_or(|&p| t - p > tol) {
            out.push(t);
        }
    }
    out
}

fn uniform_times(t_max: f64, cells: u32) -> Vec<f64> {
    let h = t_max / cells as f64;
    let mut ts: Vec<f64> = (0..cells).map(|k| k as f64 * h).collect();
    ts.push(t_max);
    ts
}

fn find_time(times: &[f64], t: f64) -> Option<usize> {
    let i = times.partition_point(|&x| x < t - TIME_TOL);
    if i < times.len() && (times[i] - t).abs() <= TIME_TOL {
        Some(i)
    } else {
        None
    }
}

/// One path's stored records, a working buffer for the parallel map.
struct PathRecord {
    points: Vec<f64>,
    frames: Vec<f64>,
    psis: Vec<f64>,
}

fn main_stream(seed: u64, path: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(2 * path);
    rng
}

fn bridge_stream(seed: u64, path: u64, generation: u32) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(2 * path + 1);
    // each replay generation reads from its own block of the stream
    rng.set_word_pos((generation as u128) << 40);
    rng
}

fn gauss(rng: &mut ChaCha8Rng) -> f64 {
    rng.sample::<f64, _>(rand_distr::StandardNormal)
}

/// Splits the increment `w` over `[a, b]` at interior times, bridging
/// sequentially left to right. Returns one d-vector per sub-cell.
fn bridge_split(
    rng: &mut ChaCha8Rng,
    w: &[f64],
    a: f64,
    b: f64,
    interior: &[f64],
) -> Vec<Vec<f64>> {
    let d = w.len();
    let mut out = Vec::with_capacity(interior.len() + 1);
    let mut rest = w.to_vec();
    let mut left = a;
    for &m in interior {
        // W(m) - W(left) conditioned on W(b) - W(left) = rest
        let frac = (m - left) / (b - left);
        let sd = ((m - left) * (b - m) / (b - left)).sqrt();
        let mut part = vec![0.0; d];
        for i in 0..d {
            part[i] = rest[i] * frac + sd * gauss(rng);
        }
        for i in 0..d {
            rest[i] -= part[i];
        }
        out.push(part);
        left = m;
    }
    out.push(rest);
    out
}

/// Per-cell increments for one path on `grid`, drawing base-step increments
/// from the main stream and splitting them onto interior grid points with
/// the bridge stream.
fn generate_increments(
    meta: &EnsembleMeta,
    dim: usize,
    grid: &[f64],
    path: u64,
) -> Vec<f64> {
    let cfg = &meta.cfg;
    let h = cfg.step_size();
    let mut main = main_stream(cfg.seed, path);
    let mut bridge = bridge_stream(cfg.seed, path, meta.replay_generation);
    let mut incs: Vec<f64> = Vec::with_capacity((grid.len() - 1) * dim);
    let sqrt_h = h.sqrt();
    let mut cell = 0usize;
    for k in 0..cfg.steps {
        let a = k as f64 * h;
        let b = if k + 1 == cfg.steps { cfg.t_horizon } else { (k + 1) as f64 * h };
        let w: Vec<f64> = (0..dim).map(|_| sqrt_h * gauss(&mut main)).collect();
        // grid points strictly inside (a, b)
        let lo = cell + 1;
        let mut hi = lo;
        while hi < grid.len() && grid[hi] < b - TIME_TOL {
            hi += 1;
        }
        let interior = &grid[lo..hi];
        if interior.is_empty() {
            incs.extend_from_slice(&w);
        } else {
            for part in bridge_split(&mut bridge, &w, a, b, interior) {
                incs.extend_from_slice(&part);
            }
        }
        cell = hi;
    }
    debug_assert_eq!(incs.len(), (grid.len() - 1) * dim, "grid walk out of step");
    incs
}

/// Curvature form in frame coordinates: `A_ab = R(u e_a, u e_b)`.
fn curvature_coords(
    model: &ManifoldModel,
    drift: &DriftField,
    t: f64,
    x: &[f64],
    frame: &Frame,
) -> SqMat {
    let d = frame.dim;
    let mut a = SqMat::zeros(d);
    for i in 0..d {
        for j in i..d {
            let v = model
                .ricci_z(drift, t, x, frame.column(i), frame.column(j))
                .expect("validated model/drift");
            *a.at_mut(i, j) = v;
            *a.at_mut(j, i) = v;
        }
    }
    a
}

/// Advances the fundamental solution by one cell: `Psi <- Psi exp(B)` with
/// the midpoint generator `B = -(dt/4)(A0 + A1)`. Exact for constant
/// curvature coefficients, second order otherwise. Scalar multiples of the
/// identity shortcut through a plain exponential.
fn advance_psi(psi: &mut SqMat, a0: &SqMat, a1: &SqMat, dt: f64) {
    let d = a0.n;
    let b = a0.add_scaled(a1, 1.0).scaled(-dt / 4.0);
    let mean = (0..d).map(|i| b.at(i, i)).sum::<f64>() / d as f64;
    let mut off = 0.0f64;
    for i in 0..d {
        for j in 0..d {
            let target = if i == j { mean } else { 0.0 };
            off = off.max((b.at(i, j) - target).abs());
        }
    }
    if off <= 1e-14 * (1.0 + mean.abs()) {
        *psi = psi.scaled(mean.exp());
    } else {
        *psi = psi.mul(&b.exp());
    }
}

struct Integrator<'a> {
    meta: &'a EnsembleMeta,
    grid: &'a [f64],
    record_idx: &'a [usize],
}

impl Integrator<'_> {
    /// Runs one path over the whole grid from the shared start state,
    /// recording at the partition times.
    fn run(&self, incs: &[f64]) -> PathRecord {
        let model = &self.meta.model;
        let drift = &self.meta.drift;
        let dim = model.dim();
        let ambient = model.ambient_dim();
        let n_rec = self.record_idx.len();
        let mut rec = PathRecord {
            points: Vec::with_capacity(n_rec * ambient),
            frames: Vec::with_capacity(n_rec * ambient * dim),
            psis: Vec::with_capacity(n_rec * dim * dim),
        };
        let mut x = self.meta.x0.clone();
        let mut frame = model.orthonormal_frame(0.0, &x);
        let mut psi = SqMat::identity(dim);
        let mut a_left = curvature_coords(model, drift, 0.0, &x, &frame);
        let mut next_rec = 0usize;
        let mut record = |cell: usize, x: &[f64], frame: &Frame, psi: &SqMat, next_rec: &mut usize| {
            if *next_rec < self.record_idx.len() && self.record_idx[*next_rec] == cell {
                rec.points.extend_from_slice(x);
                rec.frames.extend_from_slice(&frame.cols);
                rec.psis.extend_from_slice(&psi.a);
                *next_rec += 1;
            }
        };
        record(0, &x, &frame, &psi, &mut next_rec);
        for cell in 0..self.grid.len() - 1 {
            let s = self.grid[cell];
            let t = self.grid[cell + 1];
            let dt = t - s;
            let xi = &incs[cell * dim..(cell + 1) * dim];
            let noise = frame.vector(xi);
            let mut v = noise.clone();
            match drift {
                DriftField::Zero => {}
                _ => match self.meta.cfg.scheme {
                    Scheme::GeodesicEuler => {
                        linalg::axpy(&mut v, 0.5 * dt, &drift.z(&x));
                    }
                    Scheme::GeodesicHeun => {
                        // average the drift between the current point and an
                        // Euler predictor, compared in frame coordinates
                        let z0 = drift.z(&x);
                        let mut v_pred = noise.clone();
                        linalg::axpy(&mut v_pred, 0.5 * dt, &z0);
                        let (x_pred, p_pred) = model.exp_map(s, &x, &v_pred);
                        let frame_pred = frame.transported(&p_pred);
                        let z1c = frame_pred.coords(model, s, &drift.z(&x_pred));
                        let z0c = frame.coords(model, s, &z0);
                        let mut zc = vec![0.0; dim];
                        for i in 0..dim {
                            zc[i] = 0.25 * dt * (z0c[i] + z1c[i]);
                        }
                        linalg::axpy(&mut v, 1.0, &frame.vector(&zc));
                    }
                },
            }
            let (mut x_next, transport) = model.exp_map(s, &x, &v);
            x_next = model.project_point(&x_next);
            let mut frame_next = frame.transported(&transport);
            if model.is_evolving() {
                frame_next = model.evolve_frame(&frame_next, s, dt);
            }
            let a_right = curvature_coords(model, drift, t, &x_next, &frame_next);
            advance_psi(&mut psi, &a_left, &a_right, dt);
            a_left = a_right;
            x = x_next;
            frame = frame_next;
            record(cell + 1, &x, &frame, &psi, &mut next_rec);
        }
        assert_eq!(next_rec, self.record_idx.len(), "partition times missed by the grid walk");
        rec
    }
}

/// Runs `cfg.n_paths` diffusion paths from `x0`, recording states at the
/// partition (uniform refinement plus every cylindrical time in `times`).
pub fn simulate(
    model: &ManifoldModel,
    drift: &DriftField,
    x0: &[f64],
    cfg: &SimConfig,
    times: &[f64],
) -> Result<PathEnsemble, PathsimError> {
    cfg.validate()?;
    model.validate(cfg.t_horizon)?;
    drift.validate(model)?;
    if x0.len() != model.ambient_dim() {
        return Err(GeometryError::DimensionMismatch {
            what: "start point",
            expected: model.ambient_dim(),
            got: x0.len(),
        }
        .into());
    }
    let defect = model.surface_defect(x0);
    if defect > 1e-9 {
        return Err(PathsimError::OffManifold { defect });
    }
    if times.windows(2).any(|w| w[0] >= w[1]) {
        return Err(PathsimError::TimesNotSorted);
    }
    for &t in times {
        if !(0.0..=cfg.t_horizon + TIME_TOL).contains(&t) {
            return Err(PathsimError::TimeOutsideRange { t, t_max: cfg.t_horizon });
        }
    }
    let meta = EnsembleMeta {
        model: model.clone(),
        drift: drift.clone(),
        x0: x0.to_vec(),
        cfg: *cfg,
        cylindrical: times.to_vec(),
        replay_generation: 0,
    };
    build_ensemble(meta, None)
}

fn build_ensemble(
    meta: EnsembleMeta,
    explicit_incs: Option<Vec<Vec<f64>>>,
) -> Result<PathEnsemble, PathsimError> {
    let cfg = &meta.cfg;
    let partition = merge_times(
        cfg.t_horizon,
        &[&uniform_times(cfg.t_horizon, cfg.partition_cells), &meta.cylindrical],
    );
    let grid = merge_times(cfg.t_horizon, &[&uniform_times(cfg.t_horizon, cfg.steps), &partition]);
    let record_idx: Vec<usize> = partition
        .iter()
        .map(|&t| find_time(&grid, t).expect("partition is a subset of the grid"))
        .collect();
    let dim = meta.model.dim();
    let integ = Integrator { meta: &meta, grid: &grid, record_idx: &record_idx };
    let store_incs = meta.replay_generation > 0;
    let results: Vec<(PathRecord, Option<Vec<f64>>)> = (0..cfg.n_paths as u64)
        .into_par_iter()
        .map(|p| {
            let incs = match &explicit_incs {
                Some(list) => list[p as usize].clone(),
                None => generate_increments(&meta, dim, &grid, p),
            };
            let rec = integ.run(&incs);
            (rec, if store_incs { Some(incs) } else { None })
        })
        .collect();
    let mut points = Vec::with_capacity(cfg.n_paths as usize * partition.len() * meta.model.ambient_dim());
    let mut frames = Vec::with_capacity(cfg.n_paths as usize * partition.len() * meta.model.ambient_dim() * dim);
    let mut psis = Vec::with_capacity(cfg.n_paths as usize * partition.len() * dim * dim);
    let mut increments = if store_incs {
        Some(Vec::with_capacity(cfg.n_paths as usize * (grid.len() - 1) * dim))
    } else {
        None
    };
    for (rec, incs) in results {
        points.extend(rec.points);
        frames.extend(rec.frames);
        psis.extend(rec.psis);
        if let (Some(store), Some(incs)) = (increments.as_mut(), incs) {
            store.extend(incs);
        }
    }
    Ok(PathEnsemble { meta, partition, grid, points, frames, psis, increments })
}

impl PathEnsemble {
    pub fn n_paths(&self) -> usize {
        self.meta.cfg.n_paths as usize
    }

    pub fn partition(&self) -> &[f64] {
        &self.partition
    }

    pub fn grid(&self) -> &[f64] {
        &self.grid
    }

    pub fn t_horizon(&self) -> f64 {
        self.meta.cfg.t_horizon
    }

    pub fn dim(&self) -> usize {
        self.meta.model.dim()
    }

    pub fn ambient_dim(&self) -> usize {
        self.meta.model.ambient_dim()
    }

    /// Index of `t` in the stored partition.
    pub fn time_index(&self, t: f64) -> Result<usize, PathsimError> {
        find_time(&self.partition, t).ok_or(PathsimError::MissingPartitionTime { t })
    }

    pub fn point(&self, path: usize, idx: usize) -> &[f64] {
        let n = self.ambient_dim();
        let base = (path * self.partition.len() + idx) * n;
        &self.points[base..base + n]
    }

    pub fn frame(&self, path: usize, idx: usize) -> Frame {
        let n = self.ambient_dim();
        let d = self.dim();
        let base = (path * self.partition.len() + idx) * n * d;
        Frame { ambient: n, dim: d, cols: self.frames[base..base + n * d].to_vec() }
    }

    pub fn psi(&self, path: usize, idx: usize) -> SqMat {
        let d = self.dim();
        let base = (path * self.partition.len() + idx) * d * d;
        SqMat { n: d, a: self.psis[base..base + d * d].to_vec() }
    }

    /// Parallel transport `//_{s,t}` as a coordinate operation: in frame
    /// coordinates it is the identity (the frame is the transport), so
    /// carrying a vector from partition index `from` to `to` is
    /// `u_to (u_from^{-1} w)`.
    pub fn transport(&self, path: usize, from: usize, to: usize, w: &[f64]) -> Vec<f64> {
        let t_from = self.partition[from];
        let coords = self.frame(path, from).coords(&self.meta.model, t_from, w);
        self.frame(path, to).vector(&coords)
    }

    /// `Q_{r,t} = Psi(r)^{-1} Psi(t)` in frame coordinates.
    pub fn q_matrix(&self, path: usize, r_idx: usize, t_idx: usize) -> SqMat {
        let pr = self.psi(path, r_idx);
        let pt = self.psi(path, t_idx);
        pr.inverse().expect("Psi is invertible (product of matrix exponentials)").mul(&pt)
    }
}

/// The damping functional `Q_{r,t}` for every path, as matrices acting on
/// frame coordinates at time `r`. `model` and `drift` must match the
/// ensemble's; `r <= t` must both be partition times.
pub fn q_functional(
    ens: &PathEnsemble,
    model: &ManifoldModel,
    drift: &DriftField,
    r: f64,
    t: f64,
) -> Result<Vec<SqMat>, PathsimError> {
    if *model != ens.meta.model {
        return Err(PathsimError::IncompatibleConfig("model differs from the ensemble's".into()));
    }
    if *drift != ens.meta.drift {
        return Err(PathsimError::IncompatibleConfig("drift differs from the ensemble's".into()));
    }
    if r > t + TIME_TOL {
        return Err(PathsimError::IncompatibleConfig(format!("need r <= t, got r = {r}, t = {t}")));
    }
    let ri = ens.time_index(r)?;
    let ti = ens.time_index(t)?;
    Ok((0..ens.n_paths()).map(|p| ens.q_matrix(p, ri, ti)).collect())
}

/// Re-simulates the ensemble on a partition refined by `new_times`, keeping
/// the Brownian paths: base increments are identical and new interior times
/// split cells by Brownian bridging from a fresh stream block. With
/// `new_times` already in the partition the result is bit-identical.
pub fn replay(ens: &PathEnsemble, new_times: &[f64]) -> Result<PathEnsemble, PathsimError> {
    let t_max = ens.meta.cfg.t_horizon;
    for &t in new_times {
        if !(0.0..=t_max + TIME_TOL).contains(&t) {
            return Err(PathsimError::TimeOutsideRange { t, t_max });
        }
    }
    let old_grid = &ens.grid;
    let new_grid = merge_times(t_max, &[old_grid, new_times]);
    let truly_new: Vec<f64> =
        new_grid.iter().copied().filter(|&t| find_time(old_grid, t).is_none()).collect();
    let mut meta = ens.meta.clone();
    meta.cylindrical = merge_times(t_max, &[&ens.meta.cylindrical, new_times]);
    if truly_new.is_empty() {
        // nothing to split: same grid, same increments, same walk
        return build_ensemble(meta, ens.increments.as_ref().map(|incs| {
            let per = (old_grid.len() - 1) * ens.dim();
            (0..ens.n_paths()).map(|p| incs[p * per..(p + 1) * per].to_vec()).collect()
        }));
    }
    meta.replay_generation += 1;
    let dim = ens.dim();
    let per_old = (old_grid.len() - 1) * dim;
    let split: Vec<Vec<f64>> = (0..ens.n_paths() as u64)
        .into_par_iter()
        .map(|p| {
            let old_incs: Vec<f64> = match &ens.increments {
                Some(all) => all[p as usize * per_old..(p as usize + 1) * per_old].to_vec(),
                None => generate_increments(&ens.meta, dim, old_grid, p),
            };
            let mut bridge = bridge_stream(meta.cfg.seed, p, meta.replay_generation);
            let mut out: Vec<f64> = Vec::with_capacity((new_grid.len() - 1) * dim);
            let mut pos = 0usize;
            for cell in 0..old_grid.len() - 1 {
                let a = old_grid[cell];
                let b = old_grid[cell + 1];
                let w = &old_incs[cell * dim..(cell + 1) * dim];
                let lo = pos + 1;
                let mut hi = lo;
                while hi < new_grid.len() && new_grid[hi] < b - TIME_TOL {
                    hi += 1;
                }
                let interior = &new_grid[lo..hi];
                if interior.is_empty() {
                    out.extend_from_slice(w);
                } else {
                    for part in bridge_split(&mut bridge, w, a, b, interior) {
                        out.extend(part);
                    }
                }
                pos = hi;
            }
            out
        })
        .collect();
    let out = build_ensemble(meta, Some(split))?;
    debug_assert_eq!(out.grid, new_grid, "replay grid drifted from the rebuilt one");
    Ok(out)
}

// ---------------------------------------------------------------------------
// binary dump
// ---------------------------------------------------------------------------

const DUMP_MAGIC: &[u8; 4] = b"PGEN";
const DUMP_VERSION: u32 = 1;

impl PathEnsemble {
    /// Writes the ensemble to a versioned little-endian binary file:
    /// magic, version, a JSON metadata block, the partition and grid times,
    /// then the flat point/frame/psi arrays (and increments when present).
    pub fn dump(&self, path: &std::path::Path) -> Result<(), PathsimError> {
        use std::io::Write;
        let mut out = std::io::BufWriter::new(std::fs::File::create(path)?);
        out.write_all(DUMP_MAGIC)?;
        out.write_all(&DUMP_VERSION.to_le_bytes())?;
        let meta = serde_json::to_vec(&self.meta).map_err(|e| PathsimError::BadDump(e.to_string()))?;
        out.write_all(&(meta.len() as u64).to_le_bytes())?;
        out.write_all(&meta)?;
        let write_f64s = |out: &mut std::io::BufWriter<std::fs::File>, xs: &[f64]| -> std::io::Result<()> {
            out.write_all(&(xs.len() as u64).to_le_bytes())?;
            for x in xs {
                out.write_all(&x.to_le_bytes())?;
            }
            Ok(())
        };
        write_f64s(&mut out, &self.partition)?;
        write_f64s(&mut out, &self.grid)?;
        write_f64s(&mut out, &self.points)?;
        write_f64s(&mut out, &self.frames)?;
        write_f64s(&mut out, &self.psis)?;
        match &self.increments {
            Some(incs) => {
                out.write_all(&[1u8])?;
                write_f64s(&mut out, incs)?;
            }
            None => out.write_all(&[0u8])?,
        }
        Ok(())
    }

    pub fn load(path: &std::path::Path) -> Result<PathEnsemble, PathsimError> {
        use std::io::Read;
        let mut inp = std::io::BufReader::new(std::fs::File::open(path)?);
        let mut magic = [0u8; 4];
        inp.read_exact(&mut magic)?;
        if &magic != DUMP_MAGIC {
            return Err(PathsimError::BadDump("bad magic".into()));
        }
        let mut word = [0u8; 4];
        inp.read_exact(&mut word)?;
        let version = u32::from_le_bytes(word);
        if version != DUMP_VERSION {
            return Err(PathsimError::BadDump(format!("unsupported version {version}")));
        }
        let mut len8 = [0u8; 8];
        inp.read_exact(&mut len8)?;
        let meta_len = u64::from_le_bytes(len8) as usize;
        if meta_len > 1 << 24 {
            return Err(PathsimError::BadDump("oversized metadata block".into()));
        }
        let mut meta_buf = vec![0u8; meta_len];
        inp.read_exact(&mut meta_buf)?;
        let meta: EnsembleMeta =
            serde_json::from_slice(&meta_buf).map_err(|e| PathsimError::BadDump(e.to_string()))?;
        let read_f64s = |inp: &mut std::io::BufReader<std::fs::File>| -> Result<Vec<f64>, PathsimError> {
            let mut len8 = [0u8; 8];
            inp.read_exact(&mut len8)?;
            let n = u64::from_le_bytes(len8) as usize;
            if n > 1 << 33 {
                return Err(PathsimError::BadDump("oversized array".into()));
            }
            let mut buf = vec![0u8; n * 8];
            inp.read_exact(&mut buf)?;
            Ok(buf.chunks_exact(8).map(|c| f64::from_le_bytes(c.try_into().unwrap())).collect())
        };
        let partition = read_f64s(&mut inp)?;
        let grid = read_f64s(&mut inp)?;
        let points = read_f64s(&mut inp)?;
        let frames = read_f64s(&mut inp)?;
        let psis = read_f64s(&mut inp)?;
        let mut flag = [0u8; 1];
        inp.read_exact(&mut flag)?;
        let increments = if flag[0] == 1 { Some(read_f64s(&mut inp)?) } else { None };
        let ens = PathEnsemble { meta, partition, grid, points, frames, psis, increments };
        let np = ens.n_paths();
        let pl = ens.partition.len();
        let expect = [
            (ens.points.len(), np * pl * ens.ambient_dim(), "points"),
            (ens.frames.len(), np * pl * ens.ambient_dim() * ens.dim(), "frames"),
            (ens.psis.len(), np * pl * ens.dim() * ens.dim(), "psis"),
        ];
        for (got, want, what) in expect {
            if got != want {
                return Err(PathsimError::BadDump(format!("{what}: expected {want} values, got {got}")));
            }
        }
        Ok(ens)
    }
}
