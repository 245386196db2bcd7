//! JSON-configured experiment runs: bound tables over a horizon grid plus
//! Monte-Carlo inequality checks against a shared path ensemble, written out
//! as deterministic reports.
//!
//! A run is one [`ExperimentConfig`] (a single JSON document, `schema_version`
//! 1). [`run`] resolves it, evaluates the gap bound for every horizon in the
//! grid, executes the requested checks, and writes
//!
//! * `bounds.csv` with one row per horizon,
//! * `checks.jsonl` with one JSON object per check job,
//! * `h_of_T.dat` and `ratio_of_T.dat`, two-column gnuplot data,
//! * `resolved_config.json`, the exact configuration that produced the rest.
//!
//! Identical configs give byte-identical files: jobs are collected in
//! declaration order regardless of scheduling, every per-job seed is mixed
//! from the base seed, and floats in the CSV / plot files are printed with
//! 17 significant digits. JSON objects serialize with sorted keys.

use crate::bounds::{self, BoundReport, ConstantPinching, SearchMode, SearchPolicy};
use crate::functional::{self, BaseFunction, CylindricalFunction, Kernel};
use crate::geometry::{self, DriftField, GeometryError, ManifoldModel};
use crate::optimize::{self, OptimizeError, TimeCurve};
use crate::pathsim::{simulate, PathEnsemble, PathsimError, SimConfig};
use crate::verify::{self, NestedParams, ProbeParams, Verdict, VerifyError};
use rand::SeedableRng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::fmt::Write as _;
use std::fs;
use std::io::Write as _;
use std::path::{Path, PathBuf};

#[derive(Debug, thiserror::Error)]
pub enum ExperimentError {
    /// The config cannot describe a runnable experiment. Exit code 2.
    #[error("config: {0}")]
    Config(String),
    /// A simulation or nested re-simulation would exceed its cell budget.
    /// Exit code 3.
    #[error("budget: {0}")]
    Budget(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl ExperimentError {
    /// Process exit code for the front end: config trouble is 2, blown
    /// budgets are 3. I/O failures count as config trouble (bad out dir).
    pub fn exit_code(&self) -> u8 {
        match self {
            ExperimentError::Budget(_) => 3,
            _ => 2,
        }
    }
}

impl From<GeometryError> for ExperimentError {
    fn from(e: GeometryError) -> Self {
        ExperimentError::Config(e.to_string())
    }
}

impl From<bounds::BoundsError> for ExperimentError {
    fn from(e: bounds::BoundsError) -> Self {
        ExperimentError::Config(e.to_string())
    }
}

impl From<OptimizeError> for ExperimentError {
    fn from(e: OptimizeError) -> Self {
        ExperimentError::Config(e.to_string())
    }
}

impl From<functional::FunctionalError> for ExperimentError {
    fn from(e: functional::FunctionalError) -> Self {
        ExperimentError::Config(e.to_string())
    }
}

impl From<PathsimError> for ExperimentError {
    fn from(e: PathsimError) -> Self {
        match e {
            PathsimError::BudgetExceeded { .. } => ExperimentError::Budget(e.to_string()),
            other => ExperimentError::Config(other.to_string()),
        }
    }
}

impl From<VerifyError> for ExperimentError {
    fn from(e: VerifyError) -> Self {
        match e {
            VerifyError::NestedBudget { .. } => ExperimentError::Budget(e.to_string()),
            VerifyError::Pathsim(PathsimError::BudgetExceeded { .. }) => {
                ExperimentError::Budget(e.to_string())
            }
            other => ExperimentError::Config(other.to_string()),
        }
    }
}

// ---------------------------------------------------------------------------
// config schema
// ---------------------------------------------------------------------------

/// Curvature pinching: derived exactly from the model and drift, or declared
/// and spot-checked against sampled curvature values.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PinchingSpec {
    Derived,
    Declared { k1: f64, k2: f64 },
}

/// A named cylindrical functional: `kernel` applied to the path at `times`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FunctionalSpec {
    pub name: String,
    pub times: Vec<f64>,
    pub kernel: Kernel,
}

impl FunctionalSpec {
    pub fn build(&self) -> Result<CylindricalFunction, ExperimentError> {
        CylindricalFunction::new(self.times.clone(), self.kernel.clone())
            .map_err(|e| ExperimentError::Config(format!("functional '{}': {e}", self.name)))
    }
}

fn default_inner() -> u32 {
    128
}

/// One requested check. Ensemble checks (`poincare`, `log_sobolev`,
/// `rayleigh`, `chain`, the martingale pair) run once per functional in the
/// config; the pointwise semigroup probes carry their own base function.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "check", rename_all = "snake_case")]
pub enum CheckSpec {
    /// Variance of `F` against `H` times the Dirichlet energy.
    Poincare,
    /// Entropy of `F^2` against `2H` times the Dirichlet energy.
    LogSobolev,
    /// Variance / energy ratio with its standard error; fails only when the
    /// ratio clears `H` by the margin (same statistic as `poincare`).
    Rayleigh,
    /// Path-wise damped and averaged chain inequalities at every stored
    /// partition time; passes when the worst slack stays above `-10` steps.
    Chain,
    /// Pointwise gradient estimate for the semigroup at time `t` with
    /// commutation rate `c`, from finite differences at `start` (the model's
    /// canonical point when absent).
    GradientEstimate {
        f: BaseFunction,
        t: f64,
        c: f64,
        #[serde(default)]
        start: Option<Vec<f64>>,
    },
    /// Second pointwise characterization (cross terms in `grad f`) at time
    /// `t` with commutation rate `c`.
    SecondCharacterization {
        f: BaseFunction,
        t: f64,
        c: f64,
        #[serde(default)]
        start: Option<Vec<f64>>,
    },
    /// Growth of conditional second moments between `t1` and `t2` against
    /// the damped-energy integral, by nested re-simulation on a dedicated
    /// smaller ensemble (`outer` paths, `inner` re-simulations per path).
    Martingale {
        t1: f64,
        t2: f64,
        c: f64,
        #[serde(default = "default_inner")]
        inner: u32,
        #[serde(default)]
        outer: Option<u32>,
    },
    /// Entropy variant of `martingale`. The plug-in conditional entropy is
    /// biased at finite inner sample size, so this check is experimental and
    /// reported but never part of the packaged scenarios.
    MartingaleEntropy {
        t1: f64,
        t2: f64,
        c: f64,
        #[serde(default = "default_inner")]
        inner: u32,
        #[serde(default)]
        outer: Option<u32>,
    },
}

impl CheckSpec {
    /// Ensemble checks fan out over the functional list.
    fn per_functional(&self) -> bool {
        !matches!(
            self,
            CheckSpec::GradientEstimate { .. } | CheckSpec::SecondCharacterization { .. }
        )
    }

    fn label(&self) -> &'static str {
        match self {
            CheckSpec::Poincare => "poincare",
            CheckSpec::LogSobolev => "log_sobolev",
            CheckSpec::Rayleigh => "rayleigh",
            CheckSpec::Chain => "chain",
            CheckSpec::GradientEstimate { .. } => "gradient_estimate",
            CheckSpec::SecondCharacterization { .. } => "second_characterization",
            CheckSpec::Martingale { .. } => "martingale",
            CheckSpec::MartingaleEntropy { .. } => "martingale_entropy",
        }
    }
}

/// Horizon grid and search policy for the bound table.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BoundsSpec {
    pub mode: SearchMode,
    pub t_grid: Vec<f64>,
}

/// Report file names, all relative to the chosen output directory.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct OutputSpec {
    pub bounds_csv: String,
    pub checks_jsonl: String,
    pub h_plot: String,
    pub ratio_plot: String,
    pub resolved_config: String,
}

impl Default for OutputSpec {
    fn default() -> Self {
        OutputSpec {
            bounds_csv: "bounds.csv".into(),
            checks_jsonl: "checks.jsonl".into(),
            h_plot: "h_of_T.dat".into(),
            ratio_plot: "ratio_of_T.dat".into(),
            resolved_config: "resolved_config.json".into(),
        }
    }
}

/// One experiment: a model with drift, a pinching certificate (derived or
/// declared), a simulation budget, named functionals, checks, a bound grid
/// and output locations. `sim.t_horizon` is the horizon every check runs at;
/// the bound grid may range elsewhere.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub schema_version: u32,
    pub name: String,
    pub model: ManifoldModel,
    pub drift: DriftField,
    /// Start point of every ensemble; the model's canonical point when absent.
    #[serde(default)]
    pub start: Option<Vec<f64>>,
    pub pinching: PinchingSpec,
    pub sim: SimConfig,
    #[serde(default)]
    pub functionals: Vec<FunctionalSpec>,
    #[serde(default)]
    pub checks: Vec<CheckSpec>,
    pub bounds: BoundsSpec,
    #[serde(default)]
    pub output: OutputSpec,
}

impl ExperimentConfig {
    /// Parse a JSON document, reporting the line and column on failure.
    pub fn from_json(text: &str) -> Result<Self, ExperimentError> {
        serde_json::from_str(text).map_err(|e| {
            ExperimentError::Config(format!("line {} column {}: {e}", e.line(), e.column()))
        })
    }

    pub fn to_json(&self) -> String {
        // infallible for this schema: no maps with non-string keys
        serde_json::to_string_pretty(self).expect("config serializes")
    }
}

// ---------------------------------------------------------------------------
// resolution
// ---------------------------------------------------------------------------

/// Front-end overrides and the output directory for one run.
#[derive(Clone, Debug)]
pub struct RunOptions {
    pub out_dir: PathBuf,
    pub bounds_only: bool,
    pub seed_override: Option<u64>,
    pub paths_override: Option<u32>,
}

impl RunOptions {
    pub fn new(out_dir: impl Into<PathBuf>) -> Self {
        RunOptions {
            out_dir: out_dir.into(),
            bounds_only: false,
            seed_override: None,
            paths_override: None,
        }
    }
}

/// A validated experiment: overrides applied, pinching curves in hand,
/// functionals built.
#[derive(Debug)]
struct Resolved {
    config: ExperimentConfig,
    k1: TimeCurve,
    k2: TimeCurve,
    constants: Option<(f64, f64)>,
    functionals: Vec<CylindricalFunction>,
    start: Vec<f64>,
}

fn bad(msg: impl Into<String>) -> ExperimentError {
    ExperimentError::Config(msg.into())
}

/// splitmix64, the per-job seed mix.
fn job_seed(base: u64, salt: u64) -> u64 {
    let mut z = base ^ salt.wrapping_mul(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

fn resolve(cfg: &ExperimentConfig, opts: &RunOptions) -> Result<Resolved, ExperimentError> {
    if cfg.schema_version != 1 {
        return Err(bad(format!("unsupported schema_version {}", cfg.schema_version)));
    }
    let mut config = cfg.clone();
    if let Some(seed) = opts.seed_override {
        config.sim.seed = seed;
    }
    if let Some(paths) = opts.paths_override {
        config.sim.n_paths = paths;
    }

    if config.bounds.t_grid.is_empty() {
        return Err(bad("bounds.t_grid must not be empty"));
    }
    for &t in &config.bounds.t_grid {
        if !(t.is_finite() && t > 0.0) {
            return Err(bad(format!("bounds.t_grid entry {t} is not a positive horizon")));
        }
    }
    let t_all = config
        .bounds
        .t_grid
        .iter()
        .cloned()
        .fold(config.sim.t_horizon, f64::max);

    config.model.validate(t_all)?;
    config.drift.validate(&config.model)?;
    config.sim.validate()?;

    let t0 = config.sim.t_horizon;
    let ambient = config.model.ambient_dim();
    let mut functionals = Vec::with_capacity(config.functionals.len());
    for spec in &config.functionals {
        let f = spec.build()?;
        f.validate(ambient)
            .map_err(|e| bad(format!("functional '{}': {e}", spec.name)))?;
        if let Some(&last) = f.times().last() {
            if last > t0 + 1e-12 {
                return Err(bad(format!(
                    "functional '{}' samples the path at {last}, after the horizon {t0}",
                    spec.name
                )));
            }
        }
        functionals.push(f);
    }

    for check in &config.checks {
        if check.per_functional() && config.functionals.is_empty() {
            return Err(bad(format!(
                "check '{}' needs at least one functional",
                check.label()
            )));
        }
        match check {
            CheckSpec::GradientEstimate { f, t, .. }
            | CheckSpec::SecondCharacterization { f, t, .. } => {
                f.validate(ambient).map_err(|e| bad(format!("{}: {e}", check.label())))?;
                if !(t.is_finite() && *t >= 0.0) {
                    return Err(bad(format!("{}: time {t} is negative", check.label())));
                }
            }
            CheckSpec::Martingale { t1, t2, inner, .. }
            | CheckSpec::MartingaleEntropy { t1, t2, inner, .. } => {
                if !(0.0 <= *t1 && t1 <= t2 && *t2 <= t0 + 1e-12) {
                    return Err(bad(format!(
                        "{}: need 0 <= t1 <= t2 <= {t0}, got t1={t1}, t2={t2}",
                        check.label()
                    )));
                }
                if *inner < 2 {
                    return Err(bad(format!("{}: inner {inner} < 2", check.label())));
                }
            }
            _ => {}
        }
    }

    let (k1, k2) = match &config.pinching {
        PinchingSpec::Derived => {
            let cert = geometry::pinching(&config.model, &config.drift, t_all)?;
            (cert.k1, cert.k2)
        }
        PinchingSpec::Declared { k1, k2 } => {
            if !(k1.is_finite() && k2.is_finite() && k1 <= k2) {
                return Err(bad(format!("declared pinching needs k1 <= k2, got [{k1}, {k2}]")));
            }
            let cert = geometry::PinchingCertificate::constant(*k1, *k2, "declared");
            let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(job_seed(
                config.sim.seed,
                0x6465_636c,
            ));
            geometry::certify(&config.model, &config.drift, t_all, &cert, 256, 1e-6, &mut rng)
                .map_err(|e| bad(format!("declared pinching rejected: {e}")))?;
            (cert.k1, cert.k2)
        }
    };
    let constants = match (&k1, &k2) {
        (TimeCurve::Constant { value: a }, TimeCurve::Constant { value: b }) => Some((*a, *b)),
        _ => None,
    };

    let start = match &config.start {
        Some(x) => x.clone(),
        None => config.model.base_point(),
    };

    Ok(Resolved { config, k1, k2, constants, functionals, start })
}

// ---------------------------------------------------------------------------
// bound table
// ---------------------------------------------------------------------------

/// One row of the bound table: the report at horizon `t`, the pinching
/// constants it used (curve envelope when not constant), and the short-
/// horizon polynomial value.
#[derive(Clone, Debug, Serialize)]
pub struct BoundRow {
    pub t: f64,
    pub k1: f64,
    pub k2: f64,
    pub report: BoundReport,
    pub asymptotic: f64,
}

fn curve_envelope(k1: &TimeCurve, k2: &TimeCurve, t_max: f64) -> (f64, f64) {
    let n = 4096;
    let mut lo = f64::INFINITY;
    let mut hi = f64::NEG_INFINITY;
    for i in 0..=n {
        let t = t_max * i as f64 / n as f64;
        lo = lo.min(k1.eval(t));
        hi = hi.max(k2.eval(t));
    }
    (lo, hi)
}

fn bound_rows(rx: &Resolved) -> Result<Vec<BoundRow>, ExperimentError> {
    let policy = match rx.config.bounds.mode {
        SearchMode::ClosedFormOnly => SearchPolicy::closed_form(),
        SearchMode::OptimizeC => SearchPolicy::optimize_c(),
    };
    let mut rows = Vec::with_capacity(rx.config.bounds.t_grid.len());
    for &t in &rx.config.bounds.t_grid {
        let (report, k1, k2) = match rx.constants {
            Some((k1, k2)) => {
                let pin = ConstantPinching::new(k1, k2)?;
                (bounds::h_bound(t, &pin, &policy)?, k1, k2)
            }
            None => {
                let (k1, k2) = curve_envelope(&rx.k1, &rx.k2, t);
                (optimize::tilde_h(t, &rx.k1, &rx.k2, &policy)?, k1, k2)
            }
        };
        let asymptotic = bounds::asymptotic_bound(t, &ConstantPinching::new(k1, k2)?)?;
        rows.push(BoundRow { t, k1, k2, report, asymptotic });
    }
    Ok(rows)
}

/// The bound at the check horizon, for `poincare` / `log_sobolev` /
/// `rayleigh` records.
fn bound_at_horizon(rx: &Resolved) -> Result<BoundReport, ExperimentError> {
    let policy = match rx.config.bounds.mode {
        SearchMode::ClosedFormOnly => SearchPolicy::closed_form(),
        SearchMode::OptimizeC => SearchPolicy::optimize_c(),
    };
    let t = rx.config.sim.t_horizon;
    Ok(match rx.constants {
        Some((k1, k2)) => bounds::h_bound(t, &ConstantPinching::new(k1, k2)?, &policy)?,
        None => optimize::tilde_h(t, &rx.k1, &rx.k2, &policy)?,
    })
}

// ---------------------------------------------------------------------------
// check jobs
// ---------------------------------------------------------------------------

struct Job {
    index: usize,
    check: CheckSpec,
    /// position in the functional list for ensemble checks
    fidx: Option<usize>,
}

struct JobOutput {
    record: serde_json::Value,
    verdict: Verdict,
}

fn job_list(rx: &Resolved) -> Vec<Job> {
    let mut jobs = Vec::new();
    for check in &rx.config.checks {
        if check.per_functional() {
            for fidx in 0..rx.functionals.len() {
                jobs.push(Job { index: jobs.len(), check: check.clone(), fidx: Some(fidx) });
            }
        } else {
            jobs.push(Job { index: jobs.len(), check: check.clone(), fidx: None });
        }
    }
    jobs
}

/// Cylindrical times the shared ensemble must store: all functional times
/// plus positive martingale checkpoints.
fn shared_times(rx: &Resolved) -> Vec<f64> {
    let mut ts: Vec<f64> = rx.functionals.iter().flat_map(|f| f.times().iter().cloned()).collect();
    for check in &rx.config.checks {
        if let CheckSpec::Martingale { t1, t2, .. } | CheckSpec::MartingaleEntropy { t1, t2, .. } =
            check
        {
            ts.push(*t1);
            ts.push(*t2);
        }
    }
    ts.retain(|&t| t > 1e-12);
    ts.sort_by(|a, b| a.partial_cmp(b).unwrap());
    ts.dedup_by(|a, b| (*a - *b).abs() <= 1e-12);
    ts
}

fn verdict_value(v: Verdict) -> serde_json::Value {
    serde_json::to_value(v).expect("verdict serializes")
}

/// Record for checks that produce an [`verify::InequalityCheck`]: the check
/// struct itself plus run bookkeeping.
fn inequality_record(
    rx: &Resolved,
    job: &Job,
    check: &verify::InequalityCheck,
) -> Result<JobOutput, ExperimentError> {
    let mut record = serde_json::to_value(check).expect("check serializes");
    annotate(rx, job, &mut record);
    Ok(JobOutput { record, verdict: check.verdict })
}

fn annotate(rx: &Resolved, job: &Job, record: &mut serde_json::Value) {
    let obj = record.as_object_mut().expect("record is an object");
    obj.insert("scenario".into(), rx.config.name.clone().into());
    obj.insert("job".into(), job.index.into());
    obj.insert("t_horizon".into(), rx.config.sim.t_horizon.into());
    obj.insert(
        "functional".into(),
        match job.fidx {
            Some(i) => rx.config.functionals[i].name.clone().into(),
            None => serde_json::Value::Null,
        },
    );
    obj.insert(
        "inputs".into(),
        serde_json::to_value(&job.check).expect("check spec serializes"),
    );
}

fn probe_params(rx: &Resolved, job: &Job, start: &Option<Vec<f64>>) -> ProbeParams {
    ProbeParams {
        paths: rx.config.sim.n_paths,
        steps: rx.config.sim.steps,
        seed: job_seed(rx.config.sim.seed, 0x7072 + job.index as u64),
        eps_scale: 1e-3,
        margin_sigmas: 3.0,
        start: start.clone().or_else(|| Some(rx.start.clone())),
    }
}

/// Dedicated smaller ensemble for a nested martingale job; the outer count
/// defaults to 1500 paths or the configured count, whichever is smaller.
fn martingale_ensemble(
    rx: &Resolved,
    job: &Job,
    outer: Option<u32>,
) -> Result<PathEnsemble, ExperimentError> {
    let mut cfg = rx.config.sim;
    let fallback = cfg.n_paths.min(1500);
    cfg.n_paths = outer.unwrap_or(fallback).max(2);
    cfg.seed = job_seed(rx.config.sim.seed, 0x6d61 + job.index as u64);
    let f = &rx.functionals[job.fidx.expect("martingale checks are per functional")];
    let (t1, t2) = match job.check {
        CheckSpec::Martingale { t1, t2, .. } | CheckSpec::MartingaleEntropy { t1, t2, .. } => {
            (t1, t2)
        }
        _ => unreachable!("not a martingale job"),
    };
    let mut ts: Vec<f64> = f.times().to_vec();
    ts.push(t1);
    ts.push(t2);
    ts.retain(|&t| t > 1e-12);
    ts.sort_by(|a, b| a.partial_cmp(b).unwrap());
    ts.dedup_by(|a, b| (*a - *b).abs() <= 1e-12);
    Ok(simulate(&rx.config.model, &rx.config.drift, &rx.start, &cfg, &ts)?)
}

fn run_job(
    rx: &Resolved,
    job: &Job,
    ens: Option<&PathEnsemble>,
    bound: Option<&BoundReport>,
) -> Result<JobOutput, ExperimentError> {
    let f = job.fidx.map(|i| &rx.functionals[i]);
    match &job.check {
        CheckSpec::Poincare => {
            let check = verify::check_poincare(
                f.expect("per functional"),
                ens.expect("shared ensemble"),
                bound.expect("bound at horizon"),
            )?;
            inequality_record(rx, job, &check)
        }
        CheckSpec::LogSobolev => {
            let check = verify::check_log_sobolev(
                f.expect("per functional"),
                ens.expect("shared ensemble"),
                bound.expect("bound at horizon"),
            )?;
            inequality_record(rx, job, &check)
        }
        CheckSpec::Rayleigh => {
            let rq =
                verify::rayleigh_quotient(f.expect("per functional"), ens.expect("shared"))?;
            let h = bound.expect("bound at horizon").h;
            // same one-sided reading as `poincare`, phrased on the ratio
            let verdict = if rq.ratio - 3.0 * rq.ratio_std_error > h {
                Verdict::Fail
            } else {
                Verdict::Pass
            };
            let mut record = serde_json::to_value(&rq).expect("quotient serializes");
            let obj = record.as_object_mut().unwrap();
            obj.insert("name".into(), "rayleigh".into());
            obj.insert("h".into(), h.into());
            obj.insert("ratio_over_h".into(), (rq.ratio / h).into());
            obj.insert("verdict".into(), verdict_value(verdict));
            annotate(rx, job, &mut record);
            Ok(JobOutput { record, verdict })
        }
        CheckSpec::Chain => {
            let ens = ens.expect("shared ensemble");
            let f = f.expect("per functional");
            let (k1, k2) = rx.constants.ok_or_else(|| {
                bad("chain check needs constant pinching; this model's curvature varies")
            })?;
            let mut worst_damped = f64::INFINITY;
            let mut worst_modified = f64::INFINITY;
            for &t in ens.partition() {
                if t >= rx.config.sim.t_horizon - 1e-12 {
                    continue;
                }
                for s in functional::damped_chain_slack(f, ens, k1, k2, t)? {
                    worst_damped = worst_damped.min(s);
                }
                for s in functional::modified_chain_slack(f, ens, k1, k2, t)? {
                    worst_modified = worst_modified.min(s);
                }
            }
            let allowed = -10.0 * rx.config.sim.step_size();
            let verdict = if worst_damped >= allowed && worst_modified >= allowed {
                Verdict::Pass
            } else {
                Verdict::Fail
            };
            let mut record = serde_json::json!({
                "name": "chain",
                "worst_damped_slack": worst_damped,
                "worst_modified_slack": worst_modified,
                "allowed_slack": allowed,
                "verdict": verdict_value(verdict),
            });
            annotate(rx, job, &mut record);
            Ok(JobOutput { record, verdict })
        }
        CheckSpec::GradientEstimate { f, t, c, start } => {
            let params = probe_params(rx, job, start);
            let check = verify::check_gradient_estimate(
                &rx.config.model,
                &rx.config.drift,
                f,
                *t,
                *c,
                &params,
            )?;
            inequality_record(rx, job, &check)
        }
        CheckSpec::SecondCharacterization { f, t, c, start } => {
            let params = probe_params(rx, job, start);
            let check = verify::check_second_characterization(
                &rx.config.model,
                &rx.config.drift,
                f,
                *t,
                *c,
                &params,
            )?;
            inequality_record(rx, job, &check)
        }
        CheckSpec::Martingale { t1, t2, c, inner, outer } => {
            let ens = martingale_ensemble(rx, job, *outer)?;
            let mut params = NestedParams::new(*c);
            params.inner = *inner;
            let check = verify::check_martingale_decomposition(
                f.expect("per functional"),
                &ens,
                *t1,
                *t2,
                &params,
            )?;
            inequality_record(rx, job, &check)
        }
        CheckSpec::MartingaleEntropy { t1, t2, c, inner, outer } => {
            let ens = martingale_ensemble(rx, job, *outer)?;
            let mut params = NestedParams::new(*c);
            params.inner = *inner;
            let check = verify::check_martingale_entropy(
                f.expect("per functional"),
                &ens,
                *t1,
                *t2,
                &params,
            )?;
            inequality_record(rx, job, &check)
        }
    }
}

// ---------------------------------------------------------------------------
// ratio sweep
// ---------------------------------------------------------------------------

/// Variance / energy ratio of the first functional at each grid horizon,
/// with its sampling times rescaled proportionally. Each point simulates a
/// fresh ensemble at a seed mixed from the grid position.
fn ratio_sweep(rx: &Resolved) -> Result<Vec<(f64, f64)>, ExperimentError> {
    let spec = &rx.config.functionals[0];
    let t0 = rx.config.sim.t_horizon;
    let mut rows = Vec::with_capacity(rx.config.bounds.t_grid.len());
    for (i, &t) in rx.config.bounds.t_grid.iter().enumerate() {
        let scale = t / t0;
        let times: Vec<f64> = spec.times.iter().map(|&ti| ti * scale).collect();
        let f = CylindricalFunction::new(times.clone(), spec.kernel.clone())
            .map_err(|e| bad(format!("functional '{}' rescaled to {t}: {e}", spec.name)))?;
        let mut cfg = rx.config.sim;
        cfg.t_horizon = t;
        cfg.steps = ((cfg.steps as f64 * scale).ceil() as u32).max(1);
        cfg.seed = job_seed(rx.config.sim.seed, 0x7261 + i as u64);
        let ens = simulate(&rx.config.model, &rx.config.drift, &rx.start, &cfg, &times)?;
        let rq = verify::rayleigh_quotient(&f, &ens)?;
        rows.push((t, rq.ratio));
    }
    Ok(rows)
}

// ---------------------------------------------------------------------------
// writers
// ---------------------------------------------------------------------------

fn fmt17(x: f64) -> String {
    // 17 significant digits round-trip every f64
    format!("{x:.16e}")
}

fn write_bounds_csv(path: &Path, rows: &[BoundRow]) -> Result<(), ExperimentError> {
    let mut text = String::from("T,k1,k2,fang_wu,product,h,branch,c_star,asymptotic\n");
    for row in rows {
        let _ = writeln!(
            text,
            "{},{},{},{},{},{},{},{},{}",
            fmt17(row.t),
            fmt17(row.k1),
            fmt17(row.k2),
            fmt17(row.report.fang_wu),
            fmt17(row.report.product),
            fmt17(row.report.h),
            row.report.branch,
            fmt17(row.report.c_star),
            fmt17(row.asymptotic),
        );
    }
    fs::write(path, text)?;
    Ok(())
}

fn write_two_col(path: &Path, header: &str, rows: &[(f64, f64)]) -> Result<(), ExperimentError> {
    let mut text = format!("# {header}\n");
    for &(a, b) in rows {
        let _ = writeln!(text, "{} {}", fmt17(a), fmt17(b));
    }
    fs::write(path, text)?;
    Ok(())
}

fn write_jsonl(path: &Path, records: &[serde_json::Value]) -> Result<(), ExperimentError> {
    let mut out = fs::File::create(path)?;
    for record in records {
        // sorted keys via the default BTreeMap representation keep this stable
        writeln!(out, "{record}")?;
    }
    Ok(())
}

// ---------------------------------------------------------------------------
// the runner
// ---------------------------------------------------------------------------

/// What a run produced, for the front end's summary and exit code.
#[derive(Clone, Debug)]
pub struct RunOutcome {
    pub bounds_rows: usize,
    pub checks_run: usize,
    pub failures: usize,
    pub inconclusive: usize,
    pub files: Vec<PathBuf>,
    /// one line per check, already formatted
    pub check_lines: Vec<String>,
}

impl RunOutcome {
    pub fn exit_code(&self) -> u8 {
        if self.failures > 0 {
            1
        } else {
            0
        }
    }
}

/// Execute a config: bound table always, checks and plot sweeps unless
/// `bounds_only`. Files land in `opts.out_dir` (created if missing). Checks
/// run on a work queue but are reported in declaration order; reruns with
/// the same config produce byte-identical files.
pub fn run(cfg: &ExperimentConfig, opts: &RunOptions) -> Result<RunOutcome, ExperimentError> {
    let rx = resolve(cfg, opts)?;
    fs::create_dir_all(&opts.out_dir)?;
    let mut files = Vec::new();

    let rows = bound_rows(&rx)?;
    let bounds_path = opts.out_dir.join(&rx.config.output.bounds_csv);
    write_bounds_csv(&bounds_path, &rows)?;
    files.push(bounds_path);
    let h_rows: Vec<(f64, f64)> = rows.iter().map(|r| (r.t, r.report.h)).collect();
    let h_path = opts.out_dir.join(&rx.config.output.h_plot);
    write_two_col(&h_path, "T  H(T)", &h_rows)?;
    files.push(h_path);

    let resolved_path = opts.out_dir.join(&rx.config.output.resolved_config);
    fs::write(&resolved_path, rx.config.to_json())?;
    files.push(resolved_path);

    let mut outcome = RunOutcome {
        bounds_rows: rows.len(),
        checks_run: 0,
        failures: 0,
        inconclusive: 0,
        files,
        check_lines: Vec::new(),
    };
    if opts.bounds_only {
        return Ok(outcome);
    }

    let jobs = job_list(&rx);
    let needs_ens = jobs.iter().any(|j| {
        matches!(
            j.check,
            CheckSpec::Poincare | CheckSpec::LogSobolev | CheckSpec::Rayleigh | CheckSpec::Chain
        )
    });
    let needs_bound = jobs.iter().any(|j| {
        matches!(j.check, CheckSpec::Poincare | CheckSpec::LogSobolev | CheckSpec::Rayleigh)
    });
    let ens = if needs_ens {
        let times = shared_times(&rx);
        Some(simulate(&rx.config.model, &rx.config.drift, &rx.start, &rx.config.sim, &times)?)
    } else {
        None
    };
    let bound = if needs_bound { Some(bound_at_horizon(&rx)?) } else { None };

    let results: Vec<Result<JobOutput, ExperimentError>> = jobs
        .par_iter()
        .map(|job| run_job(&rx, job, ens.as_ref(), bound.as_ref()))
        .collect();
    let mut records = Vec::with_capacity(results.len());
    for (job, result) in jobs.iter().zip(results) {
        let output = result?;
        let name = output.record["name"].as_str().unwrap_or("?").to_string();
        let functional = job
            .fidx
            .map(|i| format!(" [{}]", rx.config.functionals[i].name))
            .unwrap_or_default();
        outcome.check_lines.push(format!("{:<12} {name}{functional}", format!("{}", output.verdict)));
        outcome.checks_run += 1;
        match output.verdict {
            Verdict::Fail => outcome.failures += 1,
            Verdict::Inconclusive => outcome.inconclusive += 1,
            Verdict::Pass => {}
        }
        records.push(output.record);
    }
    let checks_path = opts.out_dir.join(&rx.config.output.checks_jsonl);
    write_jsonl(&checks_path, &records)?;
    outcome.files.push(checks_path);

    if !rx.functionals.is_empty() {
        let ratio_rows = ratio_sweep(&rx)?;
        let ratio_path = opts.out_dir.join(&rx.config.output.ratio_plot);
        write_two_col(&ratio_path, "T  variance/energy ratio", &ratio_rows)?;
        outcome.files.push(ratio_path);
    }

    Ok(outcome)
}

// ---------------------------------------------------------------------------
// short-horizon comparison table
// ---------------------------------------------------------------------------

/// One row of [`compare_asymptotics`]: the exact bound, both branch values,
/// the quadratic short-horizon polynomial and the residual scaled by `T^2`.
#[derive(Clone, Debug, Serialize)]
pub struct AsymptoticsRow {
    pub t: f64,
    pub h: f64,
    pub fang_wu: f64,
    pub product: f64,
    pub polynomial: f64,
    pub residual_over_t2: f64,
}

/// Side-by-side view of the exact bound against its `1 + aT + c2 T^2`
/// expansion on a short-horizon grid (every `T` in `(0, 0.1]`). The product
/// branch supplies the smaller `T^2` coefficient, which is what the residual
/// column makes visible.
pub fn compare_asymptotics(
    k1: f64,
    k2: f64,
    t_grid: &[f64],
) -> Result<Vec<AsymptoticsRow>, ExperimentError> {
    if t_grid.is_empty() {
        return Err(bad("empty horizon grid"));
    }
    let pin = ConstantPinching::new(k1, k2)?;
    let policy = SearchPolicy::closed_form();
    let mut rows = Vec::with_capacity(t_grid.len());
    for &t in t_grid {
        if !(t > 0.0 && t <= 0.1) {
            return Err(bad(format!("horizon {t} outside (0, 0.1]")));
        }
        let report = bounds::h_bound(t, &pin, &policy)?;
        let polynomial = bounds::asymptotic_bound(t, &pin)?;
        rows.push(AsymptoticsRow {
            t,
            h: report.h,
            fang_wu: report.fang_wu,
            product: report.product,
            polynomial,
            residual_over_t2: (report.h - polynomial) / (t * t),
        });
    }
    Ok(rows)
}

// ---------------------------------------------------------------------------
// packaged scenarios
// ---------------------------------------------------------------------------

/// Names and one-line blurbs of the packaged scenarios.
pub fn builtin_scenarios() -> Vec<(&'static str, &'static str)> {
    vec![
        ("flat-sharpness", "Brownian motion on the plane; linear functional saturates the variance bound"),
        ("sphere-suite", "unit 2-sphere; variance, entropy, martingale and chain checks"),
        ("hyperbolic-suite", "hyperbolic plane; the negative-curvature branch of the bound"),
        ("euclidean-ou", "flat Ornstein-Uhlenbeck drift; semigroup probes at the k1 = k2 = 1 point"),
        ("evolving-ricci", "expanding sphere whose curvature form vanishes; the bound collapses to 1"),
        ("bounds-demo", "pure bound tables for declared pinching [0, 2], no simulation"),
    ]
}

/// A packaged scenario by name, or `None` for unknown names.
pub fn builtin(name: &str) -> Option<ExperimentConfig> {
    let grid_to = |t_max: f64, n: usize| -> Vec<f64> {
        (1..=n).map(|i| t_max * i as f64 / n as f64).collect()
    };
    let linear = |v: Vec<f64>| BaseFunction::AmbientLinear { v };
    let single = |name: &str, t: f64, f: BaseFunction| FunctionalSpec {
        name: name.into(),
        times: vec![t],
        kernel: Kernel::Affine { f, scale: 1.0, offset: 0.0 },
    };
    let mut cfg = match name {
        "flat-sharpness" => ExperimentConfig {
            schema_version: 1,
            name: "flat-sharpness".into(),
            model: ManifoldModel::Euclidean { dim: 2 },
            drift: DriftField::Zero,
            start: None,
            pinching: PinchingSpec::Derived,
            sim: SimConfig::new(1.0, 128, 40_000, 11),
            functionals: vec![single("coord", 1.0, linear(vec![1.0, 0.0]))],
            checks: vec![CheckSpec::Rayleigh, CheckSpec::Poincare, CheckSpec::LogSobolev],
            bounds: BoundsSpec { mode: SearchMode::ClosedFormOnly, t_grid: grid_to(1.0, 8) },
            output: OutputSpec::default(),
        },
        "sphere-suite" => ExperimentConfig {
            schema_version: 1,
            name: "sphere-suite".into(),
            model: ManifoldModel::Sphere { dim: 2, radius: 1.0 },
            drift: DriftField::Zero,
            start: None,
            pinching: PinchingSpec::Derived,
            sim: SimConfig::new(1.0, 256, 24_000, 7),
            functionals: vec![
                single("height", 1.0, linear(vec![1.0, 0.0, 0.0])),
                FunctionalSpec {
                    name: "two_time_exp".into(),
                    times: vec![0.5, 1.0],
                    kernel: Kernel::Product {
                        factors: vec![
                            BaseFunction::ExpLinear { v: vec![0.3, 0.0, 0.0] },
                            BaseFunction::ExpLinear { v: vec![0.3, 0.0, 0.0] },
                        ],
                    },
                },
            ],
            checks: vec![
                CheckSpec::Rayleigh,
                CheckSpec::Poincare,
                CheckSpec::LogSobolev,
                CheckSpec::Chain,
                CheckSpec::Martingale {
                    t1: 0.25,
                    t2: 0.75,
                    c: 0.5,
                    inner: 64,
                    outer: Some(800),
                },
            ],
            bounds: BoundsSpec { mode: SearchMode::ClosedFormOnly, t_grid: grid_to(1.0, 8) },
            output: OutputSpec::default(),
        },
        "hyperbolic-suite" => ExperimentConfig {
            schema_version: 1,
            name: "hyperbolic-suite".into(),
            model: ManifoldModel::Hyperbolic { dim: 2, curvature: -1.0 },
            drift: DriftField::Zero,
            start: None,
            pinching: PinchingSpec::Derived,
            sim: SimConfig::new(1.0, 256, 24_000, 13),
            functionals: vec![
                // centered at the hyperboloid vertex; the first coordinate is
                // the one that grows with distance from it
                single(
                    "bump",
                    1.0,
                    BaseFunction::Bump { center: vec![1.0, 0.0, 0.0], width: 1.0 },
                ),
                single("radial_exp", 1.0, BaseFunction::ExpLinear { v: vec![-0.25, 0.0, 0.0] }),
            ],
            checks: vec![
                CheckSpec::Rayleigh,
                CheckSpec::Poincare,
                CheckSpec::LogSobolev,
                CheckSpec::Chain,
            ],
            bounds: BoundsSpec { mode: SearchMode::ClosedFormOnly, t_grid: grid_to(1.0, 8) },
            output: OutputSpec::default(),
        },
        "euclidean-ou" => ExperimentConfig {
            schema_version: 1,
            name: "euclidean-ou".into(),
            model: ManifoldModel::Euclidean { dim: 2 },
            drift: DriftField::ornstein_uhlenbeck(2),
            start: None,
            pinching: PinchingSpec::Derived,
            sim: SimConfig::new(1.0, 128, 30_000, 5),
            functionals: vec![single("coord", 1.0, linear(vec![1.0, 0.0]))],
            checks: vec![
                CheckSpec::Rayleigh,
                CheckSpec::Poincare,
                CheckSpec::LogSobolev,
                CheckSpec::GradientEstimate {
                    f: linear(vec![1.0, 0.0]),
                    t: 0.5,
                    c: 0.5,
                    start: Some(vec![0.4, -0.3]),
                },
                // a linear f makes both sides of this one vanish identically,
                // which no path count can resolve; the exponential has a real
                // margin and reads as a clean pass
                CheckSpec::SecondCharacterization {
                    f: BaseFunction::ExpLinear { v: vec![0.6, 0.0] },
                    t: 0.5,
                    c: 0.5,
                    start: Some(vec![0.4, -0.3]),
                },
            ],
            bounds: BoundsSpec { mode: SearchMode::ClosedFormOnly, t_grid: grid_to(1.0, 8) },
            output: OutputSpec::default(),
        },
        "evolving-ricci" => ExperimentConfig {
            schema_version: 1,
            name: "evolving-ricci".into(),
            model: ManifoldModel::EvolvingSphere {
                dim: 2,
                scale: geometry::ScaleLaw { c0: 1.0, rate: 1.0 },
            },
            drift: DriftField::Zero,
            start: None,
            pinching: PinchingSpec::Derived,
            sim: SimConfig::new(0.5, 128, 20_000, 17),
            functionals: vec![single("height", 0.5, linear(vec![1.0, 0.0, 0.0]))],
            checks: vec![CheckSpec::Rayleigh, CheckSpec::Poincare, CheckSpec::Chain],
            bounds: BoundsSpec { mode: SearchMode::ClosedFormOnly, t_grid: grid_to(0.5, 5) },
            output: OutputSpec::default(),
        },
        "bounds-demo" => ExperimentConfig {
            schema_version: 1,
            name: "bounds-demo".into(),
            model: ManifoldModel::Euclidean { dim: 1 },
            drift: DriftField::Zero,
            start: None,
            pinching: PinchingSpec::Declared { k1: 0.0, k2: 2.0 },
            sim: SimConfig::new(1.0, 16, 1000, 1),
            functionals: vec![],
            checks: vec![],
            bounds: BoundsSpec { mode: SearchMode::ClosedFormOnly, t_grid: grid_to(1.0, 10) },
            output: OutputSpec::default(),
        },
        _ => return None,
    };
    // keep stored ensembles small; cylindrical times are added on top
    cfg.sim.partition_cells = 8;
    Some(cfg)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn scratch_dir(tag: &str) -> PathBuf {
        let dir = std::env::temp_dir().join(format!("pathgap-experiment-{tag}-{}", std::process::id()));
        let _ = fs::remove_dir_all(&dir);
        fs::create_dir_all(&dir).unwrap();
        dir
    }

    #[test]
    fn every_builtin_resolves() {
        for (name, _) in builtin_scenarios() {
            let cfg = builtin(name).unwrap();
            let opts = RunOptions::new("unused");
            resolve(&cfg, &opts).unwrap_or_else(|e| panic!("{name}: {e}"));
        }
        assert!(builtin("no-such-scenario").is_none());
    }

    #[test]
    fn config_round_trips_through_json() {
        let cfg = builtin("sphere-suite").unwrap();
        let text = cfg.to_json();
        let back = ExperimentConfig::from_json(&text).unwrap();
        assert_eq!(cfg, back);
    }

    #[test]
    fn malformed_config_reports_line_and_column() {
        let err = ExperimentConfig::from_json("{\n  \"schema_version\": true\n}").unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains("line 2"), "{msg}");
        assert_eq!(err.exit_code(), 2);
    }

    #[test]
    fn unknown_fields_are_rejected() {
        let mut doc: serde_json::Value =
            serde_json::from_str(&builtin("bounds-demo").unwrap().to_json()).unwrap();
        doc["surprise"] = 1.into();
        let err = ExperimentConfig::from_json(&doc.to_string()).unwrap_err();
        assert!(err.to_string().contains("surprise"), "{err}");
    }

    #[test]
    fn overrides_land_in_the_resolved_config() {
        let cfg = builtin("bounds-demo").unwrap();
        let mut opts = RunOptions::new("unused");
        opts.seed_override = Some(99);
        opts.paths_override = Some(123);
        let rx = resolve(&cfg, &opts).unwrap();
        assert_eq!(rx.config.sim.seed, 99);
        assert_eq!(rx.config.sim.n_paths, 123);
    }

    #[test]
    fn declared_pinching_must_cover_the_sampled_curvature() {
        let mut cfg = builtin("bounds-demo").unwrap();
        // the flat model's curvature form is identically zero; claiming it
        // sits inside [1, 2] is wrong and the sampler must notice
        cfg.pinching = PinchingSpec::Declared { k1: 1.0, k2: 2.0 };
        let err = resolve(&cfg, &RunOptions::new("unused")).unwrap_err();
        assert!(matches!(err, ExperimentError::Config(_)), "{err}");
    }

    #[test]
    fn checks_without_functionals_are_rejected() {
        let mut cfg = builtin("bounds-demo").unwrap();
        cfg.checks = vec![CheckSpec::Poincare];
        let err = resolve(&cfg, &RunOptions::new("unused")).unwrap_err();
        assert!(err.to_string().contains("needs at least one functional"), "{err}");
    }

    #[test]
    fn blown_budget_maps_to_exit_three() {
        let mut cfg = builtin("bounds-demo").unwrap();
        cfg.sim.budget = 10;
        let err = resolve(&cfg, &RunOptions::new("unused")).unwrap_err();
        assert_eq!(err.exit_code(), 3, "{err}");
    }

    #[test]
    fn bounds_demo_writes_ten_rows_with_the_expected_tail() {
        let dir = scratch_dir("bounds-demo");
        let cfg = builtin("bounds-demo").unwrap();
        let mut opts = RunOptions::new(&dir);
        opts.bounds_only = true;
        let outcome = run(&cfg, &opts).unwrap();
        assert_eq!(outcome.bounds_rows, 10);
        assert_eq!(outcome.exit_code(), 0);
        let csv = fs::read_to_string(dir.join("bounds.csv")).unwrap();
        let lines: Vec<&str> = csv.lines().collect();
        assert_eq!(lines.len(), 11);
        assert_eq!(lines[0], "T,k1,k2,fang_wu,product,h,branch,c_star,asymptotic");
        // pinching [0, 2] at T = 1: the single-interval branch evaluates to
        // exactly 1 + T + T^2/2 = 2.5 and the product branch undercuts it
        let last: Vec<&str> = lines[10].split(',').collect();
        let fang_wu: f64 = last[3].parse().unwrap();
        let h: f64 = last[5].parse().unwrap();
        assert!((fang_wu - 2.5).abs() < 1e-9, "fang_wu = {fang_wu}");
        assert!(h <= 2.5 + 1e-9 && h > 2.0, "h = {h}");
        // bounds-only runs skip every simulation artifact
        assert!(!dir.join("checks.jsonl").exists());
        assert!(!dir.join("ratio_of_T.dat").exists());
        assert!(dir.join("h_of_T.dat").exists());
        let _ = fs::remove_dir_all(&dir);
    }

    #[test]
    fn resolved_config_reparses_to_the_same_experiment() {
        let dir = scratch_dir("resolved");
        let cfg = builtin("bounds-demo").unwrap();
        let mut opts = RunOptions::new(&dir);
        opts.bounds_only = true;
        opts.seed_override = Some(4242);
        run(&cfg, &opts).unwrap();
        let text = fs::read_to_string(dir.join("resolved_config.json")).unwrap();
        let back = ExperimentConfig::from_json(&text).unwrap();
        assert_eq!(back.sim.seed, 4242);
        let mut expected = cfg;
        expected.sim.seed = 4242;
        assert_eq!(back, expected);
        let _ = fs::remove_dir_all(&dir);
    }

    #[test]
    fn reruns_are_byte_identical() {
        let cfg = {
            // small enough to run twice in a test: one functional, the three
            // cheap ensemble checks, a 4-point grid
            let mut c = builtin("flat-sharpness").unwrap();
            c.sim.n_paths = 4000;
            c.sim.steps = 64;
            c.bounds.t_grid = vec![0.25, 0.5, 0.75, 1.0];
            c
        };
        let read_all = |dir: &Path| -> Vec<(String, Vec<u8>)> {
            let mut entries: Vec<_> = fs::read_dir(dir)
                .unwrap()
                .map(|e| e.unwrap().path())
                .collect();
            entries.sort();
            entries
                .into_iter()
                .map(|p| {
                    (p.file_name().unwrap().to_string_lossy().into_owned(), fs::read(&p).unwrap())
                })
                .collect()
        };
        let dir_a = scratch_dir("rerun-a");
        let dir_b = scratch_dir("rerun-b");
        run(&cfg, &RunOptions::new(&dir_a)).unwrap();
        run(&cfg, &RunOptions::new(&dir_b)).unwrap();
        let a = read_all(&dir_a);
        let b = read_all(&dir_b);
        assert_eq!(a.len(), b.len());
        for ((name_a, bytes_a), (name_b, bytes_b)) in a.iter().zip(&b) {
            assert_eq!(name_a, name_b);
            assert_eq!(bytes_a, bytes_b, "{name_a} differs between reruns");
        }
        let _ = fs::remove_dir_all(&dir_a);
        let _ = fs::remove_dir_all(&dir_b);
    }

    #[test]
    fn flat_sharpness_saturates_the_variance_bound() {
        let dir = scratch_dir("sharpness");
        let mut cfg = builtin("flat-sharpness").unwrap();
        cfg.sim.n_paths = 20_000;
        cfg.bounds.t_grid = vec![1.0];
        let outcome = run(&cfg, &RunOptions::new(&dir)).unwrap();
        assert_eq!(outcome.failures, 0);
        assert_eq!(outcome.checks_run, 3);
        let checks = fs::read_to_string(dir.join("checks.jsonl")).unwrap();
        let rayleigh: serde_json::Value = checks
            .lines()
            .map(|l| serde_json::from_str(l).unwrap())
            .find(|v: &serde_json::Value| v["name"] == "rayleigh")
            .unwrap();
        let ratio_over_h = rayleigh["ratio_over_h"].as_f64().unwrap();
        assert!((ratio_over_h - 1.0).abs() < 0.05, "ratio/H = {ratio_over_h}");
        // flat pinching keeps every bound at exactly 1
        let ratio_dat = fs::read_to_string(dir.join("ratio_of_T.dat")).unwrap();
        assert!(ratio_dat.lines().count() >= 2);
        let _ = fs::remove_dir_all(&dir);
    }

    #[test]
    fn asymptotics_rows_shrink_toward_the_polynomial() {
        let rows = compare_asymptotics(0.0, 1.0, &[0.1, 0.05, 0.025, 0.0125]).unwrap();
        assert_eq!(rows.len(), 4);
        // the residual over T^2 tends to zero as T does
        assert!(rows.last().unwrap().residual_over_t2.abs() < rows[0].residual_over_t2.abs() + 1e-9);
        for row in &rows {
            assert!(row.product <= row.fang_wu + 1e-12);
            assert!((row.h - row.polynomial).abs() < 0.02 * row.t * row.t + 1e-9);
        }
        let err = compare_asymptotics(0.0, 1.0, &[0.2]).unwrap_err();
        assert!(err.to_string().contains("outside"), "{err}");
    }
}
