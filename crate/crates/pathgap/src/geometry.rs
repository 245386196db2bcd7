//! Constant-curvature model manifolds, static and evolving, in their
//! embedded presentations: spheres in `R^{d+1}`, hyperbolic space on the
//! hyperboloid in Minkowski `R^{d,1}`, flat space, and the conformally
//! evolving sphere `g_t = phi^2(t) g_round`.
//!
//! Exponential map, logarithm and parallel transport are closed forms (a
//! rank-one correction to the identity in the ambient space), so no geometric
//! integration error enters the path simulation; a step-and-project
//! integrator exists only as a test oracle. Curvature comes in through
//! [`ManifoldModel::ricci_z`], the Bakry-Emery form `Ric - <grad_. Z, .>`
//! minus, on evolving models, the full metric time-derivative; [`pinching`]
//! wraps its exact range into a [`PinchingCertificate`].

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::linalg::{self, SqMat};
use crate::optimize::TimeCurve;

#[derive(Debug, thiserror::Error)]
pub enum GeometryError {
    #[error("dimension must be at least 1, got {0}")]
    DimensionTooSmall(usize),
    #[error("sphere radius must be positive, got {0}")]
    BadRadius(f64),
    #[error("hyperbolic curvature must be negative, got {0}")]
    BadCurvature(f64),
    #[error("conformal scale phi^2 = {value} at t = {t}; must stay positive")]
    ScalePositivity { t: f64, value: f64 },
    #[error("{what}: expected length {expected}, got {got}")]
    DimensionMismatch { what: &'static str, expected: usize, got: usize },
    #[error("drift {drift} is not defined on this model")]
    DriftUnsupported { drift: &'static str },
    #[error("metric_derivative requires an evolving model")]
    NotEvolving,
    #[error("declared pinching violated at t = {t}: R(X,X) = {value} outside [{lo}, {hi}]")]
    CertificateViolation { t: f64, value: f64, lo: f64, hi: f64 },
}

/// Conformal scale of the evolving sphere: `phi^2(t) = c0 + rate * t` on the
/// unit round sphere. `rate = d - 1` is the normalization under which the
/// evolving curvature form vanishes identically.
#[derive(Copy, Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScaleLaw {
    pub c0: f64,
    pub rate: f64,
}

impl ScaleLaw {
    pub fn phi_sq(&self, t: f64) -> f64 {
        self.c0 + self.rate * t
    }

    pub fn phi(&self, t: f64) -> f64 {
        self.phi_sq(t).sqrt()
    }

    pub fn validate(&self, t_max: f64) -> Result<(), GeometryError> {
        for &t in &[0.0, t_max] {
            let v = self.phi_sq(t);
            if !(v > 0.0) || !v.is_finite() {
                return Err(GeometryError::ScalePositivity { t, value: v });
            }
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ManifoldModel {
    Euclidean { dim: usize },
    Sphere { dim: usize, radius: f64 },
    Hyperbolic { dim: usize, curvature: f64 },
    EvolvingSphere { dim: usize, scale: ScaleLaw },
}

/// Drift vector field of the diffusion generator `(Delta + Z)/2`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum DriftField {
    Zero,
    /// `Z(x) = A x` on flat space; `A` in row-major rows.
    Linear { matrix: Vec<Vec<f64>> },
}

impl DriftField {
    /// `Z = -x`, the Ornstein-Uhlenbeck drift on `R^d`.
    pub fn ornstein_uhlenbeck(dim: usize) -> Self {
        let rows = (0..dim)
            .map(|i| (0..dim).map(|j| if i == j { -1.0 } else { 0.0 }).collect())
            .collect();
        DriftField::Linear { matrix: rows }
    }

    pub fn validate(&self, model: &ManifoldModel) -> Result<(), GeometryError> {
        match self {
            DriftField::Zero => Ok(()),
            DriftField::Linear { matrix } => {
                let d = model.dim();
                if !matches!(model, ManifoldModel::Euclidean { .. }) {
                    return Err(GeometryError::DriftUnsupported { drift: "linear" });
                }
                if matrix.len() != d || matrix.iter().any(|r| r.len() != d) {
                    return Err(GeometryError::DimensionMismatch {
                        what: "drift matrix",
                        expected: d,
                        got: matrix.len(),
                    });
                }
                Ok(())
            }
        }
    }

    pub fn as_matrix(&self, dim: usize) -> Option<SqMat> {
        match self {
            DriftField::Zero => None,
            DriftField::Linear { matrix } => {
                let mut m = SqMat::zeros(dim);
                for i in 0..dim {
                    for j in 0..dim {
                        *m.at_mut(i, j) = matrix[i][j];
                    }
                }
                Some(m)
            }
        }
    }

    /// `Z(t, x)` in ambient coordinates.
    pub fn z(&self, x: &[f64]) -> Vec<f64> {
        match self {
            DriftField::Zero => vec![0.0; x.len()],
            DriftField::Linear { matrix } => {
                matrix.iter().map(|row| row.iter().zip(x).map(|(a, b)| a * b).sum()).collect()
            }
        }
    }

    /// Covariant derivative `grad_dir Z` (flat space, so the plain Jacobian).
    pub fn nabla(&self, dir: &[f64]) -> Vec<f64> {
        match self {
            DriftField::Zero => vec![0.0; dir.len()],
            DriftField::Linear { matrix } => {
                matrix.iter().map(|row| row.iter().zip(dir).map(|(a, b)| a * b).sum()).collect()
            }
        }
    }
}

/// Parallel transport along one geodesic segment, stored as its ambient
/// matrix. Applying it to tangent vectors at the segment start lands tangent
/// vectors at the segment end; the map is a `g`-isometry.
#[derive(Clone, Debug)]
pub struct TransportMap {
    m: SqMat,
}

impl TransportMap {
    pub fn identity(n: usize) -> Self {
        TransportMap { m: SqMat::identity(n) }
    }

    pub fn apply(&self, w: &[f64]) -> Vec<f64> {
        self.m.mul_vec(w)
    }

    /// `self` after `earlier`: transport along the concatenated segments.
    pub fn after(&self, earlier: &TransportMap) -> TransportMap {
        TransportMap { m: self.m.mul(&earlier.m) }
    }

    pub fn matrix(&self) -> &SqMat {
        &self.m
    }
}

/// A `g_t`-orthonormal basis of the tangent space at a point, columns in
/// ambient coordinates.
#[derive(Clone, Debug)]
pub struct Frame {
    pub ambient: usize,
    pub dim: usize,
    /// column-major: entry `(i, a)` at `a * ambient + i`
    pub cols: Vec<f64>,
}

impl Frame {
    pub fn column(&self, a: usize) -> &[f64] {
        &self.cols[a * self.ambient..(a + 1) * self.ambient]
    }

    /// `u xi`: the ambient vector with frame coordinates `xi`.
    pub fn vector(&self, xi: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.ambient];
        for (a, &c) in xi.iter().enumerate() {
            linalg::axpy(&mut out, c, self.column(a));
        }
        out
    }

    /// `u^{-1} w`: frame coordinates of a tangent vector. Exactly the metric
    /// pairings with the columns, because the frame is orthonormal; the
    /// Euclidean norm of the result is the `g_t`-norm of `w`.
    pub fn coords(&self, model: &ManifoldModel, t: f64, w: &[f64]) -> Vec<f64> {
        (0..self.dim).map(|a| model.metric_dot(t, self.column(a), w)).collect()
    }

    pub fn transported(&self, map: &TransportMap) -> Frame {
        let mut cols = Vec::with_capacity(self.cols.len());
        for a in 0..self.dim {
            cols.extend(map.apply(self.column(a)));
        }
        Frame { ambient: self.ambient, dim: self.dim, cols }
    }

    /// Gram matrix w.r.t. `g_t`; identity for a valid frame.
    pub fn gram(&self, model: &ManifoldModel, t: f64) -> SqMat {
        let mut g = SqMat::zeros(self.dim);
        for a in 0..self.dim {
            for b in 0..self.dim {
                *g.at_mut(a, b) = model.metric_dot(t, self.column(a), self.column(b));
            }
        }
        g
    }
}

fn mink_dot(u: &[f64], v: &[f64]) -> f64 {
    linalg::dot(&u[1..], &v[1..]) - u[0] * v[0]
}

impl ManifoldModel {
    pub fn unit_sphere(dim: usize) -> Self {
        ManifoldModel::Sphere { dim, radius: 1.0 }
    }

    /// Expanding sphere normalized so the evolving curvature form vanishes.
    pub fn ricci_flow_sphere(dim: usize) -> Self {
        ManifoldModel::EvolvingSphere { dim, scale: ScaleLaw { c0: 1.0, rate: (dim - 1) as f64 } }
    }

    pub fn dim(&self) -> usize {
        match *self {
            ManifoldModel::Euclidean { dim }
            | ManifoldModel::Sphere { dim, .. }
            | ManifoldModel::Hyperbolic { dim, .. }
            | ManifoldModel::EvolvingSphere { dim, .. } => dim,
        }
    }

    pub fn ambient_dim(&self) -> usize {
        match self {
            ManifoldModel::Euclidean { dim } => *dim,
            _ => self.dim() + 1,
        }
    }

    pub fn is_evolving(&self) -> bool {
        matches!(self, ManifoldModel::EvolvingSphere { .. })
    }

    pub fn validate(&self, t_max: f64) -> Result<(), GeometryError> {
        if self.dim() < 1 {
            return Err(GeometryError::DimensionTooSmall(self.dim()));
        }
        match self {
            ManifoldModel::Euclidean { .. } => Ok(()),
            ManifoldModel::Sphere { radius, .. } => {
                if *radius > 0.0 && radius.is_finite() {
                    Ok(())
                } else {
                    Err(GeometryError::BadRadius(*radius))
                }
            }
            ManifoldModel::Hyperbolic { curvature, .. } => {
                if *curvature < 0.0 && curvature.is_finite() {
                    Ok(())
                } else {
                    Err(GeometryError::BadCurvature(*curvature))
                }
            }
            ManifoldModel::EvolvingSphere { scale, .. } => scale.validate(t_max),
        }
    }

    /// Canonical start point: the origin, or the pole on the last axis, or
    /// the hyperboloid vertex.
    pub fn base_point(&self) -> Vec<f64> {
        match self {
            ManifoldModel::Euclidean { dim } => vec![0.0; *dim],
            ManifoldModel::Sphere { dim, radius } => {
                let mut x = vec![0.0; dim + 1];
                x[*dim] = *radius;
                x
            }
            ManifoldModel::EvolvingSphere { dim, .. } => {
                let mut x = vec![0.0; dim + 1];
                x[*dim] = 1.0;
                x
            }
            ManifoldModel::Hyperbolic { dim, curvature } => {
                let mut x = vec![0.0; dim + 1];
                x[0] = 1.0 / (-curvature).sqrt();
                x
            }
        }
    }

    fn hyperbolic_r(&self) -> f64 {
        match self {
            ManifoldModel::Hyperbolic { curvature, .. } => 1.0 / (-curvature).sqrt(),
            _ => unreachable!("hyperbolic_r on non-hyperbolic model"),
        }
    }

    /// Distance-like defect of `x` from the model surface; 0 on-manifold.
    pub fn surface_defect(&self, x: &[f64]) -> f64 {
        match self {
            ManifoldModel::Euclidean { .. } => 0.0,
            ManifoldModel::Sphere { radius, .. } => (linalg::norm(x) - radius).abs(),
            ManifoldModel::EvolvingSphere { .. } => (linalg::norm(x) - 1.0).abs(),
            ManifoldModel::Hyperbolic { .. } => {
                let r = self.hyperbolic_r();
                (mink_dot(x, x) + r * r).abs() / (2.0 * r)
            }
        }
    }

    /// Pulls a drifting point back onto the surface (numeric hygiene after
    /// long chains of steps; exact maps keep the defect near machine level).
    pub fn project_point(&self, x: &[f64]) -> Vec<f64> {
        match self {
            ManifoldModel::Euclidean { .. } => x.to_vec(),
            ManifoldModel::Sphere { radius, .. } => linalg::scale(x, radius / linalg::norm(x)),
            ManifoldModel::EvolvingSphere { .. } => linalg::scale(x, 1.0 / linalg::norm(x)),
            ManifoldModel::Hyperbolic { .. } => {
                let r = self.hyperbolic_r();
                let spatial_sq = linalg::dot(&x[1..], &x[1..]);
                let mut y = x.to_vec();
                y[0] = (r * r + spatial_sq).sqrt();
                y
            }
        }
    }

    /// Orthogonal (w.r.t. the relevant ambient pairing) projection onto the
    /// tangent space at `x`.
    pub fn project_tangent(&self, x: &[f64], w: &[f64]) -> Vec<f64> {
        match self {
            ManifoldModel::Euclidean { .. } => w.to_vec(),
            ManifoldModel::Sphere { radius, .. } => {
                let c = linalg::dot(w, x) / (radius * radius);
                let mut out = w.to_vec();
                linalg::axpy(&mut out, -c, x);
                out
            }
            ManifoldModel::EvolvingSphere { .. } => {
                let c = linalg::dot(w, x);
                let mut out = w.to_vec();
                linalg::axpy(&mut out, -c, x);
                out
            }
            ManifoldModel::Hyperbolic { .. } => {
                let r = self.hyperbolic_r();
                let c = mink_dot(w, x) / (r * r);
                let mut out = w.to_vec();
                linalg::axpy(&mut out, c, x);
                out
            }
        }
    }

    /// `g_t(u, v)` for ambient tangent vectors; point-independent in these
    /// embeddings.
    pub fn metric_dot(&self, t: f64, u: &[f64], v: &[f64]) -> f64 {
        match self {
            ManifoldModel::Euclidean { .. } | ManifoldModel::Sphere { .. } => linalg::dot(u, v),
            ManifoldModel::EvolvingSphere { scale, .. } => scale.phi_sq(t) * linalg::dot(u, v),
            ManifoldModel::Hyperbolic { .. } => mink_dot(u, v),
        }
    }

    pub fn metric_norm(&self, t: f64, u: &[f64]) -> f64 {
        self.metric_dot(t, u, u).max(0.0).sqrt()
    }

    /// Exponential map: follow the geodesic with initial velocity `v` for
    /// unit time, returning the endpoint and the parallel transport along the
    /// segment. Exact for all four models.
    pub fn exp_map(&self, _t: f64, x: &[f64], v: &[f64]) -> (Vec<f64>, TransportMap) {
        let n = self.ambient_dim();
        match self {
            ManifoldModel::Euclidean { .. } => {
                let mut y = x.to_vec();
                linalg::axpy(&mut y, 1.0, v);
                (y, TransportMap::identity(n))
            }
            ManifoldModel::Sphere { .. } | ManifoldModel::EvolvingSphere { .. } => {
                // round norm regardless of the evolving scale: the conformal
                // factor is spatially constant, so g_t-geodesics are round
                // geodesics traversed at rescaled speed
                let r = match self {
                    ManifoldModel::Sphere { radius, .. } => *radius,
                    _ => 1.0,
                };
                let s = linalg::norm(v);
                if s == 0.0 {
                    return (x.to_vec(), TransportMap::identity(n));
                }
                let e = linalg::scale(v, 1.0 / s);
                let theta = s / r;
                let (sin, cos) = theta.sin_cos();
                let mut y = linalg::scale(x, cos);
                linalg::axpy(&mut y, r * sin, &e);
                // P = I + (cos t - 1) e e^T - sin t (x/r) e^T
                let mut m = SqMat::identity(n);
                for i in 0..n {
                    for j in 0..n {
                        *m.at_mut(i, j) += (cos - 1.0) * e[i] * e[j] - sin * x[i] / r * e[j];
                    }
                }
                (y, TransportMap { m })
            }
            ManifoldModel::Hyperbolic { .. } => {
                let r = self.hyperbolic_r();
                let s = mink_dot(v, v).max(0.0).sqrt();
                if s == 0.0 {
                    return (x.to_vec(), TransportMap::identity(n));
                }
                let e = linalg::scale(v, 1.0 / s);
                let theta = s / r;
                let (sinh, cosh) = (theta.sinh(), theta.cosh());
                let mut y = linalg::scale(x, cosh);
                linalg::axpy(&mut y, r * sinh, &e);
                // P = I + [(cosh t - 1) e + sinh t (x/r)] (J e)^T
                let mut je = e.clone();
                je[0] = -je[0];
                let mut m = SqMat::identity(n);
                for i in 0..n {
                    for j in 0..n {
                        *m.at_mut(i, j) += ((cosh - 1.0) * e[i] + sinh * x[i] / r) * je[j];
                    }
                }
                (y, TransportMap { m })
            }
        }
    }

    /// One step of the path integrator: the exponential map applied to `h v`.
    pub fn geodesic_step(&self, t: f64, x: &[f64], v: &[f64], h: f64) -> (Vec<f64>, TransportMap) {
        self.exp_map(t, x, &linalg::scale(v, h))
    }

    /// Inverse of [`exp_map`] within the injectivity radius.
    pub fn log_map(&self, _t: f64, x: &[f64], y: &[f64]) -> Vec<f64> {
        match self {
            ManifoldModel::Euclidean { .. } => linalg::sub(y, x),
            ManifoldModel::Sphere { .. } | ManifoldModel::EvolvingSphere { .. } => {
                let r = match self {
                    ManifoldModel::Sphere { radius, .. } => *radius,
                    _ => 1.0,
                };
                let cos = (linalg::dot(x, y) / (r * r)).clamp(-1.0, 1.0);
                let theta = cos.acos();
                let mut dir = y.to_vec();
                linalg::axpy(&mut dir, -cos, x);
                let len = linalg::norm(&dir);
                if len < 1e-300 {
                    return vec![0.0; x.len()];
                }
                linalg::scale(&dir, r * theta / len)
            }
            ManifoldModel::Hyperbolic { .. } => {
                let r = self.hyperbolic_r();
                let cosh = (-mink_dot(x, y) / (r * r)).max(1.0);
                let theta = cosh.acosh();
                let mut dir = y.to_vec();
                linalg::axpy(&mut dir, -cosh, x);
                let len = mink_dot(&dir, &dir).max(0.0).sqrt();
                if len < 1e-300 {
                    return vec![0.0; x.len()];
                }
                linalg::scale(&dir, r * theta / len)
            }
        }
    }

    /// Riemannian gradient from the ambient partial derivatives: project,
    /// raise the index with `g_t`.
    pub fn riemannian_gradient(&self, t: f64, x: &[f64], ambient_grad: &[f64]) -> Vec<f64> {
        match self {
            ManifoldModel::Euclidean { .. } | ManifoldModel::Sphere { .. } => {
                self.project_tangent(x, ambient_grad)
            }
            ManifoldModel::EvolvingSphere { scale, .. } => {
                linalg::scale(&self.project_tangent(x, ambient_grad), 1.0 / scale.phi_sq(t))
            }
            ManifoldModel::Hyperbolic { .. } => {
                // dual pairing runs through J in the Minkowski embedding
                let mut j_grad = ambient_grad.to_vec();
                j_grad[0] = -j_grad[0];
                self.project_tangent(x, &j_grad)
            }
        }
    }

    /// Deterministic `g_t`-orthonormal tangent frame at `x`: ambient axes
    /// projected and Gram-Schmidt'ed against the metric.
    pub fn orthonormal_frame(&self, t: f64, x: &[f64]) -> Frame {
        let n = self.ambient_dim();
        let d = self.dim();
        let mut cols: Vec<f64> = Vec::with_capacity(n * d);
        let mut have = 0;
        for axis in 0..n {
            if have == d {
                break;
            }
            let mut cand = vec![0.0; n];
            cand[axis] = 1.0;
            let mut w = self.project_tangent(x, &cand);
            for a in 0..have {
                let col = &cols[a * n..(a + 1) * n].to_vec();
                let c = self.metric_dot(t, col, &w);
                linalg::axpy(&mut w, -c, col);
            }
            let norm = self.metric_norm(t, &w);
            if norm > 1e-8 {
                cols.extend(linalg::scale(&w, 1.0 / norm));
                have += 1;
            }
        }
        assert_eq!(have, d, "failed to complete a tangent frame");
        Frame { ambient: n, dim: d, cols }
    }

    /// Carries a `g_t`-orthonormal frame to a `g_{t+h}`-orthonormal one on an
    /// evolving model: the first-order correction `-1/2 g^{-1}(dg/dt) u h`
    /// followed by re-orthonormalization in `g_{t+h}`. Static models return
    /// the frame unchanged.
    pub fn evolve_frame(&self, frame: &Frame, t: f64, h: f64) -> Frame {
        match self {
            ManifoldModel::EvolvingSphere { scale, .. } => {
                let shrink = 1.0 - 0.5 * scale.rate / scale.phi_sq(t) * h;
                let n = frame.ambient;
                let mut cols = Vec::with_capacity(frame.cols.len());
                for a in 0..frame.dim {
                    let mut w = linalg::scale(frame.column(a), shrink);
                    for b in 0..a {
                        let col = cols[b * n..(b + 1) * n].to_vec();
                        let c = self.metric_dot(t + h, &col, &w);
                        linalg::axpy(&mut w, -c, &col);
                    }
                    let norm = self.metric_norm(t + h, &w);
                    cols.extend(linalg::scale(&w, 1.0 / norm));
                }
                Frame { ambient: n, dim: frame.dim, cols }
            }
            _ => frame.clone(),
        }
    }

    /// `d/dt g_t(X, Y)`; defined only on evolving models.
    pub fn metric_derivative(&self, _t: f64, x: &[f64], xv: &[f64], yv: &[f64]) -> Result<f64, GeometryError> {
        let _ = x;
        match self {
            ManifoldModel::EvolvingSphere { scale, .. } => Ok(scale.rate * linalg::dot(xv, yv)),
            _ => Err(GeometryError::NotEvolving),
        }
    }

    /// The curvature form driving every bound here: `Ric(X,Y) - g(grad_X Z, Y)`
    /// minus, on evolving models, `d/dt g_t(X,Y)`.
    pub fn ricci_z(
        &self,
        drift: &DriftField,
        t: f64,
        x: &[f64],
        xv: &[f64],
        yv: &[f64],
    ) -> Result<f64, GeometryError> {
        let n = self.ambient_dim();
        for (what, v) in [("point", x), ("first tangent", xv), ("second tangent", yv)] {
            if v.len() != n {
                return Err(GeometryError::DimensionMismatch { what, expected: n, got: v.len() });
            }
        }
        drift.validate(self)?;
        let ric = match self {
            ManifoldModel::Euclidean { .. } => 0.0,
            ManifoldModel::Sphere { dim, radius } => {
                (*dim as f64 - 1.0) / (radius * radius) * linalg::dot(xv, yv)
            }
            ManifoldModel::Hyperbolic { dim, curvature } => {
                curvature * (*dim as f64 - 1.0) * mink_dot(xv, yv)
            }
            // Ricci is scale-invariant: (d-1) g_round = (d-1)/phi^2 g_t
            ManifoldModel::EvolvingSphere { dim, .. } => (*dim as f64 - 1.0) * linalg::dot(xv, yv),
        };
        let drift_term = match drift {
            DriftField::Zero => 0.0,
            DriftField::Linear { .. } => self.metric_dot(t, &drift.nabla(xv), yv),
        };
        let dt_term = if self.is_evolving() { self.metric_derivative(t, x, xv, yv)? } else { 0.0 };
        Ok(ric - drift_term - dt_term)
    }

    /// A point of the model, distributed rotation-invariantly where that
    /// makes sense. Used for certificate sampling and tests.
    pub fn sample_point<R: Rng>(&self, rng: &mut R) -> Vec<f64> {
        let gauss = |rng: &mut R, n: usize| -> Vec<f64> {
            (0..n).map(|_| rng.sample::<f64, _>(rand_distr::StandardNormal)).collect()
        };
        match self {
            ManifoldModel::Euclidean { dim } => gauss(rng, *dim),
            ManifoldModel::Sphere { dim, radius } => loop {
                let y = gauss(rng, dim + 1);
                let n = linalg::norm(&y);
                if n > 1e-6 {
                    return linalg::scale(&y, radius / n);
                }
            },
            ManifoldModel::EvolvingSphere { dim, .. } => loop {
                let y = gauss(rng, dim + 1);
                let n = linalg::norm(&y);
                if n > 1e-6 {
                    return linalg::scale(&y, 1.0 / n);
                }
            },
            ManifoldModel::Hyperbolic { dim, .. } => {
                let r = self.hyperbolic_r();
                let spatial = gauss(rng, *dim);
                let mut x = vec![0.0; dim + 1];
                x[0] = (r * r + linalg::dot(&spatial, &spatial)).sqrt();
                x[1..].copy_from_slice(&spatial);
                x
            }
        }
    }

    /// A `g_t`-unit tangent vector at `x`.
    pub fn sample_unit_tangent<R: Rng>(&self, rng: &mut R, t: f64, x: &[f64]) -> Vec<f64> {
        let frame = self.orthonormal_frame(t, x);
        loop {
            let xi: Vec<f64> =
                (0..frame.dim).map(|_| rng.sample::<f64, _>(rand_distr::StandardNormal)).collect();
            let n = linalg::norm(&xi);
            if n > 1e-6 {
                return frame.vector(&linalg::scale(&xi, 1.0 / n));
            }
        }
    }
}

/// Time curves sandwiching the curvature form, with a note on where they
/// came from.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct PinchingCertificate {
    pub k1: TimeCurve,
    pub k2: TimeCurve,
    pub witness: String,
}

impl PinchingCertificate {
    pub fn constant(k1: f64, k2: f64, witness: &str) -> Self {
        PinchingCertificate {
            k1: TimeCurve::constant(k1),
            k2: TimeCurve::constant(k2),
            witness: witness.to_string(),
        }
    }

    /// True when both curves are the same constant, returning it.
    pub fn as_constant(&self) -> Option<(f64, f64)> {
        match (&self.k1, &self.k2) {
            (TimeCurve::Constant { value: a }, TimeCurve::Constant { value: b }) => Some((*a, *b)),
            _ => None,
        }
    }
}

/// Exact pinching of the curvature form for the built-in models. For the
/// evolving sphere off the vanishing normalization the curve `a / phi^2(t)`
/// is tabulated densely enough that interpolation error stays below 1e-9.
pub fn pinching(
    model: &ManifoldModel,
    drift: &DriftField,
    t_max: f64,
) -> Result<PinchingCertificate, GeometryError> {
    model.validate(t_max)?;
    drift.validate(model)?;
    let cert = match model {
        ManifoldModel::Euclidean { dim } => match drift {
            DriftField::Zero => PinchingCertificate::constant(0.0, 0.0, "flat, no drift"),
            DriftField::Linear { .. } => {
                let a = drift.as_matrix(*dim).unwrap();
                let mut sym = SqMat::zeros(*dim);
                for i in 0..*dim {
                    for j in 0..*dim {
                        *sym.at_mut(i, j) = -0.5 * (a.at(i, j) + a.at(j, i));
                    }
                }
                let eig = linalg::sym_eigenvalues(&sym);
                let lo = eig.iter().cloned().fold(f64::INFINITY, f64::min);
                let hi = eig.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
                PinchingCertificate::constant(lo, hi, "eigenvalue range of -sym(drift Jacobian)")
            }
        },
        ManifoldModel::Sphere { dim, radius } => {
            let k = (*dim as f64 - 1.0) / (radius * radius);
            PinchingCertificate::constant(k, k, "constant curvature (d-1)/r^2")
        }
        ManifoldModel::Hyperbolic { dim, curvature } => {
            let k = curvature * (*dim as f64 - 1.0);
            PinchingCertificate::constant(k, k, "constant curvature kappa (d-1)")
        }
        ManifoldModel::EvolvingSphere { dim, scale } => {
            let a = (*dim as f64 - 1.0) - scale.rate;
            if a == 0.0 {
                PinchingCertificate::constant(0.0, 0.0, "evolving curvature form vanishes")
            } else if scale.rate == 0.0 {
                let k = a / scale.c0;
                PinchingCertificate::constant(k, k, "frozen conformal sphere")
            } else {
                let phi_min = scale.phi_sq(0.0).min(scale.phi_sq(t_max));
                let ddk = 2.0 * a.abs() * scale.rate * scale.rate / (phi_min * phi_min * phi_min);
                let n = ((t_max * (ddk / 8e-9).sqrt()).ceil() as usize).clamp(64, 1 << 20);
                let times: Vec<f64> = (0..=n).map(|i| t_max * i as f64 / n as f64).collect();
                let values: Vec<f64> = times.iter().map(|&t| a / scale.phi_sq(t)).collect();
                let curve = TimeCurve::Tabulated { times, values };
                PinchingCertificate {
                    k1: curve.clone(),
                    k2: curve,
                    witness: "tabulated a/phi^2(t) for the conformal scale".to_string(),
                }
            }
        }
    };
    Ok(cert)
}

/// Checks a (typically user-declared) certificate against sampled curvature
/// values: `n` draws of `(t, x, unit X)` must land inside `[k1 - tol, k2 + tol]`.
pub fn certify<R: Rng>(
    model: &ManifoldModel,
    drift: &DriftField,
    t_max: f64,
    cert: &PinchingCertificate,
    n: usize,
    tol: f64,
    rng: &mut R,
) -> Result<(), GeometryError> {
    model.validate(t_max)?;
    drift.validate(model)?;
    for i in 0..n {
        // endpoints first, then uniform draws
        let t = match i {
            0 => 0.0,
            1 => t_max,
            _ => rng.gen_range(0.0..=t_max),
        };
        let x = model.sample_point(rng);
        let xv = model.sample_unit_tangent(rng, t, &x);
        let value = model.ricci_z(drift, t, &x, &xv, &xv)?;
        let lo = cert.k1.eval(t);
        let hi = cert.k2.eval(t);
        if value < lo - tol || value > hi + tol {
            return Err(GeometryError::CertificateViolation { t, value, lo, hi });
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use proptest::prelude::*;
    use rand::Rng;
    use rand::SeedableRng;

    fn models() -> Vec<ManifoldModel> {
        vec![
            ManifoldModel::Euclidean { dim: 3 },
            ManifoldModel::Sphere { dim: 2, radius: 1.0 },
            ManifoldModel::Sphere { dim: 3, radius: 2.0 },
            ManifoldModel::Hyperbolic { dim: 2, curvature: -1.0 },
            ManifoldModel::Hyperbolic { dim: 3, curvature: -0.7 },
            ManifoldModel::EvolvingSphere { dim: 2, scale: ScaleLaw { c0: 1.0, rate: 1.0 } },
        ]
    }

    #[test]
    fn exp_map_sphere_antipode_and_period() {
        let m = ManifoldModel::Sphere { dim: 2, radius: 1.5 };
        let x = m.base_point();
        let frame = m.orthonormal_frame(0.0, &x);
        let v = frame.column(0).to_vec();
        let (anti, _) = m.exp_map(0.0, &x, &linalg::scale(&v, std::f64::consts::PI * 1.5));
        for i in 0..3 {
            assert_relative_eq!(anti[i], -x[i], epsilon = 1e-12);
        }
        let (full, _) = m.exp_map(0.0, &x, &linalg::scale(&v, 2.0 * std::f64::consts::PI * 1.5));
        for i in 0..3 {
            assert_relative_eq!(full[i], x[i], epsilon = 1e-12);
        }
    }

    #[test]
    fn log_inverts_exp() {
        let mut rng = rand::rngs::StdRng::seed_from_u64(5);
        for m in models() {
            for _ in 0..20 {
                let t = 0.2;
                let x = m.sample_point(&mut rng);
                let e = m.sample_unit_tangent(&mut rng, t, &x);
                let len = rng.gen_range(0.01..1.0);
                let v = linalg::scale(&e, len);
                let (y, _) = m.exp_map(t, &x, &v);
                assert!(m.surface_defect(&y) < 1e-10, "{m:?} left the surface");
                let back = m.log_map(t, &x, &y);
                for i in 0..v.len() {
                    assert_relative_eq!(back[i], v[i], epsilon = 1e-9);
                }
            }
        }
    }

    #[test]
    fn holonomy_of_right_angled_triangle_is_quarter_turn() {
        // three quarter great circles on the unit 2-sphere enclose area pi/2;
        // transport around the loop rotates the tangent plane by that angle
        let m = ManifoldModel::unit_sphere(2);
        let a = vec![1.0, 0.0, 0.0];
        let half_pi = std::f64::consts::FRAC_PI_2;
        let (b, p1) = m.exp_map(0.0, &a, &[0.0, half_pi, 0.0]);
        let (c, p2) = m.exp_map(0.0, &b, &[0.0, 0.0, half_pi]);
        let (a2, p3) = m.exp_map(0.0, &c, &[half_pi, 0.0, 0.0]);
        assert!(linalg::norm(&linalg::sub(&b, &[0.0, 1.0, 0.0])) < 1e-12);
        assert!(linalg::norm(&linalg::sub(&c, &[0.0, 0.0, 1.0])) < 1e-12);
        assert!(linalg::norm(&linalg::sub(&a2, &a)) < 1e-12);
        let loop_map = p3.after(&p2).after(&p1);
        let w = vec![0.0, 1.0, 0.0];
        let rotated = loop_map.apply(&w);
        assert!(linalg::norm(&linalg::sub(&rotated, &[0.0, 0.0, 1.0])) < 1e-12, "{rotated:?}");
        // a second loop gives a half turn
        let twice = loop_map.apply(&rotated);
        assert!(linalg::norm(&linalg::sub(&twice, &[0.0, -1.0, 0.0])) < 1e-12);
    }

    #[test]
    fn loop_holonomy_measures_curvature() {
        // parallel transport around a small geodesic triangle turns tangent
        // vectors by curvature times enclosed area (Gauss-Bonnet); opposite
        // turning directions on the sphere and in hyperbolic space
        let cases: Vec<(ManifoldModel, f64)> = vec![
            (ManifoldModel::Sphere { dim: 2, radius: 1.0 }, 1.0),
            (ManifoldModel::Sphere { dim: 2, radius: 2.0 }, 0.25),
            (ManifoldModel::Hyperbolic { dim: 2, curvature: -1.0 }, -1.0),
            (ManifoldModel::Hyperbolic { dim: 3, curvature: -0.7 }, -0.7),
            (ManifoldModel::Euclidean { dim: 2 }, 0.0),
        ];
        for (m, k) in cases {
            let x = m.base_point();
            let frame = m.orthonormal_frame(0.0, &x);
            let e1 = frame.column(0).to_vec();
            let e2 = frame.column(1).to_vec();
            let s = 1e-3;
            // vertices x, exp(s e1), exp(s e2); legs via log maps
            let (b, p_ab) = m.exp_map(0.0, &x, &linalg::scale(&e1, s));
            let (c, _) = m.exp_map(0.0, &x, &linalg::scale(&e2, s));
            let v_bc = m.log_map(0.0, &b, &c);
            let (c2, p_bc) = m.exp_map(0.0, &b, &v_bc);
            assert!(linalg::norm(&linalg::sub(&c2, &c)) < 1e-12);
            let v_ca = m.log_map(0.0, &c, &x);
            let (_, p_ca) = m.exp_map(0.0, &c, &v_ca);
            let loop_map = p_ca.after(&p_bc).after(&p_ab);
            let w = loop_map.apply(&e1);
            // signed angle of w against (e1, e2); sine component carries the
            // full precision for tiny angles
            let cos = m.metric_dot(0.0, &w, &e1);
            let sin = m.metric_dot(0.0, &w, &e2);
            let angle = sin.atan2(cos);
            let area = 0.5 * s * s;
            let k_hat = angle / area;
            assert!(
                (k_hat - k).abs() < 1e-4 * (1.0 + k.abs()),
                "{m:?}: estimated {k_hat}, expected {k}"
            );
        }
    }

    #[test]
    fn transport_chain_stays_isometric() {
        // 10^3 composed random segments, no renormalization anywhere
        let mut rng = rand::rngs::StdRng::seed_from_u64(17);
        for m in [
            ManifoldModel::Sphere { dim: 2, radius: 1.0 },
            ManifoldModel::Hyperbolic { dim: 3, curvature: -0.5 },
        ] {
            let mut x = m.sample_point(&mut rng);
            let mut frame = m.orthonormal_frame(0.0, &x);
            for _ in 0..1000 {
                let v = m.sample_unit_tangent(&mut rng, 0.0, &x);
                let (y, p) = m.exp_map(0.0, &x, &linalg::scale(&v, 0.05));
                frame = frame.transported(&p);
                x = y;
            }
            let gram = frame.gram(&m, 0.0);
            let mut drift = 0.0f64;
            for a in 0..frame.dim {
                for b in 0..frame.dim {
                    let target = if a == b { 1.0 } else { 0.0 };
                    drift = drift.max((gram.at(a, b) - target).abs());
                }
            }
            assert!(drift < 1e-9, "{m:?}: gram drift {drift}");
        }
    }

    #[test]
    fn transport_matches_projection_chain_oracle() {
        // step-and-project transport converges (first order) to the closed
        // form; 10^4 substeps over a unit-length geodesic
        let mut rng = rand::rngs::StdRng::seed_from_u64(23);
        for m in [
            ManifoldModel::Sphere { dim: 2, radius: 1.0 },
            ManifoldModel::Hyperbolic { dim: 2, curvature: -1.0 },
        ] {
            let x = m.sample_point(&mut rng);
            let e = m.sample_unit_tangent(&mut rng, 0.0, &x);
            let w0 = m.sample_unit_tangent(&mut rng, 0.0, &x);
            let (_, p) = m.exp_map(0.0, &x, &e);
            let exact = p.apply(&w0);
            let n = 10_000;
            let mut w = w0.clone();
            let mut pos = x.clone();
            let mut dir = e.clone();
            for _ in 0..n {
                let (next, seg) = m.exp_map(0.0, &pos, &linalg::scale(&dir, 1.0 / n as f64));
                dir = seg.apply(&dir);
                // project the naively carried vector onto the new tangent
                // space, keeping its length
                let carried = m.project_tangent(&next, &w);
                let scale = m.metric_norm(0.0, &w) / m.metric_norm(0.0, &carried);
                w = linalg::scale(&carried, scale);
                pos = next;
            }
            let err = linalg::norm(&linalg::sub(&w, &exact));
            assert!(err < 1e-3, "{m:?}: oracle mismatch {err}");
        }
    }

    #[test]
    fn ricci_z_model_values() {
        let mut rng = rand::rngs::StdRng::seed_from_u64(31);
        let z = DriftField::Zero;
        // sphere: (d-1)/r^2 per unit length
        for (m, want) in [
            (ManifoldModel::Sphere { dim: 2, radius: 1.0 }, 1.0),
            (ManifoldModel::Sphere { dim: 3, radius: 1.0 }, 2.0),
            (ManifoldModel::Hyperbolic { dim: 2, curvature: -1.0 }, -1.0),
            (ManifoldModel::Euclidean { dim: 4 }, 0.0),
        ] {
            let x = m.sample_point(&mut rng);
            let xv = m.sample_unit_tangent(&mut rng, 0.0, &x);
            let got = m.ricci_z(&z, 0.0, &x, &xv, &xv).unwrap();
            assert_relative_eq!(got, want, epsilon = 1e-12);
        }
        // Ornstein-Uhlenbeck drift on flat space: form = +|X|^2
        let m = ManifoldModel::Euclidean { dim: 3 };
        let ou = DriftField::ornstein_uhlenbeck(3);
        let x = m.sample_point(&mut rng);
        let xv = m.sample_unit_tangent(&mut rng, 0.0, &x);
        assert_relative_eq!(m.ricci_z(&ou, 0.0, &x, &xv, &xv).unwrap(), 1.0, epsilon = 1e-12);
    }

    #[test]
    fn evolving_normalized_curvature_vanishes() {
        let m = ManifoldModel::ricci_flow_sphere(2);
        let mut rng = rand::rngs::StdRng::seed_from_u64(37);
        for _ in 0..200 {
            let t = rng.gen_range(0.0..2.0);
            let x = m.sample_point(&mut rng);
            let xv = m.sample_unit_tangent(&mut rng, t, &x);
            let yv = m.sample_unit_tangent(&mut rng, t, &x);
            let diag = m.ricci_z(&DriftField::Zero, t, &x, &xv, &xv).unwrap();
            let off = m.ricci_z(&DriftField::Zero, t, &x, &xv, &yv).unwrap();
            assert!(diag.abs() < 1e-10, "diagonal {diag}");
            assert!(off.abs() < 1e-10, "off-diagonal {off}");
        }
    }

    #[test]
    fn metric_derivative_examples() {
        let m = ManifoldModel::EvolvingSphere { dim: 2, scale: ScaleLaw { c0: 1.0, rate: 1.0 } };
        let x = m.base_point();
        let frame = m.orthonormal_frame(0.0, &x);
        let e = frame.column(0); // unit at t = 0
        assert_relative_eq!(m.metric_derivative(0.0, &x, e, e).unwrap(), 1.0, epsilon = 1e-12);

        let m3 = ManifoldModel::EvolvingSphere { dim: 3, scale: ScaleLaw { c0: 1.0, rate: 2.0 } };
        let x3 = m3.base_point();
        let f3 = m3.orthonormal_frame(0.0, &x3);
        assert_relative_eq!(
            m3.metric_derivative(0.0, &x3, f3.column(0), f3.column(0)).unwrap(),
            2.0,
            epsilon = 1e-12
        );

        assert!(matches!(
            ManifoldModel::unit_sphere(2).metric_derivative(0.0, &[0.0, 0.0, 1.0], &[1.0, 0.0, 0.0], &[1.0, 0.0, 0.0]),
            Err(GeometryError::NotEvolving)
        ));
    }

    #[test]
    fn pinching_model_constants() {
        let z = DriftField::Zero;
        let cases = [
            (ManifoldModel::Hyperbolic { dim: 2, curvature: -1.0 }, (-1.0, -1.0)),
            (ManifoldModel::Sphere { dim: 3, radius: 1.0 }, (2.0, 2.0)),
            (ManifoldModel::Euclidean { dim: 3 }, (0.0, 0.0)),
        ];
        for (m, want) in cases {
            let cert = pinching(&m, &z, 1.0).unwrap();
            assert_eq!(cert.as_constant(), Some(want));
        }
        let ou = pinching(&ManifoldModel::Euclidean { dim: 3 }, &DriftField::ornstein_uhlenbeck(3), 1.0).unwrap();
        let (k1, k2) = ou.as_constant().unwrap();
        assert_relative_eq!(k1, 1.0, epsilon = 1e-12);
        assert_relative_eq!(k2, 1.0, epsilon = 1e-12);

        let flow = pinching(&ManifoldModel::ricci_flow_sphere(2), &z, 0.5).unwrap();
        assert_eq!(flow.as_constant(), Some((0.0, 0.0)));
    }

    #[test]
    fn pinching_tabulated_evolving_curve() {
        // rate off the vanishing normalization: k(t) = a / phi^2(t)
        let scale = ScaleLaw { c0: 1.0, rate: 0.5 };
        let m = ManifoldModel::EvolvingSphere { dim: 2, scale };
        let cert = pinching(&m, &DriftField::Zero, 1.0).unwrap();
        for i in 0..=100 {
            let t = i as f64 / 100.0;
            let exact = 0.5 / scale.phi_sq(t);
            assert!((cert.k1.eval(t) - exact).abs() < 1e-9);
            assert!((cert.k2.eval(t) - exact).abs() < 1e-9);
        }
    }

    #[test]
    fn certify_accepts_exact_and_rejects_false_claims() {
        let m = ManifoldModel::unit_sphere(2);
        let z = DriftField::Zero;
        let good = pinching(&m, &z, 1.0).unwrap();
        let mut rng = rand::rngs::StdRng::seed_from_u64(41);
        certify(&m, &z, 1.0, &good, 10_000, 1e-8, &mut rng).unwrap();

        let bad = PinchingCertificate::constant(1.5, 2.0, "wrong on purpose");
        let err = certify(&m, &z, 1.0, &bad, 100, 1e-8, &mut rng).unwrap_err();
        assert!(matches!(err, GeometryError::CertificateViolation { .. }));
    }

    #[test]
    fn gradient_matches_geodesic_finite_differences() {
        // f = <., w> in ambient coordinates; df(e) along geodesics must equal
        // g(grad f, e) for every model and metric
        let mut rng = rand::rngs::StdRng::seed_from_u64(43);
        for m in models() {
            let t = 0.3;
            let x = m.sample_point(&mut rng);
            let w: Vec<f64> = (0..m.ambient_dim()).map(|_| rng.gen_range(-1.0..1.0)).collect();
            let grad = m.riemannian_gradient(t, &x, &w);
            for _ in 0..5 {
                let e = m.sample_unit_tangent(&mut rng, t, &x);
                let eps = 1e-5;
                let (xp, _) = m.exp_map(t, &x, &linalg::scale(&e, eps));
                let (xm, _) = m.exp_map(t, &x, &linalg::scale(&e, -eps));
                let fd = (linalg::dot(&xp, &w) - linalg::dot(&xm, &w)) / (2.0 * eps);
                assert_relative_eq!(fd, m.metric_dot(t, &grad, &e), epsilon = 1e-8, max_relative = 1e-6);
            }
        }
    }

    #[test]
    fn frames_are_orthonormal_and_coords_roundtrip() {
        let mut rng = rand::rngs::StdRng::seed_from_u64(47);
        for m in models() {
            let t = 0.7;
            let x = m.sample_point(&mut rng);
            let frame = m.orthonormal_frame(t, &x);
            let gram = frame.gram(&m, t);
            for a in 0..frame.dim {
                for b in 0..frame.dim {
                    let target = if a == b { 1.0 } else { 0.0 };
                    assert!((gram.at(a, b) - target).abs() < 1e-12);
                }
            }
            let xi: Vec<f64> = (0..frame.dim).map(|_| rng.gen_range(-2.0..2.0)).collect();
            let v = frame.vector(&xi);
            let back = frame.coords(&m, t, &v);
            for a in 0..frame.dim {
                assert_relative_eq!(back[a], xi[a], epsilon = 1e-12);
            }
            // frame coordinates are isometric
            assert_relative_eq!(linalg::norm(&back), m.metric_norm(t, &v), epsilon = 1e-12);
        }
    }

    #[test]
    fn evolving_frame_stays_isometric_over_long_chains() {
        let m = ManifoldModel::EvolvingSphere { dim: 2, scale: ScaleLaw { c0: 1.0, rate: 1.0 } };
        let x = m.base_point();
        let mut frame = m.orthonormal_frame(0.0, &x);
        let h = 1e-3;
        for step in 0..1000 {
            frame = m.evolve_frame(&frame, step as f64 * h, h);
        }
        let gram = frame.gram(&m, 1.0);
        for a in 0..2 {
            for b in 0..2 {
                let target = if a == b { 1.0 } else { 0.0 };
                assert!(
                    (gram.at(a, b) - target).abs() < 1e-6,
                    "gram({a},{b}) = {}",
                    gram.at(a, b)
                );
            }
        }
    }

    #[test]
    fn drift_jacobian_matches_finite_differences() {
        let a = DriftField::Linear { matrix: vec![vec![0.3, -1.2], vec![0.7, 0.1]] };
        let x = [0.4, -0.9];
        let dir = [0.6, 0.8];
        let eps = 1e-6;
        let xp: Vec<f64> = x.iter().zip(&dir).map(|(a, b)| a + eps * b).collect();
        let xm: Vec<f64> = x.iter().zip(&dir).map(|(a, b)| a - eps * b).collect();
        let fd: Vec<f64> =
            a.z(&xp).iter().zip(a.z(&xm)).map(|(p, m)| (p - m) / (2.0 * eps)).collect();
        let exact = a.nabla(&dir);
        for i in 0..2 {
            assert!((fd[i] - exact[i]).abs() < 1e-8);
        }
    }

    #[test]
    fn drift_validation() {
        let lin = DriftField::Linear { matrix: vec![vec![1.0, 0.0], vec![0.0, 1.0]] };
        assert!(lin.validate(&ManifoldModel::Euclidean { dim: 2 }).is_ok());
        assert!(lin.validate(&ManifoldModel::unit_sphere(2)).is_err());
        assert!(lin.validate(&ManifoldModel::Euclidean { dim: 3 }).is_err());
        assert!(ManifoldModel::Sphere { dim: 2, radius: 0.0 }.validate(1.0).is_err());
        assert!(ManifoldModel::Hyperbolic { dim: 2, curvature: 0.5 }.validate(1.0).is_err());
        assert!(ManifoldModel::EvolvingSphere { dim: 2, scale: ScaleLaw { c0: 1.0, rate: -2.0 } }
            .validate(1.0)
            .is_err());
    }

    proptest! {
        #[test]
        fn transport_is_isometric(
            seed in 0u64..1000,
            len in 0.01f64..2.0,
        ) {
            let mut rng = rand::rngs::StdRng::seed_from_u64(seed);
            for m in [
                ManifoldModel::Sphere { dim: 2, radius: 1.3 },
                ManifoldModel::Hyperbolic { dim: 2, curvature: -0.8 },
                ManifoldModel::EvolvingSphere { dim: 2, scale: ScaleLaw { c0: 2.0, rate: 1.0 } },
            ] {
                let t = 0.4;
                let x = m.sample_point(&mut rng);
                let e = m.sample_unit_tangent(&mut rng, t, &x);
                let w = m.sample_unit_tangent(&mut rng, t, &x);
                let (y, p) = m.exp_map(t, &x, &linalg::scale(&e, len));
                let pw = p.apply(&w);
                // lands tangent and keeps its g_t-norm
                prop_assert!(m.metric_dot(t, &m.project_tangent(&y, &pw), &pw) > 0.0 || linalg::norm(&pw) < 1e-12);
                let defect = linalg::norm(&linalg::sub(&m.project_tangent(&y, &pw), &pw));
                prop_assert!(defect < 1e-10);
                prop_assert!((m.metric_norm(t, &pw) - m.metric_norm(t, &w)).abs() < 1e-10);
            }
        }
    }
}
