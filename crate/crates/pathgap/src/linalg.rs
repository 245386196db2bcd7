//! Small dense vector/matrix helpers. Everything in this crate lives in
//! ambient dimension <= 4, so plain `Vec<f64>` with explicit loops beats a
//! general linear algebra dependency.

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    debug_assert_eq!(a.len(), b.len());
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

pub fn scale(a: &[f64], s: f64) -> Vec<f64> {
    a.iter().map(|x| x * s).collect()
}

/// y += s * x
pub fn axpy(y: &mut [f64], s: f64, x: &[f64]) {
    debug_assert_eq!(y.len(), x.len());
    for (yi, xi) in y.iter_mut().zip(x) {
        *yi += s * xi;
    }
}

pub fn sub(a: &[f64], b: &[f64]) -> Vec<f64> {
    a.iter().zip(b).map(|(x, y)| x - y).collect()
}

/// Square row-major matrix, dimension `n`.
#[derive(Clone, Debug, PartialEq)]
pub struct SqMat {
    pub n: usize,
    pub a: Vec<f64>,
}

impl SqMat {
    pub fn zeros(n: usize) -> Self {
        SqMat { n, a: vec![0.0; n * n] }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = SqMat::zeros(n);
        for i in 0..n {
            m.a[i * n + i] = 1.0;
        }
        m
    }

    pub fn from_rows(n: usize, a: Vec<f64>) -> Self {
        assert_eq!(a.len(), n * n);
        SqMat { n, a }
    }

    #[inline]
    pub fn at(&self, i: usize, j: usize) -> f64 {
        self.a[i * self.n + j]
    }

    #[inline]
    pub fn at_mut(&mut self, i: usize, j: usize) -> &mut f64 {
        &mut self.a[i * self.n + j]
    }

    pub fn mul(&self, rhs: &SqMat) -> SqMat {
        let n = self.n;
        debug_assert_eq!(n, rhs.n);
        let mut out = SqMat::zeros(n);
        for i in 0..n {
            for k in 0..n {
                let s = self.a[i * n + k];
                if s == 0.0 {
                    continue;
                }
                for j in 0..n {
                    out.a[i * n + j] += s * rhs.a[k * n + j];
                }
            }
        }
        out
    }

    pub fn mul_vec(&self, v: &[f64]) -> Vec<f64> {
        let n = self.n;
        debug_assert_eq!(v.len(), n);
        let mut out = vec![0.0; n];
        for i in 0..n {
            out[i] = dot(&self.a[i * n..(i + 1) * n], v);
        }
        out
    }

    pub fn transpose(&self) -> SqMat {
        let n = self.n;
        let mut out = SqMat::zeros(n);
        for i in 0..n {
            for j in 0..n {
                out.a[j * n + i] = self.a[i * n + j];
            }
        }
        out
    }

    pub fn add_scaled(&self, rhs: &SqMat, s: f64) -> SqMat {
        let mut out = self.clone();
        for (o, r) in out.a.iter_mut().zip(&rhs.a) {
            *o += s * r;
        }
        out
    }

    pub fn scaled(&self, s: f64) -> SqMat {
        SqMat { n: self.n, a: self.a.iter().map(|x| x * s).collect() }
    }

    /// Gauss-Jordan inverse with partial pivoting. Panics on dimension 0;
    /// returns None for a numerically singular matrix.
    pub fn inverse(&self) -> Option<SqMat> {
        let n = self.n;
        let mut aug = vec![0.0; n * 2 * n];
        for i in 0..n {
            for j in 0..n {
                aug[i * 2 * n + j] = self.a[i * n + j];
            }
            aug[i * 2 * n + n + i] = 1.0;
        }
        for col in 0..n {
            let mut piv = col;
            for r in col + 1..n {
                if aug[r * 2 * n + col].abs() > aug[piv * 2 * n + col].abs() {
                    piv = r;
                }
            }
            if aug[piv * 2 * n + col].abs() < 1e-300 {
                return None;
            }
            if piv != col {
                for j in 0..2 * n {
                    aug.swap(col * 2 * n + j, piv * 2 * n + j);
                }
            }
            let d = aug[col * 2 * n + col];
            for j in 0..2 * n {
                aug[col * 2 * n + j] /= d;
            }
            for r in 0..n {
                if r == col {
                    continue;
                }
                let f = aug[r * 2 * n + col];
                if f == 0.0 {
                    continue;
                }
                for j in 0..2 * n {
                    aug[r * 2 * n + j] -= f * aug[col * 2 * n + j];
                }
            }
        }
        let mut out = SqMat::zeros(n);
        for i in 0..n {
            for j in 0..n {
                out.a[i * n + j] = aug[i * 2 * n + n + j];
            }
        }
        Some(out)
    }

    /// Matrix exponential by scaling-and-squaring around a Taylor series.
    /// Accurate to machine precision for the small, mildly-normed matrices
    /// produced by the curvature ODE (||A|| is at most a few units).
    pub fn exp(&self) -> SqMat {
        let n = self.n;
        let norm1: f64 = (0..n)
            .map(|j| (0..n).map(|i| self.at(i, j).abs()).sum::<f64>())
            .fold(0.0, f64::max);
        let s = if norm1 > 0.5 { (norm1 / 0.5).log2().ceil() as u32 } else { 0 };
        let b = self.scaled(0.5f64.powi(s as i32));
        let mut term = SqMat::identity(n);
        let mut sum = SqMat::identity(n);
        for k in 1..=16 {
            term = term.mul(&b).scaled(1.0 / k as f64);
            sum = sum.add_scaled(&term, 1.0);
        }
        for _ in 0..s {
            sum = sum.mul(&sum);
        }
        sum
    }

    pub fn frobenius(&self) -> f64 {
        norm(&self.a)
    }

    /// Operator (spectral) norm: sqrt of the largest eigenvalue of A^T A,
    /// via cyclic Jacobi on the symmetric product.
    pub fn op_norm(&self) -> f64 {
        let ata = self.transpose().mul(self);
        sym_eigen_max(&ata).max(0.0).sqrt()
    }
}

/// Largest eigenvalue of a symmetric matrix (cyclic Jacobi).
pub fn sym_eigen_max(m: &SqMat) -> f64 {
    sym_eigenvalues(m).into_iter().fold(f64::NEG_INFINITY, f64::max)
}

pub fn sym_eigenvalues(m: &SqMat) -> Vec<f64> {
    let n = m.n;
    if n == 1 {
        return vec![m.a[0]];
    }
    let mut a = m.clone();
    for _sweep in 0..64 {
        let mut off = 0.0;
        for i in 0..n {
            for j in i + 1..n {
                off += a.at(i, j).abs();
            }
        }
        if off < 1e-14 * (1.0 + a.frobenius()) {
            break;
        }
        for p in 0..n {
            for q in p + 1..n {
                let apq = a.at(p, q);
                if apq.abs() < 1e-300 {
                    continue;
                }
                let theta = (a.at(q, q) - a.at(p, p)) / (2.0 * apq);
                let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                let c = 1.0 / (t * t + 1.0).sqrt();
                let s = t * c;
                for k in 0..n {
                    let akp = a.at(k, p);
                    let akq = a.at(k, q);
                    *a.at_mut(k, p) = c * akp - s * akq;
                    *a.at_mut(k, q) = s * akp + c * akq;
                }
                for k in 0..n {
                    let apk = a.at(p, k);
                    let aqk = a.at(q, k);
                    *a.at_mut(p, k) = c * apk - s * aqk;
                    *a.at_mut(q, k) = s * apk + c * aqk;
                }
            }
        }
    }
    (0..n).map(|i| a.at(i, i)).collect()
}
