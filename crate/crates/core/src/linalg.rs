//! Eigendecomposition of real symmetric tridiagonal matrices and the
//! exponentials built from it.

use nalgebra::{DMatrix, SymmetricEigen};

use crate::{Error, Result, C64};

/// `H = V diag(λ) Vᵀ` for a real symmetric tridiagonal `H`.
#[derive(Debug, Clone)]
pub struct TridiagonalEigen {
    values: Vec<f64>,
    /// Column `k` is the eigenvector of `values[k]`.
    vectors: DMatrix<f64>,
}

const MAX_QR_ITERATIONS: usize = 1_000_000;

impl TridiagonalEigen {
    pub fn new(diag: &[f64], offdiag: &[f64]) -> Result<Self> {
        let n = diag.len();
        if offdiag.len() + 1 != n {
            return Err(Error::DimensionMismatch {
                expected: n.saturating_sub(1),
                got: offdiag.len(),
            });
        }
        let mut dense = DMatrix::<f64>::zeros(n, n);
        for i in 0..n {
            dense[(i, i)] = diag[i];
        }
        for (i, &b) in offdiag.iter().enumerate() {
            dense[(i, i + 1)] = b;
            dense[(i + 1, i)] = b;
        }
        let fail = || Error::Eigensolver {
            dim: n,
            max_diag: diag.iter().fold(0.0, |m, x| f64::max(m, x.abs())),
            max_offdiag: offdiag.iter().fold(0.0, |m, x| f64::max(m, x.abs())),
        };
        if diag.iter().chain(offdiag).any(|x| !x.is_finite()) {
            return Err(fail());
        }
        let eig =
            SymmetricEigen::try_new(dense, f64::EPSILON, MAX_QR_ITERATIONS).ok_or_else(fail)?;
        Ok(Self {
            values: eig.eigenvalues.iter().copied().collect(),
            vectors: eig.eigenvectors,
        })
    }

    pub fn dim(&self) -> usize {
        self.values.len()
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn vectors(&self) -> &DMatrix<f64> {
        &self.vectors
    }

    /// Index of the smallest eigenvalue.
    pub fn ground_index(&self) -> usize {
        let mut best = 0;
        for (k, &v) in self.values.iter().enumerate() {
            if v < self.values[best] {
                best = k;
            }
        }
        best
    }

    pub fn eigenvector(&self, k: usize) -> Vec<f64> {
        self.vectors.column(k).iter().copied().collect()
    }

    /// Coefficients `Vᵀ v` in the eigenbasis.
    fn to_eigenbasis(&self, v: &[C64]) -> Vec<C64> {
        (0..self.dim())
            .map(|k| {
                self.vectors
                    .column(k)
                    .iter()
                    .zip(v)
                    .map(|(e, x)| x * *e)
                    .sum()
            })
            .collect()
    }

    /// `V · diag(w) · c` with `c` already in the eigenbasis.
    fn from_eigenbasis(&self, coeffs: &[C64]) -> Vec<C64> {
        let mut out = vec![C64::new(0.0, 0.0); self.dim()];
        for (k, c) in coeffs.iter().enumerate() {
            for (o, e) in out.iter_mut().zip(self.vectors.column(k).iter()) {
                *o += c * *e;
            }
        }
        out
    }

    /// `e^{−iHt} v`. `t` may be negative.
    pub fn apply_exp(&self, t: f64, v: &[C64]) -> Vec<C64> {
        let mut coeffs = self.to_eigenbasis(v);
        for (c, &lam) in coeffs.iter_mut().zip(&self.values) {
            *c *= C64::from_polar(1.0, -lam * t);
        }
        self.from_eigenbasis(&coeffs)
    }

    /// Dense `e^{−iHt}`, row-major.
    pub fn exp_dense(&self, t: f64) -> Vec<Vec<C64>> {
        let n = self.dim();
        let phases: Vec<C64> = self
            .values
            .iter()
            .map(|&lam| C64::from_polar(1.0, -lam * t))
            .collect();
        (0..n)
            .map(|r| {
                (0..n)
                    .map(|c| {
                        (0..n)
                            .map(|k| phases[k] * (self.vectors[(r, k)] * self.vectors[(c, k)]))
                            .sum()
                    })
                    .collect()
            })
            .collect()
    }
}

/// Max-abs deviation of `U†U` from the identity.
pub fn unitarity_defect(u: &[Vec<C64>]) -> f64 {
    let n = u.len();
    let mut worst = 0.0f64;
    for a in 0..n {
        for b in 0..n {
            let mut acc = C64::new(0.0, 0.0);
            for row in u {
                acc += row[a].conj() * row[b];
            }
            let target = if a == b { 1.0 } else { 0.0 };
            worst = worst.max((acc - target).norm());
        }
    }
    worst
}
