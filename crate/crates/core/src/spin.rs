//! Dicke-basis representation of two-mode bosons.
//!
//! Basis index `i = μ + N/2` where `μ = (n_L − n_R)/2` is the Ĵz eigenvalue,
//! so `i` is also the number of atoms in the left well. The measured outcome
//! is the atom-number difference `n = 2μ`.

use crate::{Error, Result, C64};

/// Normalization tolerance for every [`StateVector`].
pub const NORM_TOL: f64 = 1e-10;

pub(crate) fn check_atom_number(n_atoms: usize) -> Result<()> {
    if n_atoms < 2 || !n_atoms.is_multiple_of(2) {
        return Err(Error::InvalidAtomNumber(n_atoms));
    }
    Ok(())
}

/// Ĵz eigenvalue of basis index `i`.
#[inline]
pub fn mu_of_index(n_atoms: usize, i: usize) -> f64 {
    i as f64 - (n_atoms / 2) as f64
}

/// Relative atom-number outcome `n = 2μ` of basis index `i`.
#[inline]
pub fn outcome_of_index(n_atoms: usize, i: usize) -> i64 {
    2 * i as i64 - n_atoms as i64
}

/// Normalized pure state of `N` atoms over the `N + 1` Dicke states.
#[derive(Debug, Clone, PartialEq)]
pub struct StateVector {
    n_atoms: usize,
    amplitudes: Vec<C64>,
}

impl StateVector {
    /// Wraps amplitudes that must already be normalized to [`NORM_TOL`].
    pub fn new(n_atoms: usize, amplitudes: Vec<C64>) -> Result<Self> {
        check_atom_number(n_atoms)?;
        if amplitudes.len() != n_atoms + 1 {
            return Err(Error::DimensionMismatch {
                expected: n_atoms + 1,
                got: amplitudes.len(),
            });
        }
        let norm_sqr = norm_sqr(&amplitudes);
        if (norm_sqr - 1.0).abs() > NORM_TOL {
            return Err(Error::NotNormalized(norm_sqr));
        }
        Ok(Self {
            n_atoms,
            amplitudes,
        })
    }

    /// Wraps arbitrary nonzero amplitudes, rescaling them to unit norm.
    pub fn normalized(n_atoms: usize, mut amplitudes: Vec<C64>) -> Result<Self> {
        check_atom_number(n_atoms)?;
        if amplitudes.len() != n_atoms + 1 {
            return Err(Error::DimensionMismatch {
                expected: n_atoms + 1,
                got: amplitudes.len(),
            });
        }
        let norm = norm_sqr(&amplitudes).sqrt();
        if !(norm.is_finite() && norm > 0.0) {
            return Err(Error::NotNormalized(norm * norm));
        }
        for a in &mut amplitudes {
            *a /= norm;
        }
        Ok(Self {
            n_atoms,
            amplitudes,
        })
    }

    /// Internal constructor for outputs of unitary maps; renormalizes away
    /// rounding drift but asserts it stayed small.
    pub(crate) fn from_unitary_image(n_atoms: usize, mut amplitudes: Vec<C64>) -> Self {
        let norm_sqr = norm_sqr(&amplitudes);
        debug_assert!(
            (norm_sqr - 1.0).abs() < 1e-8,
            "unitary image lost normalization: {norm_sqr}"
        );
        let norm = norm_sqr.sqrt();
        for a in &mut amplitudes {
            *a /= norm;
        }
        Self {
            n_atoms,
            amplitudes,
        }
    }

    pub fn n_atoms(&self) -> usize {
        self.n_atoms
    }

    pub fn dim(&self) -> usize {
        self.amplitudes.len()
    }

    pub fn amplitudes(&self) -> &[C64] {
        &self.amplitudes
    }

    pub fn into_amplitudes(self) -> Vec<C64> {
        self.amplitudes
    }

    pub fn inner(&self, other: &StateVector) -> Result<C64> {
        check_dim(self.dim(), other.dim())?;
        Ok(self
            .amplitudes
            .iter()
            .zip(&other.amplitudes)
            .map(|(a, b)| a.conj() * b)
            .sum())
    }

    /// |⟨self|other⟩|².
    pub fn fidelity(&self, other: &StateVector) -> Result<f64> {
        Ok(self.inner(other)?.norm_sqr())
    }

    /// Multiplies by a global phase `e^{iφ}`.
    pub fn with_global_phase(&self, phi: f64) -> Self {
        let p = C64::from_polar(1.0, phi);
        Self {
            n_atoms: self.n_atoms,
            amplitudes: self.amplitudes.iter().map(|a| a * p).collect(),
        }
    }
}

pub(crate) fn norm_sqr(v: &[C64]) -> f64 {
    v.iter().map(|a| a.norm_sqr()).sum()
}

fn check_dim(expected: usize, got: usize) -> Result<()> {
    if expected != got {
        return Err(Error::DimensionMismatch { expected, got });
    }
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum OperatorLabel {
    Jx,
    Jy,
    Jz,
    Jz2,
    /// Linear combination of the above, e.g. a two-mode Hamiltonian.
    Hamiltonian,
}

/// Hermitian tridiagonal operator on the Dicke space.
///
/// Stores the real diagonal and the upper off-diagonal `(i, i+1)`; the lower
/// off-diagonal is its conjugate, so Hermiticity holds by construction.
#[derive(Debug, Clone, PartialEq)]
pub struct CollectiveOperator {
    n_atoms: usize,
    label: OperatorLabel,
    diag: Vec<f64>,
    upper: Vec<C64>,
}

/// The four collective operators for one atom number.
#[derive(Debug, Clone)]
pub struct CollectiveOperators {
    pub jx: CollectiveOperator,
    pub jy: CollectiveOperator,
    pub jz: CollectiveOperator,
    pub jz2: CollectiveOperator,
}

/// `⟨μ+1|Ĵ+|μ⟩ = √(J(J+1) − μ(μ+1))` for `μ = i − J`, `i = 0..N`.
pub(crate) fn raising_elements(n_atoms: usize) -> Vec<f64> {
    let j = n_atoms as f64 / 2.0;
    (0..n_atoms)
        .map(|i| {
            let mu = mu_of_index(n_atoms, i);
            (j * (j + 1.0) - mu * (mu + 1.0)).max(0.0).sqrt()
        })
        .collect()
}

pub fn collective_operators(n_atoms: usize) -> Result<CollectiveOperators> {
    check_atom_number(n_atoms)?;
    let dim = n_atoms + 1;
    let b = raising_elements(n_atoms);
    let mus: Vec<f64> = (0..dim).map(|i| mu_of_index(n_atoms, i)).collect();

    let jx = CollectiveOperator {
        n_atoms,
        label: OperatorLabel::Jx,
        diag: vec![0.0; dim],
        upper: b.iter().map(|&x| C64::new(0.5 * x, 0.0)).collect(),
    };
    // Jy = (J+ − J−)/(2i): element (i, i+1) = −⟨i|J−|i+1⟩/(2i) = i·b/2
    let jy = CollectiveOperator {
        n_atoms,
        label: OperatorLabel::Jy,
        diag: vec![0.0; dim],
        upper: b.iter().map(|&x| C64::new(0.0, 0.5 * x)).collect(),
    };
    let jz = CollectiveOperator {
        n_atoms,
        label: OperatorLabel::Jz,
        diag: mus.clone(),
        upper: vec![C64::new(0.0, 0.0); n_atoms],
    };
    let jz2 = CollectiveOperator {
        n_atoms,
        label: OperatorLabel::Jz2,
        diag: mus.iter().map(|m| m * m).collect(),
        upper: vec![C64::new(0.0, 0.0); n_atoms],
    };
    Ok(CollectiveOperators { jx, jy, jz, jz2 })
}

impl CollectiveOperator {
    pub fn n_atoms(&self) -> usize {
        self.n_atoms
    }

    pub fn dim(&self) -> usize {
        self.diag.len()
    }

    pub fn label(&self) -> OperatorLabel {
        self.label
    }

    pub fn diag(&self) -> &[f64] {
        &self.diag
    }

    pub fn upper(&self) -> &[C64] {
        &self.upper
    }

    /// Matrix element `(row, col)`; zero outside the band.
    pub fn element(&self, row: usize, col: usize) -> C64 {
        if row == col {
            C64::new(self.diag[row], 0.0)
        } else if col == row + 1 {
            self.upper[row]
        } else if row == col + 1 {
            self.upper[col].conj()
        } else {
            C64::new(0.0, 0.0)
        }
    }

    /// `Σ_k c_k · op_k` over operators of the same atom number.
    pub fn linear_combination(terms: &[(f64, &CollectiveOperator)]) -> Result<Self> {
        let first = terms
            .first()
            .ok_or_else(|| Error::InvalidParameter("empty linear combination".into()))?
            .1;
        let mut out = CollectiveOperator {
            n_atoms: first.n_atoms,
            label: OperatorLabel::Hamiltonian,
            diag: vec![0.0; first.dim()],
            upper: vec![C64::new(0.0, 0.0); first.dim() - 1],
        };
        for &(c, op) in terms {
            check_dim(out.dim(), op.dim())?;
            for (d, s) in out.diag.iter_mut().zip(&op.diag) {
                *d += c * s;
            }
            for (u, s) in out.upper.iter_mut().zip(&op.upper) {
                *u += s * c;
            }
        }
        Ok(out)
    }

    /// Real symmetric tridiagonal view `(diag, offdiag)` if every
    /// off-diagonal entry is real.
    pub fn as_real_tridiagonal(&self) -> Option<(Vec<f64>, Vec<f64>)> {
        if self.upper.iter().any(|u| u.im != 0.0) {
            return None;
        }
        Some((self.diag.clone(), self.upper.iter().map(|u| u.re).collect()))
    }

    pub fn apply(&self, v: &[C64]) -> Result<Vec<C64>> {
        check_dim(self.dim(), v.len())?;
        Ok(self.apply_unchecked(v))
    }

    pub(crate) fn apply_unchecked(&self, v: &[C64]) -> Vec<C64> {
        let n = self.dim();
        let mut out: Vec<C64> = (0..n).map(|i| v[i] * self.diag[i]).collect();
        for i in 0..n - 1 {
            out[i] += self.upper[i] * v[i + 1];
            out[i + 1] += self.upper[i].conj() * v[i];
        }
        out
    }

    /// Dense copy, row-major `dim × dim`.
    pub fn to_dense(&self) -> Vec<Vec<C64>> {
        let n = self.dim();
        (0..n)
            .map(|r| (0..n).map(|c| self.element(r, c)).collect())
            .collect()
    }
}

/// Dense commutator `[a, b]`.
pub fn commutator(a: &CollectiveOperator, b: &CollectiveOperator) -> Result<Vec<Vec<C64>>> {
    check_dim(a.dim(), b.dim())?;
    let n = a.dim();
    let ad = a.to_dense();
    let bd = b.to_dense();
    let mut out = vec![vec![C64::new(0.0, 0.0); n]; n];
    for r in 0..n {
        for c in 0..n {
            let lo = r.saturating_sub(2).max(c.saturating_sub(2));
            let hi = (r + 2).min(c + 2).min(n - 1);
            let mut acc = C64::new(0.0, 0.0);
            for k in lo..=hi {
                acc += ad[r][k] * bd[k][c] - bd[r][k] * ad[k][c];
            }
            out[r][c] = acc;
        }
    }
    Ok(out)
}

/// `⟨ψ|op|ψ⟩`.
pub fn expectation(op: &CollectiveOperator, psi: &StateVector) -> Result<f64> {
    let applied = op.apply(psi.amplitudes())?;
    let value: C64 = psi
        .amplitudes()
        .iter()
        .zip(&applied)
        .map(|(a, b)| a.conj() * b)
        .sum();
    debug_assert!(
        value.im.abs() < 1e-12 * value.re.abs().max(1.0),
        "non-real expectation of Hermitian operator: {value}"
    );
    Ok(value.re)
}

/// `⟨op²⟩ − ⟨op⟩²`, clamped at zero against rounding.
pub fn variance(op: &CollectiveOperator, psi: &StateVector) -> Result<f64> {
    let applied = op.apply(psi.amplitudes())?;
    let second = norm_sqr(&applied);
    let first: C64 = psi
        .amplitudes()
        .iter()
        .zip(&applied)
        .map(|(a, b)| a.conj() * b)
        .sum();
    let var = second - first.re * first.re;
    debug_assert!(var > -1e-12 * second.max(1.0), "negative variance {var}");
    Ok(var.max(0.0))
}

/// Probability vector `P(n)` over relative atom-number outcomes.
#[derive(Debug, Clone, PartialEq)]
pub struct OutcomeDistribution {
    n_atoms: usize,
    probs: Vec<f64>,
}

impl OutcomeDistribution {
    /// Validates nonnegativity and unit sum (1e-9).
    pub fn new(n_atoms: usize, probs: Vec<f64>) -> Result<Self> {
        check_atom_number(n_atoms)?;
        check_dim(n_atoms + 1, probs.len())?;
        if probs.iter().any(|p| !(*p >= 0.0)) {
            return Err(Error::InvalidParameter(
                "negative or NaN probability".into(),
            ));
        }
        let total: f64 = probs.iter().sum();
        if (total - 1.0).abs() > 1e-9 {
            return Err(Error::InvalidParameter(format!(
                "probabilities sum to {total}"
            )));
        }
        Ok(Self { n_atoms, probs })
    }

    pub(crate) fn from_raw(n_atoms: usize, probs: Vec<f64>) -> Self {
        Self { n_atoms, probs }
    }

    pub fn n_atoms(&self) -> usize {
        self.n_atoms
    }

    pub fn probs(&self) -> &[f64] {
        &self.probs
    }

    /// Outcomes `n = 2μ` aligned with [`probs`](Self::probs).
    pub fn outcomes(&self) -> Vec<i64> {
        (0..self.probs.len())
            .map(|i| outcome_of_index(self.n_atoms, i))
            .collect()
    }

    /// Mean and standard deviation in basis-index units.
    pub fn index_moments(&self) -> (f64, f64) {
        let mean: f64 = self
            .probs
            .iter()
            .enumerate()
            .map(|(i, p)| i as f64 * p)
            .sum();
        let var: f64 = self
            .probs
            .iter()
            .enumerate()
            .map(|(i, p)| (i as f64 - mean).powi(2) * p)
            .sum();
        (mean, var.sqrt())
    }
}

pub fn outcome_distribution(psi: &StateVector) -> OutcomeDistribution {
    let probs = psi.amplitudes().iter().map(|a| a.norm_sqr()).collect();
    OutcomeDistribution::from_raw(psi.n_atoms(), probs)
}

/// `ln k!` for `k = 0..=n`.
pub(crate) fn ln_factorials(n: usize) -> Vec<f64> {
    let mut out = Vec::with_capacity(n + 1);
    let mut acc = 0.0;
    out.push(0.0);
    for k in 1..=n {
        acc += (k as f64).ln();
        out.push(acc);
    }
    out
}

/// `base^exp` with `0^0 = 1`, computed in log space.
fn pow_log(base: f64, exp: usize) -> (f64, bool) {
    // returns (ln value, is_zero)
    if exp == 0 {
        (0.0, false)
    } else if base == 0.0 {
        (f64::NEG_INFINITY, true)
    } else {
        (exp as f64 * base.abs().ln(), false)
    }
}

/// Spin-coherent state pointing along polar angle `theta` (from +z) and
/// azimuth `phi` on the Bloch sphere:
/// `c_μ = √C(N, J+μ) cos^{J+μ}(θ/2) sin^{J−μ}(θ/2) e^{i(J−μ)φ}`.
pub fn coherent_state(n_atoms: usize, theta: f64, phi: f64) -> Result<StateVector> {
    check_atom_number(n_atoms)?;
    if !(theta.is_finite() && phi.is_finite()) {
        return Err(Error::InvalidParameter("non-finite angle".into()));
    }
    let lnf = ln_factorials(n_atoms);
    let (c, s) = ((theta / 2.0).cos(), (theta / 2.0).sin());
    let amps = (0..=n_atoms)
        .map(|i| {
            // i = J + μ, N − i = J − μ
            let (lc, zc) = pow_log(c, i);
            let (ls, zs) = pow_log(s, n_atoms - i);
            if zc || zs {
                return C64::new(0.0, 0.0);
            }
            let ln_binom = lnf[n_atoms] - lnf[i] - lnf[n_atoms - i];
            let mut mag = (0.5 * ln_binom + lc + ls).exp();
            if c < 0.0 && i % 2 == 1 {
                mag = -mag;
            }
            if s < 0.0 && (n_atoms - i) % 2 == 1 {
                mag = -mag;
            }
            C64::from_polar(1.0, (n_atoms - i) as f64 * phi) * mag
        })
        .collect();
    Ok(StateVector::from_unitary_image(n_atoms, amps))
}

/// Husimi Q function `Q(ϑ, φ) = |⟨ϑ, φ|ψ⟩|²` at each grid point.
pub fn husimi_q(psi: &StateVector, grid: &[(f64, f64)]) -> Result<Vec<f64>> {
    grid.iter()
        .map(|&(theta, phi)| {
            let cs = coherent_state(psi.n_atoms(), theta, phi)?;
            Ok(cs.fidelity(psi)?.min(1.0))
        })
        .collect()
}

/// Regular (polar × azimuth) grid with polar in `[0, π]` and azimuth in
/// `[0, 2π)`.
pub fn sphere_grid(n_polar: usize, n_azimuth: usize) -> Vec<(f64, f64)> {
    use std::f64::consts::PI;
    let mut out = Vec::with_capacity(n_polar * n_azimuth);
    for a in 0..n_polar {
        let theta = if n_polar > 1 {
            PI * a as f64 / (n_polar - 1) as f64
        } else {
            PI / 2.0
        };
        for b in 0..n_azimuth {
            out.push((theta, 2.0 * PI * b as f64 / n_azimuth as f64));
        }
    }
    out
}
