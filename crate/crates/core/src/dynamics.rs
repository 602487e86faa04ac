//! Exact unitary evolution under the two-mode Hamiltonian
//! `H = −Ω Ĵx − ΔE Ĵz + U0 Ĵz²` and the interacting Mach-Zehnder sequence
//! `BS · phase · BS`.
//!
//! Every leg is time independent, so propagators come from one symmetric
//! tridiagonal eigendecomposition each. Decompositions are memoized in a
//! process-wide cache keyed by `(N, Ω, U0, ΔE)`.

use std::collections::HashMap;
use std::f64::consts::FRAC_PI_2;
use std::sync::{Arc, OnceLock, RwLock};

use serde::{Deserialize, Serialize};

use crate::linalg::{unitarity_defect, TridiagonalEigen};
use crate::spin::{self, check_atom_number, collective_operators, CollectiveOperator, StateVector};
use crate::{Error, Result, C64};

/// Controls of one interferometer run. Dimensionless, ħ = 1.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SequenceParams {
    pub n_atoms: usize,
    /// Tunnel coupling Ω of the beam splitters.
    pub omega: f64,
    /// Interaction energy per pair.
    pub u0: f64,
    /// Well energy difference during phase accumulation.
    pub delta_e: f64,
    /// Beam-splitter duration T_t.
    pub t_bs: f64,
    /// Phase-accumulation duration T_e.
    pub t_phase: f64,
}

impl SequenceParams {
    /// Balanced sequence with `Ω T_t = π/2`, interaction `U0 = u0n / N` and
    /// zero phase.
    pub fn mach_zehnder(n_atoms: usize, u0n: f64, t_bs: f64, t_phase: f64) -> Result<Self> {
        check_atom_number(n_atoms)?;
        if !(t_bs > 0.0 && t_bs.is_finite()) {
            return Err(Error::InvalidParameter(format!(
                "beam-splitter time must be > 0 for Omega*T_t = pi/2, got {t_bs}"
            )));
        }
        let p = Self {
            n_atoms,
            omega: FRAC_PI_2 / t_bs,
            u0: u0n / n_atoms as f64,
            delta_e: 0.0,
            t_bs,
            t_phase,
        };
        p.validate()?;
        Ok(p)
    }

    /// Accumulated phase `θ = ΔE · T_e`.
    pub fn theta(&self) -> f64 {
        self.delta_e * self.t_phase
    }

    /// Sets ΔE so that `ΔE · T_e = theta`.
    pub fn with_theta(mut self, theta: f64) -> Result<Self> {
        if !theta.is_finite() {
            return Err(Error::InvalidParameter(format!(
                "theta must be finite, got {theta}"
            )));
        }
        if self.t_phase == 0.0 {
            if theta != 0.0 {
                return Err(Error::InvalidParameter(
                    "nonzero theta needs T_e > 0".into(),
                ));
            }
            self.delta_e = 0.0;
        } else {
            self.delta_e = theta / self.t_phase;
        }
        Ok(self)
    }

    /// Moves T_e keeping θ fixed (ΔE adjusted).
    pub fn with_phase_time(self, t_phase: f64) -> Result<Self> {
        let theta = self.theta();
        Self { t_phase, ..self }.with_theta(theta)
    }

    pub fn u0n(&self) -> f64 {
        self.u0 * self.n_atoms as f64
    }

    pub fn validate(&self) -> Result<()> {
        check_atom_number(self.n_atoms)?;
        for (name, v) in [
            ("omega", self.omega),
            ("u0", self.u0),
            ("delta_e", self.delta_e),
            ("t_bs", self.t_bs),
            ("t_phase", self.t_phase),
        ] {
            if !v.is_finite() {
                return Err(Error::InvalidParameter(format!("{name} is not finite")));
            }
        }
        if self.t_bs < 0.0 || self.t_phase < 0.0 {
            return Err(Error::InvalidParameter("durations must be >= 0".into()));
        }
        Ok(())
    }
}

pub fn build_hamiltonian(
    n_atoms: usize,
    omega: f64,
    u0: f64,
    delta_e: f64,
) -> Result<CollectiveOperator> {
    let ops = collective_operators(n_atoms)?;
    CollectiveOperator::linear_combination(&[
        (-omega, &ops.jx),
        (-delta_e, &ops.jz),
        (u0, &ops.jz2),
    ])
}

type CacheKey = (usize, u64, u64, u64);

const CACHE_CAPACITY: usize = 512;

fn cache() -> &'static RwLock<HashMap<CacheKey, Arc<TridiagonalEigen>>> {
    static CACHE: OnceLock<RwLock<HashMap<CacheKey, Arc<TridiagonalEigen>>>> = OnceLock::new();
    CACHE.get_or_init(|| RwLock::new(HashMap::new()))
}

/// Cached eigendecomposition of `−Ω Ĵx − ΔE Ĵz + U0 Ĵz²`.
pub fn hamiltonian_eigen(
    n_atoms: usize,
    omega: f64,
    u0: f64,
    delta_e: f64,
) -> Result<Arc<TridiagonalEigen>> {
    // +0.0 and −0.0 describe the same Hamiltonian
    let key = (
        n_atoms,
        (omega + 0.0).to_bits(),
        (u0 + 0.0).to_bits(),
        (delta_e + 0.0).to_bits(),
    );
    if let Some(e) = cache().read().expect("propagator cache poisoned").get(&key) {
        return Ok(Arc::clone(e));
    }
    let h = build_hamiltonian(n_atoms, omega, u0, delta_e)?;
    let (diag, off) = h
        .as_real_tridiagonal()
        .expect("two-mode Hamiltonian is real");
    let eig = Arc::new(TridiagonalEigen::new(&diag, &off)?);
    let mut guard = cache().write().expect("propagator cache poisoned");
    if guard.len() >= CACHE_CAPACITY {
        guard.clear();
    }
    // first writer wins so concurrent callers share one decomposition
    Ok(Arc::clone(guard.entry(key).or_insert(eig)))
}

/// `e^{−i(−Ω Ĵx − ΔE Ĵz + U0 Ĵz²) t}`.
#[derive(Debug, Clone)]
pub struct Propagator {
    n_atoms: usize,
    eigen: Arc<TridiagonalEigen>,
    pub omega: f64,
    pub u0: f64,
    pub delta_e: f64,
    pub duration: f64,
}

impl Propagator {
    pub fn new(n_atoms: usize, omega: f64, u0: f64, delta_e: f64, duration: f64) -> Result<Self> {
        if !(duration >= 0.0 && duration.is_finite()) {
            return Err(Error::InvalidParameter(format!(
                "duration must be finite and >= 0, got {duration}"
            )));
        }
        Ok(Self {
            n_atoms,
            eigen: hamiltonian_eigen(n_atoms, omega, u0, delta_e)?,
            omega,
            u0,
            delta_e,
            duration,
        })
    }

    /// Beam-splitter leg `e^{−i(H_t + H_i) T_t}` of a sequence.
    pub fn beam_splitter(params: &SequenceParams) -> Result<Self> {
        Self::new(params.n_atoms, params.omega, params.u0, 0.0, params.t_bs)
    }

    pub fn n_atoms(&self) -> usize {
        self.n_atoms
    }

    pub fn apply(&self, psi: &StateVector) -> Result<StateVector> {
        if psi.n_atoms() != self.n_atoms {
            return Err(Error::DimensionMismatch {
                expected: self.n_atoms + 1,
                got: psi.dim(),
            });
        }
        Ok(StateVector::from_unitary_image(
            self.n_atoms,
            self.apply_raw(psi.amplitudes()),
        ))
    }

    /// Applies to any vector, normalized or not.
    pub fn apply_raw(&self, v: &[C64]) -> Vec<C64> {
        if self.duration == 0.0 {
            return v.to_vec();
        }
        self.eigen.apply_exp(self.duration, v)
    }

    /// Dense unitary, row-major.
    pub fn unitary(&self) -> Vec<Vec<C64>> {
        self.eigen.exp_dense(self.duration)
    }

    pub fn unitarity_defect(&self) -> f64 {
        unitarity_defect(&self.unitary())
    }
}

/// `e^{−iHt} ψ` for a real tridiagonal Hamiltonian.
pub fn propagate(psi: &StateVector, h: &CollectiveOperator, t: f64) -> Result<StateVector> {
    if !(t >= 0.0 && t.is_finite()) {
        return Err(Error::InvalidParameter(format!(
            "duration must be finite and >= 0, got {t}"
        )));
    }
    if h.dim() != psi.dim() {
        return Err(Error::DimensionMismatch {
            expected: h.dim(),
            got: psi.dim(),
        });
    }
    if t == 0.0 {
        return Ok(psi.clone());
    }
    let (diag, off) = h.as_real_tridiagonal().ok_or_else(|| {
        Error::InvalidParameter("propagate needs a real symmetric Hamiltonian".into())
    })?;
    let eig = TridiagonalEigen::new(&diag, &off)?;
    Ok(StateVector::from_unitary_image(
        psi.n_atoms(),
        eig.apply_exp(t, psi.amplitudes()),
    ))
}

/// Diagonal phase factors `e^{i(θμ − U0 T_e μ²)}` of the middle leg.
fn phase_factors(n_atoms: usize, theta: f64, u0: f64, t_phase: f64) -> Vec<C64> {
    (0..=n_atoms)
        .map(|i| {
            let mu = spin::mu_of_index(n_atoms, i);
            C64::from_polar(1.0, theta * mu - u0 * t_phase * mu * mu)
        })
        .collect()
}

/// `e^{−i(H_e + H_i) T_e} ψ = e^{iθĴz} e^{−iU0 T_e Ĵz²} ψ`.
pub fn phase_accumulate(psi: &StateVector, theta: f64, u0: f64, t_phase: f64) -> StateVector {
    let amps = psi
        .amplitudes()
        .iter()
        .zip(phase_factors(psi.n_atoms(), theta, u0, t_phase))
        .map(|(a, p)| a * p)
        .collect();
    StateVector::from_unitary_image(psi.n_atoms(), amps)
}

/// Interferometer with cached beam-splitter propagator for fixed
/// `(N, Ω, U0, T_t, T_e)`. θ is supplied per evaluation.
#[derive(Debug, Clone)]
pub struct Interferometer {
    params: SequenceParams,
    bs: Propagator,
}

impl Interferometer {
    pub fn new(params: SequenceParams) -> Result<Self> {
        params.validate()?;
        Ok(Self {
            bs: Propagator::beam_splitter(&params)?,
            params,
        })
    }

    pub fn params(&self) -> &SequenceParams {
        &self.params
    }

    pub fn beam_splitter(&self) -> &Propagator {
        &self.bs
    }

    /// State after the first beam splitter.
    pub fn after_first_bs(&self, psi_in: &StateVector) -> Result<StateVector> {
        self.bs.apply(psi_in)
    }

    /// `|ψ_out(θ)⟩` from the state after the first beam splitter.
    pub fn output_from_split(&self, split: &StateVector, theta: f64) -> StateVector {
        let p = &self.params;
        let phased = phase_accumulate(split, theta, p.u0, p.t_phase);
        StateVector::from_unitary_image(p.n_atoms, self.bs.apply_raw(phased.amplitudes()))
    }

    /// `∂_θ |ψ_out(θ)⟩ = U_BS (iĴz) U_phase U_BS |ψ_in⟩`, from the state after
    /// the first beam splitter.
    pub fn derivative_from_split(&self, split: &StateVector, theta: f64) -> Vec<C64> {
        let p = &self.params;
        let n = p.n_atoms;
        let v: Vec<C64> = split
            .amplitudes()
            .iter()
            .zip(phase_factors(n, theta, p.u0, p.t_phase))
            .enumerate()
            .map(|(i, (a, ph))| a * ph * C64::new(0.0, spin::mu_of_index(n, i)))
            .collect();
        self.bs.apply_raw(&v)
    }

    pub fn output(&self, psi_in: &StateVector, theta: f64) -> Result<StateVector> {
        Ok(self.output_from_split(&self.after_first_bs(psi_in)?, theta))
    }
}

/// Full sequence `e^{−i(H_t+H_i)T_t} e^{−i(H_e+H_i)T_e} e^{−i(H_t+H_i)T_t} |ψ_in⟩`
/// at `θ = ΔE · T_e`.
pub fn mz_sequence(psi_in: &StateVector, params: &SequenceParams) -> Result<StateVector> {
    Interferometer::new(*params)?.output(psi_in, params.theta())
}

/// `∂_θ |ψ_out⟩` at `θ = ΔE · T_e` (unnormalized).
pub fn dpsi_dtheta(psi_in: &StateVector, params: &SequenceParams) -> Result<Vec<C64>> {
    let ifm = Interferometer::new(*params)?;
    let split = ifm.after_first_bs(psi_in)?;
    Ok(ifm.derivative_from_split(&split, params.theta()))
}

/// Non-interacting Mach-Zehnder map `e^{−iθĴy} |ψ_in⟩`.
///
/// Uses `e^{−iθĴy} = e^{−iπ/2 Ĵz} e^{−iθĴx} e^{iπ/2 Ĵz}` with the cached
/// Ĵx eigendecomposition.
pub fn ideal_mz(psi_in: &StateVector, theta: f64) -> Result<StateVector> {
    let n = psi_in.n_atoms();
    // −Ω Ĵx with Ω = −1 is Ĵx itself
    let jx = hamiltonian_eigen(n, -1.0, 0.0, 0.0)?;
    let quarter = |sign: f64| -> Vec<C64> {
        (0..=n)
            .map(|i| C64::from_polar(1.0, sign * FRAC_PI_2 * spin::mu_of_index(n, i)))
            .collect()
    };
    let pre: Vec<C64> = psi_in
        .amplitudes()
        .iter()
        .zip(quarter(1.0))
        .map(|(a, p)| a * p)
        .collect();
    let rotated = jx.apply_exp(theta, &pre);
    let out = rotated
        .iter()
        .zip(quarter(-1.0))
        .map(|(a, p)| a * p)
        .collect();
    Ok(StateVector::from_unitary_image(n, out))
}
