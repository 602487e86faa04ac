//! Input states: binomial (coherent spin state along +x), twin Fock and
//! number-squeezed ground states, plus the number-squeezing factor ξ_N.

use crate::linalg::TridiagonalEigen;
use crate::spin::{self, check_atom_number, collective_operators, StateVector};
use crate::{Error, Result, C64};

/// `ξ_N = ΔJz / (√N / 2)`.
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd)]
pub struct SqueezingFactor(pub f64);

impl SqueezingFactor {
    pub fn value(self) -> f64 {
        self.0
    }
}

/// All atoms in the symmetric superposition of the two modes:
/// `c_i = √(C(N, i) / 2^N)`.
pub fn binomial_state(n_atoms: usize) -> Result<StateVector> {
    spin::coherent_state(n_atoms, std::f64::consts::FRAC_PI_2, 0.0)
}

/// `N/2` atoms in each well.
pub fn twin_fock(n_atoms: usize) -> Result<StateVector> {
    check_atom_number(n_atoms)?;
    let mut amps = vec![C64::new(0.0, 0.0); n_atoms + 1];
    amps[n_atoms / 2] = C64::new(1.0, 0.0);
    StateVector::new(n_atoms, amps)
}

pub fn number_squeezing(psi: &StateVector) -> SqueezingFactor {
    let jz_var: f64 = psi
        .amplitudes()
        .iter()
        .enumerate()
        .map(|(i, a)| a.norm_sqr() * spin::mu_of_index(psi.n_atoms(), i).powi(2))
        .sum::<f64>()
        - mean_jz(psi).powi(2);
    SqueezingFactor(jz_var.max(0.0).sqrt() / ((psi.n_atoms() as f64).sqrt() / 2.0))
}

fn mean_jz(psi: &StateVector) -> f64 {
    psi.amplitudes()
        .iter()
        .enumerate()
        .map(|(i, a)| a.norm_sqr() * spin::mu_of_index(psi.n_atoms(), i))
        .sum()
}

/// Ground state of `−λ Ĵx + Ĵz²`, with real nonnegative amplitudes.
pub fn ground_state(n_atoms: usize, lambda: f64) -> Result<StateVector> {
    if !(lambda >= 0.0 && lambda.is_finite()) {
        return Err(Error::InvalidParameter(format!(
            "lambda must be finite and >= 0, got {lambda}"
        )));
    }
    let ops = collective_operators(n_atoms)?;
    let diag = ops.jz2.diag().to_vec();
    let off: Vec<f64> = ops.jx.upper().iter().map(|u| -lambda * u.re).collect();
    let eig = TridiagonalEigen::new(&diag, &off)?;
    let v = eig.eigenvector(eig.ground_index());
    // Perron-Frobenius: the exact ground vector has one sign.
    let amps = v.iter().map(|x| C64::new(x.abs(), 0.0)).collect();
    StateVector::normalized(n_atoms, amps)
}

/// Initial bisection ceiling on λ, in units of N.
const LAMBDA_CEILING_PER_ATOM: f64 = 1e4;
const MAX_BISECTION_ITERATIONS: usize = 200;
/// Postcondition on the returned ξ_N.
pub const SQUEEZING_TOL: f64 = 1e-3;

/// Number-squeezed stationary state with `ξ_N ≈ xi_target`, found by
/// bisection on λ in the ground state of `−λ Ĵx + Ĵz²`.
pub fn squeezed_ground_state(n_atoms: usize, xi_target: f64) -> Result<StateVector> {
    check_atom_number(n_atoms)?;
    if !(xi_target > 0.0 && xi_target < 1.0) {
        return Err(Error::InvalidParameter(format!(
            "xi_target must lie in (0, 1), got {xi_target}"
        )));
    }
    let xi_at = |lambda: f64| -> Result<(f64, StateVector)> {
        let psi = ground_state(n_atoms, lambda)?;
        Ok((number_squeezing(&psi).0, psi))
    };

    let mut lo = 0.0;
    let mut hi = LAMBDA_CEILING_PER_ATOM * n_atoms as f64;
    let mut iterations = 0;
    let (mut xi_hi, mut best) = xi_at(hi)?;
    while xi_hi < xi_target {
        iterations += 1;
        if iterations > MAX_BISECTION_ITERATIONS || !hi.is_finite() {
            return Err(Error::BisectionFailed {
                target: xi_target,
                iterations,
                lo,
                hi,
            });
        }
        lo = hi;
        hi *= 10.0;
        (xi_hi, best) = xi_at(hi)?;
    }
    let mut best_err = (xi_hi - xi_target).abs();

    while iterations < MAX_BISECTION_ITERATIONS {
        iterations += 1;
        // geometric midpoint once the bracket is away from zero
        let mid = if lo > 0.0 && hi / lo > 4.0 {
            (lo * hi).sqrt()
        } else if lo == 0.0 && hi > 1.0 {
            hi / 8.0
        } else {
            0.5 * (lo + hi)
        };
        let (xi, psi) = xi_at(mid)?;
        let err = (xi - xi_target).abs();
        if err < best_err {
            best_err = err;
            best = psi;
        }
        if err < 1e-9 {
            break;
        }
        if xi < xi_target {
            lo = mid;
        } else {
            hi = mid;
        }
        if hi - lo <= 1e-15 * hi {
            break;
        }
    }
    if best_err > SQUEEZING_TOL {
        return Err(Error::BisectionFailed {
            target: xi_target,
            iterations,
            lo,
            hi,
        });
    }
    Ok(best)
}

/// State for a requested input squeezing: binomial at `ξ ≥ 1`, twin Fock
/// below `0.02`, the squeezed ground state in between.
pub fn input_state_for_xi(n_atoms: usize, xi: f64) -> Result<StateVector> {
    if !(xi.is_finite() && xi >= 0.0) {
        return Err(Error::InvalidParameter(format!(
            "xi must be >= 0, got {xi}"
        )));
    }
    if xi >= 1.0 {
        binomial_state(n_atoms)
    } else if xi < TWIN_FOCK_XI_THRESHOLD {
        twin_fock(n_atoms)
    } else {
        squeezed_ground_state(n_atoms, xi)
    }
}

pub const TWIN_FOCK_XI_THRESHOLD: f64 = 0.02;
