//! Fisher information of the interferometer: the quantum bound from the
//! number fluctuations after the first beam splitter, and the classical
//! Fisher information of the atom-number-difference readout, optionally
//! degraded by a detection-error kernel.

use serde::{Deserialize, Serialize};

use crate::dynamics::{Interferometer, SequenceParams};
use crate::spin::{self, OutcomeDistribution, StateVector};
use crate::states::number_squeezing;
use crate::{Error, Result, C64};

/// Outcomes with smaller probability are dropped from the Fisher sum.
pub const PROB_FLOOR: f64 = 1e-14;
/// A dropped outcome must have a derivative below this (√PROB_FLOOR).
pub const DERIV_FLOOR: f64 = 1e-7;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Method {
    Crlb,
    Cfi,
    Bayesian,
}

impl Method {
    pub fn as_str(self) -> &'static str {
        match self {
            Method::Crlb => "crlb",
            Method::Cfi => "cfi",
            Method::Bayesian => "bayesian",
        }
    }
}

impl std::str::FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "crlb" | "qfi" => Ok(Method::Crlb),
            "cfi" => Ok(Method::Cfi),
            "bayesian" | "bayes" => Ok(Method::Bayesian),
            other => Err(Error::InvalidParameter(format!("unknown method {other:?}"))),
        }
    }
}

/// One phase-sensitivity value `√m·Δθ` with its provenance.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SensitivityResult {
    /// `√m·Δθ`; `+∞` when the configuration carries no phase information.
    pub sqrt_m_dtheta: f64,
    /// Fisher information the value was derived from (`F_Q` or `F`); for
    /// Bayesian runs, the equivalent `1 / (√m·Δθ)²`.
    pub fisher: f64,
    pub method: Method,
    pub params: SequenceParams,
    pub xi_in: f64,
    pub theta: f64,
    pub detection_sigma: f64,
}

impl SensitivityResult {
    pub fn is_informative(&self) -> bool {
        self.sqrt_m_dtheta.is_finite()
    }
}

fn sensitivity_from_fisher(f: f64) -> f64 {
    if f > 0.0 {
        1.0 / f.sqrt()
    } else {
        f64::INFINITY
    }
}

/// Cramér-Rao bound from `F_Q = 4 ΔJz²` after the first beam splitter.
pub fn qfi_crlb(psi_in: &StateVector, params: &SequenceParams) -> Result<SensitivityResult> {
    let ifm = Interferometer::new(*params)?;
    let split = ifm.after_first_bs(psi_in)?;
    let dj = number_squeezing(&split).0 * (params.n_atoms as f64).sqrt() / 2.0;
    let fq = 4.0 * dj * dj;
    Ok(SensitivityResult {
        sqrt_m_dtheta: sensitivity_from_fisher(fq),
        fisher: fq,
        method: Method::Crlb,
        params: *params,
        xi_in: number_squeezing(psi_in).0,
        theta: params.theta(),
        detection_sigma: 0.0,
    })
}

/// Shape of the single-outcome counting-error distribution.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum KernelShape {
    /// Shifted symmetric binomial with `M = 4σ²` trials (rounded to even).
    #[default]
    Binomial,
    /// Sampled Gaussian truncated at ±5σ.
    DiscreteGaussian,
}

/// Row-stochastic counting-error map `P_error(n | k)` in basis-index units
/// (one unit = one atom miscounted between the wells).
#[derive(Debug, Clone, PartialEq)]
pub struct DetectionErrorKernel {
    sigma: f64,
    shape: KernelShape,
    /// Row `k`: first nonzero column and the weights from there on.
    rows: Vec<(usize, Vec<f64>)>,
}

impl DetectionErrorKernel {
    pub fn sigma(&self) -> f64 {
        self.sigma
    }

    pub fn shape(&self) -> KernelShape {
        self.shape
    }

    pub fn dim(&self) -> usize {
        self.rows.len()
    }

    pub fn is_identity(&self) -> bool {
        self.rows
            .iter()
            .enumerate()
            .all(|(k, (start, w))| *start == k && w.len() == 1)
    }

    /// Dense row `k`.
    pub fn row(&self, k: usize) -> Vec<f64> {
        let mut out = vec![0.0; self.dim()];
        let (start, w) = &self.rows[k];
        out[*start..*start + w.len()].copy_from_slice(w);
        out
    }

    /// `P̃(n) = Σ_k P_error(n|k) P(k)`; also used for `∂_θ P`.
    pub fn apply(&self, p: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; p.len()];
        for ((start, w), &pk) in self.rows.iter().zip(p) {
            if pk == 0.0 {
                continue;
            }
            for (o, x) in out[*start..*start + w.len()].iter_mut().zip(w) {
                *o += x * pk;
            }
        }
        out
    }

    pub fn apply_distribution(&self, dist: &OutcomeDistribution) -> OutcomeDistribution {
        OutcomeDistribution::from_raw(dist.n_atoms(), self.apply(dist.probs()))
    }
}

pub fn detection_kernel(sigma: f64, n_atoms: usize) -> Result<DetectionErrorKernel> {
    detection_kernel_with_shape(sigma, n_atoms, KernelShape::Binomial)
}

pub fn detection_kernel_with_shape(
    sigma: f64,
    n_atoms: usize,
    shape: KernelShape,
) -> Result<DetectionErrorKernel> {
    spin::check_atom_number(n_atoms)?;
    if !(sigma >= 0.0 && sigma.is_finite()) {
        return Err(Error::InvalidParameter(format!(
            "detection sigma must be finite and >= 0, got {sigma}"
        )));
    }
    let dim = n_atoms + 1;
    let profile: Vec<(i64, f64)> = if sigma == 0.0 {
        vec![(0, 1.0)]
    } else {
        match shape {
            KernelShape::Binomial => binomial_profile(sigma),
            KernelShape::DiscreteGaussian => gaussian_profile(sigma),
        }
    };
    let rows = (0..dim)
        .map(|k| {
            let mut start = None;
            let mut w = Vec::new();
            for &(offset, p) in &profile {
                let col = k as i64 + offset;
                if col < 0 || col >= dim as i64 {
                    continue;
                }
                start.get_or_insert(col as usize);
                w.push(p);
            }
            let total: f64 = w.iter().sum();
            for x in &mut w {
                *x /= total;
            }
            (start.expect("kernel row keeps its centre"), w)
        })
        .collect();
    Ok(DetectionErrorKernel { sigma, shape, rows })
}

/// Centred binomial(M, 1/2) over offsets `−M/2..=M/2`, variance `M/4 ≈ σ²`.
fn binomial_profile(sigma: f64) -> Vec<(i64, f64)> {
    let m = (2.0 * (2.0 * sigma * sigma).round()).max(2.0) as usize;
    let lnf = spin::ln_factorials(m);
    let half = (m / 2) as i64;
    (0..=m)
        .map(|j| {
            let p = (lnf[m] - lnf[j] - lnf[m - j] - m as f64 * std::f64::consts::LN_2).exp();
            (j as i64 - half, p)
        })
        .collect()
}

fn gaussian_profile(sigma: f64) -> Vec<(i64, f64)> {
    let reach = (5.0 * sigma).ceil() as i64;
    (-reach..=reach)
        .map(|d| (d, (-(d as f64).powi(2) / (2.0 * sigma * sigma)).exp()))
        .collect()
}

/// Outcome probabilities and their θ-derivatives at one phase.
#[derive(Debug, Clone)]
pub struct ProbabilityJet {
    pub probs: Vec<f64>,
    pub derivs: Vec<f64>,
}

/// `P(n|θ)` and `∂_θ P(n|θ) = 2 Re(ψ_n* ∂_θψ_n)`, convolved with the kernel
/// when given.
pub fn probability_jet(
    ifm: &Interferometer,
    split: &StateVector,
    theta: f64,
    kernel: Option<&DetectionErrorKernel>,
) -> ProbabilityJet {
    let out = ifm.output_from_split(split, theta);
    let d = ifm.derivative_from_split(split, theta);
    let probs: Vec<f64> = out.amplitudes().iter().map(|a| a.norm_sqr()).collect();
    let derivs: Vec<f64> = out
        .amplitudes()
        .iter()
        .zip(&d)
        .map(|(a, b): (&C64, &C64)| 2.0 * (a.conj() * b).re)
        .collect();
    match kernel {
        Some(k) if !k.is_identity() => ProbabilityJet {
            probs: k.apply(&probs),
            derivs: k.apply(&derivs),
        },
        _ => ProbabilityJet { probs, derivs },
    }
}

/// `Σ_n (∂_θP)² / P` over outcomes with `P > PROB_FLOOR`.
pub fn fisher_sum(jet: &ProbabilityJet) -> Result<f64> {
    let mut f = 0.0;
    for (index, (&p, &d)) in jet.probs.iter().zip(&jet.derivs).enumerate() {
        if p > PROB_FLOOR {
            f += d * d / p;
        } else if d.abs() >= DERIV_FLOOR {
            return Err(Error::SingularOutcome {
                index,
                prob: p,
                deriv: d,
            });
        }
    }
    Ok(f)
}

/// Reusable classical-Fisher evaluator for one input state and sequence;
/// θ varies per call.
#[derive(Debug, Clone)]
pub struct FisherEvaluator {
    ifm: Interferometer,
    split: StateVector,
    xi_in: f64,
}

impl FisherEvaluator {
    pub fn new(psi_in: &StateVector, params: &SequenceParams) -> Result<Self> {
        let ifm = Interferometer::new(*params)?;
        let split = ifm.after_first_bs(psi_in)?;
        Ok(Self {
            ifm,
            split,
            xi_in: number_squeezing(psi_in).0,
        })
    }

    pub fn quantum_fisher(&self) -> f64 {
        let dj = number_squeezing(&self.split).0 * (self.ifm.params().n_atoms as f64).sqrt() / 2.0;
        4.0 * dj * dj
    }

    pub fn classical_fisher(
        &self,
        theta: f64,
        kernel: Option<&DetectionErrorKernel>,
    ) -> Result<f64> {
        fisher_sum(&probability_jet(&self.ifm, &self.split, theta, kernel))
    }

    pub fn cfi(
        &self,
        theta: f64,
        kernel: Option<&DetectionErrorKernel>,
    ) -> Result<SensitivityResult> {
        let f = self.classical_fisher(theta, kernel)?;
        let params = self.ifm.params().with_theta(theta)?;
        Ok(SensitivityResult {
            sqrt_m_dtheta: sensitivity_from_fisher(f),
            fisher: f,
            method: Method::Cfi,
            params,
            xi_in: self.xi_in,
            theta,
            detection_sigma: kernel.map_or(0.0, |k| k.sigma()),
        })
    }
}

/// Classical Fisher information of the atom-number-difference readout.
pub fn cfi(
    psi_in: &StateVector,
    params: &SequenceParams,
    theta: f64,
    kernel: Option<&DetectionErrorKernel>,
) -> Result<SensitivityResult> {
    FisherEvaluator::new(psi_in, params)?.cfi(theta, kernel)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FisherRatio {
    pub classical: f64,
    pub quantum: f64,
    /// `classical / quantum`; 0 when both vanish.
    pub ratio: f64,
}

/// How much of the quantum Fisher information the number readout captures.
pub fn fisher_ratio_check(
    psi_in: &StateVector,
    params: &SequenceParams,
    theta: f64,
) -> Result<FisherRatio> {
    let eval = FisherEvaluator::new(psi_in, params)?;
    let classical = eval.classical_fisher(theta, None)?;
    let quantum = eval.quantum_fisher();
    let ratio = if quantum > 0.0 {
        classical / quantum
    } else {
        0.0
    };
    Ok(FisherRatio {
        classical,
        quantum,
        ratio,
    })
}
