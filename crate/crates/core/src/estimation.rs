//! Monte-Carlo simulation of Bayesian phase estimation from atom-number
//! readouts.
//!
//! Each trial draws `m` outcomes from `P(n|θ_true)`, forms the posterior
//! over a uniform θ grid (flat prior, log space) and reduces it to a point
//! estimate. Trials run in parallel; trial `k` draws from ChaCha stream `k`
//! of the master seed, so results do not depend on scheduling.

use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dynamics::{Interferometer, SequenceParams};
use crate::metrology::DetectionErrorKernel;
use crate::spin::{OutcomeDistribution, StateVector};
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum Estimator {
    #[default]
    PosteriorMean,
    /// Grid point of maximal posterior.
    Map,
    /// Maximal likelihood, refined below grid resolution by a parabola
    /// through the three best grid points.
    MaxLikelihood,
}

impl std::str::FromStr for Estimator {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "posterior_mean" | "mean" => Ok(Self::PosteriorMean),
            "map" => Ok(Self::Map),
            "max_likelihood" | "ml" | "mle" => Ok(Self::MaxLikelihood),
            other => Err(Error::InvalidParameter(format!(
                "unknown estimator {other:?}"
            ))),
        }
    }
}

pub const MIN_GRID_POINTS: usize = 201;
/// Largest tolerated fraction of discarded trials.
pub const MAX_DISCARD_FRACTION: f64 = 0.05;

/// Configuration of one Monte-Carlo estimation experiment.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EstimationRun {
    pub theta_true: f64,
    /// Measurements per trial.
    pub m: usize,
    pub n_trials: usize,
    pub theta_lo: f64,
    pub theta_hi: f64,
    pub n_grid: usize,
    pub seed: u64,
    pub estimator: Estimator,
}

impl EstimationRun {
    /// Defaults: window (−π/4, π/4), 1001 grid points, 500 trials,
    /// posterior mean.
    pub fn new(theta_true: f64, m: usize, seed: u64) -> Self {
        Self {
            theta_true,
            m,
            n_trials: 500,
            theta_lo: -std::f64::consts::FRAC_PI_4,
            theta_hi: std::f64::consts::FRAC_PI_4,
            n_grid: 1001,
            seed,
            estimator: Estimator::PosteriorMean,
        }
    }

    /// Local prior: one Heisenberg fringe period `θ_true ± π/N`, 1001 points,
    /// 500 trials, posterior mean.
    pub fn local(theta_true: f64, m: usize, n_atoms: usize, seed: u64) -> Self {
        Self::with_window(theta_true, m, seed, PriorWindow::Local, n_atoms)
    }

    pub fn with_window(
        theta_true: f64,
        m: usize,
        seed: u64,
        window: PriorWindow,
        n_atoms: usize,
    ) -> Self {
        let (theta_lo, theta_hi) = window.bounds(theta_true, n_atoms);
        Self {
            theta_lo,
            theta_hi,
            ..Self::new(theta_true, m, seed)
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.theta_lo < self.theta_true && self.theta_true < self.theta_hi) {
            return Err(Error::InvalidParameter(format!(
                "theta_true {} must lie strictly inside ({}, {})",
                self.theta_true, self.theta_lo, self.theta_hi
            )));
        }
        if self.n_grid < MIN_GRID_POINTS {
            return Err(Error::InvalidParameter(format!(
                "grid needs at least {MIN_GRID_POINTS} points, got {}",
                self.n_grid
            )));
        }
        if self.m == 0 || self.n_trials == 0 {
            return Err(Error::InvalidParameter(
                "m and n_trials must be positive".into(),
            ));
        }
        Ok(())
    }

    pub fn grid(&self) -> Vec<f64> {
        uniform_grid(self.theta_lo, self.theta_hi, self.n_grid)
    }
}

/// Support of the flat prior.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum PriorWindow {
    /// `θ_true ± π/N`.
    #[default]
    Local,
    /// `θ_true ± half_width`.
    HalfWidth(f64),
    /// Fixed `(lo, hi)`, e.g. `(−π/4, π/4)`.
    Global(f64, f64),
}

impl PriorWindow {
    pub fn bounds(self, theta_true: f64, n_atoms: usize) -> (f64, f64) {
        match self {
            PriorWindow::Local => {
                let w = std::f64::consts::PI / n_atoms as f64;
                (theta_true - w, theta_true + w)
            }
            PriorWindow::HalfWidth(w) => (theta_true - w, theta_true + w),
            PriorWindow::Global(lo, hi) => (lo, hi),
        }
    }
}

pub fn uniform_grid(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    match n {
        0 => Vec::new(),
        1 => vec![0.5 * (lo + hi)],
        _ => (0..n)
            .map(|k| lo + (hi - lo) * k as f64 / (n - 1) as f64)
            .collect(),
    }
}

/// `P(n|θ_g)` for every grid phase, plus its logarithm.
#[derive(Debug, Clone)]
pub struct LikelihoodTable {
    n_atoms: usize,
    theta_grid: Vec<f64>,
    rows: Vec<Vec<f64>>,
    log_rows: Vec<Vec<f64>>,
}

impl LikelihoodTable {
    pub fn from_rows(n_atoms: usize, theta_grid: Vec<f64>, rows: Vec<Vec<f64>>) -> Result<Self> {
        if rows.len() != theta_grid.len() {
            return Err(Error::DimensionMismatch {
                expected: theta_grid.len(),
                got: rows.len(),
            });
        }
        if let Some(bad) = rows.iter().find(|r| r.len() != n_atoms + 1) {
            return Err(Error::DimensionMismatch {
                expected: n_atoms + 1,
                got: bad.len(),
            });
        }
        let log_rows = rows
            .iter()
            .map(|r| r.iter().map(|p| p.ln()).collect())
            .collect();
        Ok(Self {
            n_atoms,
            theta_grid,
            rows,
            log_rows,
        })
    }

    pub fn n_atoms(&self) -> usize {
        self.n_atoms
    }

    pub fn theta_grid(&self) -> &[f64] {
        &self.theta_grid
    }

    pub fn rows(&self) -> &[Vec<f64>] {
        &self.rows
    }

    fn index_of(&self, outcome: i64) -> Option<usize> {
        let i = outcome + self.n_atoms as i64;
        (i >= 0 && i % 2 == 0 && i / 2 <= self.n_atoms as i64).then_some((i / 2) as usize)
    }
}

/// Outcome distribution at `theta`, with the kernel applied when given.
pub fn readout_distribution(
    ifm: &Interferometer,
    split: &StateVector,
    theta: f64,
    kernel: Option<&DetectionErrorKernel>,
) -> Vec<f64> {
    let out = ifm.output_from_split(split, theta);
    let probs: Vec<f64> = out.amplitudes().iter().map(|a| a.norm_sqr()).collect();
    match kernel {
        Some(k) => k.apply(&probs),
        None => probs,
    }
}

pub fn likelihood_table(
    psi_in: &StateVector,
    params: &SequenceParams,
    theta_grid: &[f64],
    kernel: Option<&DetectionErrorKernel>,
) -> Result<LikelihoodTable> {
    let ifm = Interferometer::new(*params)?;
    let split = ifm.after_first_bs(psi_in)?;
    let rows: Vec<Vec<f64>> = theta_grid
        .par_iter()
        .map(|&theta| readout_distribution(&ifm, &split, theta, kernel))
        .collect();
    LikelihoodTable::from_rows(params.n_atoms, theta_grid.to_vec(), rows)
}

fn cumulative(probs: &[f64]) -> Vec<f64> {
    let mut acc = 0.0;
    probs
        .iter()
        .map(|p| {
            acc += p;
            acc
        })
        .collect()
}

fn draw(cdf: &[f64], rng: &mut impl Rng) -> usize {
    let total = *cdf.last().expect("non-empty distribution");
    let u = rng.random::<f64>() * total;
    // first index with cdf > u; skip trailing zero-probability outcomes
    let i = cdf.partition_point(|&c| c <= u);
    i.min(cdf.len() - 1)
}

fn sample_indices(cdf: &[f64], m: usize, rng: &mut impl Rng) -> Vec<usize> {
    (0..m).map(|_| draw(cdf, rng)).collect()
}

/// `m` independent outcomes `n = 2μ` by inverse-CDF sampling.
pub fn sample_outcomes(dist: &OutcomeDistribution, m: usize, seed: u64) -> Vec<i64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let cdf = cumulative(dist.probs());
    let n = dist.n_atoms() as i64;
    sample_indices(&cdf, m, &mut rng)
        .into_iter()
        .map(|i| 2 * i as i64 - n)
        .collect()
}

/// Normalized posterior over the table grid for a flat prior.
pub fn posterior(outcomes: &[i64], table: &LikelihoodTable) -> Result<Vec<f64>> {
    let log_like = log_likelihood(outcomes, table)?;
    normalize_log(&log_like)
}

fn log_likelihood(outcomes: &[i64], table: &LikelihoodTable) -> Result<Vec<f64>> {
    let mut counts = vec![0usize; table.n_atoms + 1];
    for &n in outcomes {
        let i = table.index_of(n).ok_or_else(|| {
            Error::InvalidParameter(format!("outcome {n} impossible for N = {}", table.n_atoms))
        })?;
        counts[i] += 1;
    }
    Ok(log_likelihood_counts(&counts, table))
}

fn log_likelihood_counts(counts: &[usize], table: &LikelihoodTable) -> Vec<f64> {
    let seen: Vec<(usize, f64)> = counts
        .iter()
        .enumerate()
        .filter(|(_, &c)| c > 0)
        .map(|(i, &c)| (i, c as f64))
        .collect();
    table
        .log_rows
        .iter()
        .map(|row| seen.iter().map(|&(i, c)| c * row[i]).sum())
        .collect()
}

fn normalize_log(log_like: &[f64]) -> Result<Vec<f64>> {
    let max = log_like.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    if !max.is_finite() {
        return Err(Error::ImpossibleOutcomes);
    }
    let w: Vec<f64> = log_like.iter().map(|l| (l - max).exp()).collect();
    let total: f64 = w.iter().sum();
    Ok(w.into_iter().map(|x| x / total).collect())
}

fn argmax(v: &[f64]) -> usize {
    let mut best = 0;
    for (k, &x) in v.iter().enumerate() {
        if x > v[best] {
            best = k;
        }
    }
    best
}

fn estimate_from_log(log_like: &[f64], grid: &[f64], estimator: Estimator) -> Result<f64> {
    let post = normalize_log(log_like)?;
    Ok(match estimator {
        Estimator::PosteriorMean => post.iter().zip(grid).map(|(w, t)| w * t).sum(),
        Estimator::Map => grid[argmax(&post)],
        Estimator::MaxLikelihood => {
            let k = argmax(log_like);
            if k == 0 || k + 1 == grid.len() {
                return Ok(grid[k]);
            }
            let (a, b, c) = (log_like[k - 1], log_like[k], log_like[k + 1]);
            let curv = a - 2.0 * b + c;
            if !(a.is_finite() && c.is_finite()) || curv >= 0.0 {
                return Ok(grid[k]);
            }
            let shift = 0.5 * (a - c) / curv;
            grid[k] + shift * (grid[k + 1] - grid[k])
        }
    })
}

/// Point estimate of θ from observed outcomes `n = 2μ`.
pub fn bayesian_estimate(
    outcomes: &[i64],
    table: &LikelihoodTable,
    estimator: Estimator,
) -> Result<f64> {
    if table.theta_grid.is_empty() {
        return Err(Error::InvalidParameter("empty theta grid".into()));
    }
    estimate_from_log(
        &log_likelihood(outcomes, table)?,
        &table.theta_grid,
        estimator,
    )
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EstimationOutcome {
    /// RMS deviation of the estimates from θ_true.
    pub rms_error: f64,
    pub mean_bias: f64,
    /// Standard error of `rms_error` from the trial spread.
    pub rms_std_error: f64,
    /// `√m · rms_error`.
    pub sqrt_m_dtheta: f64,
    pub trials_used: usize,
    pub trials_discarded: usize,
    /// Per-trial estimates in trial order (`None` for discarded trials).
    pub estimates: Vec<Option<f64>>,
}

/// Runs `run.n_trials` independent estimation trials.
pub fn monte_carlo_sensitivity(
    run: &EstimationRun,
    psi_in: &StateVector,
    params: &SequenceParams,
    kernel: Option<&DetectionErrorKernel>,
) -> Result<EstimationOutcome> {
    run.validate()?;
    let table = likelihood_table(psi_in, params, &run.grid(), kernel)?;
    let ifm = Interferometer::new(*params)?;
    let split = ifm.after_first_bs(psi_in)?;
    let truth = readout_distribution(&ifm, &split, run.theta_true, kernel);
    monte_carlo_with_table(run, &table, &truth)
}

/// Monte-Carlo loop over a prebuilt table and the true readout distribution.
pub fn monte_carlo_with_table(
    run: &EstimationRun,
    table: &LikelihoodTable,
    truth: &[f64],
) -> Result<EstimationOutcome> {
    run.validate()?;
    if truth.len() != table.n_atoms + 1 {
        return Err(Error::DimensionMismatch {
            expected: table.n_atoms + 1,
            got: truth.len(),
        });
    }
    let cdf = cumulative(truth);
    let estimates: Vec<Option<f64>> = (0..run.n_trials as u64)
        .into_par_iter()
        .map(|trial| {
            let mut rng = ChaCha8Rng::seed_from_u64(run.seed);
            rng.set_stream(trial);
            let mut counts = vec![0usize; truth.len()];
            for i in sample_indices(&cdf, run.m, &mut rng) {
                counts[i] += 1;
            }
            let log_like = log_likelihood_counts(&counts, table);
            estimate_from_log(&log_like, &table.theta_grid, run.estimator).ok()
        })
        .collect();

    let errors: Vec<f64> = estimates
        .iter()
        .flatten()
        .map(|e| e - run.theta_true)
        .collect();
    let discarded = run.n_trials - errors.len();
    if discarded as f64 > MAX_DISCARD_FRACTION * run.n_trials as f64 || errors.is_empty() {
        return Err(Error::TooManyDiscarded {
            discarded,
            trials: run.n_trials,
        });
    }
    let used = errors.len() as f64;
    let mean_sq = errors.iter().map(|e| e * e).sum::<f64>() / used;
    let rms = mean_sq.sqrt();
    let bias = errors.iter().sum::<f64>() / used;
    // delta method: se(√x̄) = sd(e²) / (2 √x̄ √T)
    let sd_sq = (errors
        .iter()
        .map(|e| (e * e - mean_sq).powi(2))
        .sum::<f64>()
        / used)
        .sqrt();
    let rms_std_error = if rms > 0.0 {
        sd_sq / (2.0 * rms * used.sqrt())
    } else {
        0.0
    };
    Ok(EstimationOutcome {
        rms_error: rms,
        mean_bias: bias,
        rms_std_error,
        sqrt_m_dtheta: (run.m as f64).sqrt() * rms,
        trials_used: errors.len(),
        trials_discarded: discarded,
        estimates,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::metrology::{cfi, detection_kernel, probability_jet};
    use crate::spin::outcome_distribution;
    use crate::states::{binomial_state, twin_fock};

    fn mz(n: usize, u0n: f64, tb: f64, te: f64) -> SequenceParams {
        SequenceParams::mach_zehnder(n, u0n, tb, te).unwrap()
    }

    #[test]
    fn single_point_table() {
        let n = 10;
        let table =
            likelihood_table(&twin_fock(n).unwrap(), &mz(n, 0.0, 1.0, 1.0), &[0.0], None).unwrap();
        assert_eq!(table.rows().len(), 1);
        let row = &table.rows()[0];
        assert!((row[5] - 1.0).abs() < 1e-12);
        for i in 0..=n {
            assert!((row[i] - row[n - i]).abs() < 1e-14);
        }
        let est = bayesian_estimate(&[0, 0, 0], &table, Estimator::PosteriorMean).unwrap();
        assert_eq!(est, 0.0);
    }

    #[test]
    fn rows_are_distributions() {
        let n = 30;
        let grid = uniform_grid(-0.5, 0.5, 51);
        let k = detection_kernel(2.0, n).unwrap();
        for kernel in [None, Some(&k)] {
            let t = likelihood_table(&twin_fock(n).unwrap(), &mz(n, 1.0, 1.0, 2.0), &grid, kernel)
                .unwrap();
            for r in t.rows() {
                assert!(r.iter().all(|&p| p >= 0.0));
                assert!((r.iter().sum::<f64>() - 1.0).abs() < 1e-9);
            }
        }
    }

    #[test]
    fn rows_vary_smoothly() {
        let n = 40;
        let psi = twin_fock(n).unwrap();
        let p = mz(n, 1.0, 1.0, 5.0);
        let grid = uniform_grid(-0.3, 0.3, 301);
        let table = likelihood_table(&psi, &p, &grid, None).unwrap();
        // Lipschitz constant of θ ↦ P(·|θ) in total variation, measured from
        // the analytic derivative on the grid
        let ifm = Interferometer::new(p).unwrap();
        let split = ifm.after_first_bs(&psi).unwrap();
        let c = grid
            .iter()
            .map(|&t| {
                0.5 * probability_jet(&ifm, &split, t, None)
                    .derivs
                    .iter()
                    .map(|d| d.abs())
                    .sum::<f64>()
            })
            .fold(0.0, f64::max);
        let step = grid[1] - grid[0];
        for w in table.rows().windows(2) {
            let tv: f64 = 0.5
                * w[0]
                    .iter()
                    .zip(&w[1])
                    .map(|(a, b)| (a - b).abs())
                    .sum::<f64>();
            assert!(tv < 1.1 * c * step, "tv {tv} vs {}", c * step);
        }
    }

    #[test]
    fn sampling_delta_and_determinism() {
        let mut probs = vec![0.0; 11];
        probs[7] = 1.0;
        let dist = OutcomeDistribution::new(10, probs).unwrap();
        assert!(sample_outcomes(&dist, 50, 3).iter().all(|&n| n == 4));
        let d = outcome_distribution(&binomial_state(10).unwrap());
        assert_eq!(sample_outcomes(&d, 100, 42), sample_outcomes(&d, 100, 42));
        assert_ne!(sample_outcomes(&d, 100, 42), sample_outcomes(&d, 100, 43));
    }

    #[test]
    fn sampling_frequencies_within_multinomial_bounds() {
        let n = 12;
        let d = outcome_distribution(&binomial_state(n).unwrap());
        let draws = 100_000;
        let samples = sample_outcomes(&d, draws, 2024);
        let mut counts = vec![0usize; n + 1];
        for s in samples {
            counts[((s + n as i64) / 2) as usize] += 1;
        }
        for (c, p) in counts.iter().zip(d.probs()) {
            let expect = p * draws as f64;
            let sd = (draws as f64 * p * (1.0 - p)).sqrt();
            assert!(
                (*c as f64 - expect).abs() <= 4.0 * sd + 1.0,
                "{c} vs {expect}"
            );
        }
    }

    #[test]
    fn posterior_normalized_and_order_invariant() {
        let n = 20;
        let table = likelihood_table(
            &twin_fock(n).unwrap(),
            &mz(n, 1.0, 1.0, 1.0),
            &uniform_grid(-0.7, 0.7, 301),
            None,
        )
        .unwrap();
        let outs = [0, 2, -2, 4, 0, 0, -6];
        let post = posterior(&outs, &table).unwrap();
        assert!((post.iter().sum::<f64>() - 1.0).abs() < 1e-9);
        let mut rev = outs;
        rev.reverse();
        assert_eq!(post, posterior(&rev, &table).unwrap());
    }

    #[test]
    fn impossible_outcomes_are_flagged() {
        let table =
            LikelihoodTable::from_rows(2, vec![-0.1, 0.1], vec![vec![0.5, 0.0, 0.5]; 2]).unwrap();
        assert!(matches!(
            bayesian_estimate(&[2, 0], &table, Estimator::Map),
            Err(Error::ImpossibleOutcomes)
        ));
        assert!(bayesian_estimate(&[2, -2], &table, Estimator::Map).is_ok());
        assert!(bayesian_estimate(&[1], &table, Estimator::Map).is_err());
        assert!(bayesian_estimate(&[4], &table, Estimator::Map).is_err());
    }

    #[test]
    fn estimators_agree_on_peaked_posterior() {
        let n = 50;
        let psi = binomial_state(n).unwrap();
        let p = mz(n, 0.0, 1.0, 1.0);
        let table = likelihood_table(&psi, &p, &uniform_grid(-0.785, 0.785, 1001), None).unwrap();
        let truth = readout_distribution(
            &Interferometer::new(p).unwrap(),
            &Interferometer::new(p)
                .unwrap()
                .after_first_bs(&psi)
                .unwrap(),
            0.1,
            None,
        );
        let dist = OutcomeDistribution::new(n, truth).unwrap();
        let outs = sample_outcomes(&dist, 400, 9);
        let a = bayesian_estimate(&outs, &table, Estimator::PosteriorMean).unwrap();
        let b = bayesian_estimate(&outs, &table, Estimator::Map).unwrap();
        let c = bayesian_estimate(&outs, &table, Estimator::MaxLikelihood).unwrap();
        let step = 1.57 / 1000.0;
        assert!((a - b).abs() < 3.0 * step && (b - c).abs() <= step);
    }

    #[test]
    fn consistent_for_many_measurements() {
        // shot noise: Δθ ≈ 1/√(N m); 95% of trials within 3 standard errors
        let n = 20;
        let m = 400;
        let psi = binomial_state(n).unwrap();
        let p = mz(n, 0.0, 1.0, 1.0);
        let mut run = EstimationRun::new(0.05, m, 11);
        run.n_trials = 200;
        let out = monte_carlo_sensitivity(&run, &psi, &p, None).unwrap();
        let tol = 3.0 / ((n * m) as f64).sqrt();
        let inside = out
            .estimates
            .iter()
            .flatten()
            .filter(|e| (*e - 0.05).abs() < tol)
            .count();
        assert!(inside as f64 >= 0.95 * out.trials_used as f64);
        assert!((out.sqrt_m_dtheta * (n as f64).sqrt() - 1.0).abs() < 0.15);
    }

    #[test]
    fn symmetric_setup_is_unbiased() {
        let n = 20;
        let mut run = EstimationRun::new(0.0, 20, 5);
        run.n_trials = 400;
        let out =
            monte_carlo_sensitivity(&run, &twin_fock(n).unwrap(), &mz(n, 0.0, 1.0, 1.0), None)
                .unwrap();
        let se = out.rms_error / (out.trials_used as f64).sqrt();
        assert!(
            out.mean_bias.abs() < 4.0 * se + 1e-12,
            "bias {}",
            out.mean_bias
        );
    }

    #[test]
    fn bit_identical_reruns() {
        let n = 20;
        let mut run = EstimationRun::new(0.02, 10, 77);
        run.n_trials = 64;
        let psi = twin_fock(n).unwrap();
        let p = mz(n, 1.0, 1.0, 1.0);
        let a = monte_carlo_sensitivity(&run, &psi, &p, None).unwrap();
        let b = monte_carlo_sensitivity(&run, &psi, &p, None).unwrap();
        assert_eq!(a, b);
        let serial: Vec<Option<f64>> = rayon::ThreadPoolBuilder::new()
            .num_threads(1)
            .build()
            .unwrap()
            .install(|| {
                monte_carlo_sensitivity(&run, &psi, &p, None)
                    .unwrap()
                    .estimates
            });
        assert_eq!(serial, a.estimates);
    }

    #[test]
    fn run_validation() {
        let mut run = EstimationRun::new(0.0, 20, 1);
        run.n_grid = 101;
        assert!(run.validate().is_err());
        let run = EstimationRun::new(1.0, 20, 1);
        assert!(run.validate().is_err());
        let mut run = EstimationRun::new(0.0, 0, 1);
        run.m = 0;
        assert!(run.validate().is_err());
    }

    #[test]
    fn global_window_suffers_phase_ambiguity() {
        let n = 100;
        let psi = twin_fock(n).unwrap();
        let p = mz(n, 1.0, 1.0, 1.0);
        let bound = cfi(&psi, &p, 0.01, None).unwrap().sqrt_m_dtheta;
        let global =
            monte_carlo_sensitivity(&EstimationRun::new(0.01, 20, 1), &psi, &p, None).unwrap();
        let local =
            monte_carlo_sensitivity(&EstimationRun::local(0.01, 20, n, 1), &psi, &p, None).unwrap();
        assert!(global.sqrt_m_dtheta > 3.0 * bound);
        assert!(local.sqrt_m_dtheta < 1.25 * bound);
    }

    #[test]
    fn kernel_bound_respected() {
        // with counting noise the Monte-Carlo error cannot beat the noisy CFI
        let n = 40;
        let k = detection_kernel(2.0, n).unwrap();
        let psi = binomial_state(n).unwrap();
        let p = mz(n, 1.0, 1.0, 1.0);
        let mut run = EstimationRun::new(0.01, 50, 3);
        run.n_trials = 400;
        let mc = monte_carlo_sensitivity(&run, &psi, &p, Some(&k)).unwrap();
        let bound = cfi(&psi, &p, 0.01, Some(&k)).unwrap().sqrt_m_dtheta;
        assert!(
            mc.sqrt_m_dtheta >= 0.85 * bound,
            "{} vs {bound}",
            mc.sqrt_m_dtheta
        );
    }
}
