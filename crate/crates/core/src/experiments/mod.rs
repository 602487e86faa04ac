//! Parameter scans over the interferometer: sensitivity versus N with
//! power-law fits, T_e optimisation, input-squeezing transitions and
//! probability maps P(n|θ), with resumable CSV/JSON output.

mod fit;
mod persist;

pub use fit::{fit_prefactor, PrefactorFit};
pub use persist::{
    fmt_f64, maybe_inf, parse_f64, render_csv, render_json, run_scan, Keyed, OutputFormat,
    PointError, Row, ScanReport, Sink,
};

use std::collections::HashMap;
use std::sync::{Arc, Mutex};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dynamics::{Interferometer, SequenceParams};
use crate::estimation::{monte_carlo_sensitivity, EstimationRun, Estimator, PriorWindow};
use crate::metrology::{
    detection_kernel, qfi_crlb, DetectionErrorKernel, FisherEvaluator, Method, SensitivityResult,
};
use crate::spin::{self, StateVector};
use crate::states::{input_state_for_xi, number_squeezing};
use crate::{Error, Result};

/// Default N axis of the scaling scans.
pub const DEFAULT_N_RANGE: [usize; 4] = [50, 100, 200, 400];
pub const DEFAULT_THETA: f64 = 0.01;
/// Peaks of P(n|θ) below this are not counted.
pub const PEAK_THRESHOLD: f64 = 1e-4;

/// T_e grid `{1, 2, …, max}`.
pub fn te_grid(max: usize) -> Vec<f64> {
    (1..=max).map(|t| t as f64).collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BayesSettings {
    /// Measurements per trial.
    pub m: usize,
    pub n_trials: usize,
    pub n_grid: usize,
    pub window: PriorWindow,
    pub estimator: Estimator,
}

impl Default for BayesSettings {
    fn default() -> Self {
        Self {
            m: 20,
            n_trials: 500,
            n_grid: 1001,
            window: PriorWindow::Local,
            estimator: Estimator::PosteriorMean,
        }
    }
}

/// Cartesian product of scan axes. `u0n` is held fixed so that
/// `U0 = u0n / N` at every point; the beam splitter always has `Ω·T_t = π/2`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScanSpec {
    pub n_atoms: Vec<usize>,
    pub u0n: f64,
    pub t_bs: Vec<f64>,
    pub t_phase: Vec<f64>,
    /// Requested input squeezing; `≥ 1` binomial, `< 0.02` twin Fock.
    pub xi: Vec<f64>,
    pub sigma: Vec<f64>,
    pub theta: Vec<f64>,
    pub methods: Vec<Method>,
    pub seed: u64,
    pub bayes: BayesSettings,
}

impl Default for ScanSpec {
    fn default() -> Self {
        Self {
            n_atoms: DEFAULT_N_RANGE.to_vec(),
            u0n: 1.0,
            t_bs: vec![2.0],
            t_phase: vec![1.0],
            xi: vec![0.0],
            sigma: vec![0.0],
            theta: vec![DEFAULT_THETA],
            methods: vec![Method::Cfi],
            seed: 0,
            bayes: BayesSettings::default(),
        }
    }
}

fn invalid(msg: String) -> Error {
    Error::InvalidParameter(msg)
}

fn check_axis(name: &str, values: &[f64], ok: impl Fn(f64) -> bool, what: &str) -> Result<()> {
    if values.is_empty() {
        return Err(invalid(format!("{name} axis is empty")));
    }
    match values.iter().find(|&&v| !(v.is_finite() && ok(v))) {
        Some(v) => Err(invalid(format!("{name} = {v}: must be {what}"))),
        None => Ok(()),
    }
}

impl ScanSpec {
    pub fn validate(&self) -> Result<()> {
        if self.n_atoms.is_empty() {
            return Err(invalid("N axis is empty".into()));
        }
        for &n in &self.n_atoms {
            spin::check_atom_number(n)?;
        }
        if self.n_atoms.windows(2).any(|w| w[0] >= w[1]) {
            return Err(invalid("N values must be strictly ascending".into()));
        }
        if !self.u0n.is_finite() {
            return Err(invalid(format!("u0n = {} is not finite", self.u0n)));
        }
        check_axis("t_bs", &self.t_bs, |v| v > 0.0, "> 0")?;
        check_axis("t_phase", &self.t_phase, |v| v >= 0.0, ">= 0")?;
        check_axis("xi", &self.xi, |v| v >= 0.0, ">= 0")?;
        check_axis("sigma", &self.sigma, |v| v >= 0.0, ">= 0")?;
        check_axis("theta", &self.theta, |_| true, "finite")?;
        if self.methods.is_empty() {
            return Err(invalid("method list is empty".into()));
        }
        if self.methods.contains(&Method::Bayesian) {
            let b = &self.bayes;
            if b.m == 0 || b.n_trials == 0 {
                return Err(invalid("Bayesian m and trials must be positive".into()));
            }
        }
        Ok(())
    }

    /// Points in output order: N outermost, then T_t, T_e, ξ, σ, θ, method.
    pub fn points(&self) -> Vec<ScanPoint> {
        let mut out = Vec::new();
        for &n_atoms in &self.n_atoms {
            for &t_bs in &self.t_bs {
                for &t_phase in &self.t_phase {
                    for &xi in &self.xi {
                        for &sigma in &self.sigma {
                            for &theta in &self.theta {
                                for &method in &self.methods {
                                    out.push(ScanPoint {
                                        n_atoms,
                                        u0n: self.u0n,
                                        t_bs,
                                        t_phase,
                                        theta,
                                        xi,
                                        sigma,
                                        method,
                                        seed: self.seed,
                                    });
                                }
                            }
                        }
                    }
                }
            }
        }
        out
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScanPoint {
    pub n_atoms: usize,
    pub u0n: f64,
    pub t_bs: f64,
    pub t_phase: f64,
    pub theta: f64,
    pub xi: f64,
    pub sigma: f64,
    pub method: Method,
    pub seed: u64,
}

impl ScanPoint {
    pub fn params(&self) -> Result<SequenceParams> {
        SequenceParams::mach_zehnder(self.n_atoms, self.u0n, self.t_bs, self.t_phase)?
            .with_theta(self.theta)
    }
}

impl Keyed for ScanPoint {
    fn key(&self) -> String {
        [
            self.n_atoms.to_string(),
            fmt_f64(self.u0n),
            fmt_f64(self.t_bs),
            fmt_f64(self.t_phase),
            fmt_f64(self.theta),
            fmt_f64(self.xi),
            fmt_f64(self.sigma),
            self.method.as_str().to_string(),
            self.seed.to_string(),
        ]
        .join(",")
    }
}

/// Input states shared across scan points, keyed by `(N, ξ)`.
#[derive(Debug, Default)]
pub struct StateCache {
    states: Mutex<HashMap<(usize, u64), Arc<StateVector>>>,
}

impl StateCache {
    pub fn get(&self, n_atoms: usize, xi: f64) -> Result<Arc<StateVector>> {
        let key = (n_atoms, xi.to_bits());
        if let Some(psi) = self.states.lock().unwrap().get(&key) {
            return Ok(psi.clone());
        }
        // built outside the lock; a concurrent duplicate is harmless
        let psi = Arc::new(input_state_for_xi(n_atoms, xi)?);
        Ok(self
            .states
            .lock()
            .unwrap()
            .entry(key)
            .or_insert(psi)
            .clone())
    }
}

fn kernel_for(sigma: f64, n_atoms: usize) -> Result<Option<DetectionErrorKernel>> {
    if sigma > 0.0 {
        detection_kernel(sigma, n_atoms).map(Some)
    } else {
        Ok(None)
    }
}

/// Sensitivity at one scan point. The CRLB ignores σ.
pub fn evaluate_point(
    point: &ScanPoint,
    states: &StateCache,
    bayes: &BayesSettings,
) -> Result<SensitivityResult> {
    let psi = states.get(point.n_atoms, point.xi)?;
    let params = point.params()?;
    let kernel = kernel_for(point.sigma, point.n_atoms)?;
    let mut result = match point.method {
        Method::Crlb => qfi_crlb(&psi, &params)?,
        Method::Cfi => FisherEvaluator::new(&psi, &params)?.cfi(point.theta, kernel.as_ref())?,
        Method::Bayesian => {
            let mut run = EstimationRun::with_window(
                point.theta,
                bayes.m,
                point.seed,
                bayes.window,
                point.n_atoms,
            );
            run.n_trials = bayes.n_trials;
            run.n_grid = bayes.n_grid;
            run.estimator = bayes.estimator;
            let mc = monte_carlo_sensitivity(&run, &psi, &params, kernel.as_ref())?;
            let s = mc.sqrt_m_dtheta;
            SensitivityResult {
                sqrt_m_dtheta: s,
                fisher: if s > 0.0 {
                    1.0 / (s * s)
                } else {
                    f64::INFINITY
                },
                method: Method::Bayesian,
                params,
                xi_in: point.xi,
                theta: point.theta,
                detection_sigma: point.sigma,
            }
        }
    };
    result.xi_in = point.xi;
    result.theta = point.theta;
    result.detection_sigma = point.sigma;
    Ok(result)
}

/// One row of the scaling CSV.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScanRow {
    #[serde(rename = "N")]
    pub n_atoms: usize,
    pub u0n: f64,
    pub t_bs: f64,
    pub t_phase: f64,
    pub theta: f64,
    pub xi_in: f64,
    pub sigma: f64,
    pub method: Method,
    #[serde(with = "maybe_inf")]
    pub sqrt_m_dtheta: f64,
    #[serde(with = "maybe_inf")]
    pub fisher_value: f64,
    pub seed: u64,
}

impl ScanRow {
    pub fn new(point: &ScanPoint, result: &SensitivityResult) -> Self {
        Self {
            n_atoms: point.n_atoms,
            u0n: point.u0n,
            t_bs: point.t_bs,
            t_phase: point.t_phase,
            theta: point.theta,
            xi_in: point.xi,
            sigma: point.sigma,
            method: point.method,
            sqrt_m_dtheta: result.sqrt_m_dtheta,
            fisher_value: result.fisher,
            seed: point.seed,
        }
    }

    pub fn point(&self) -> ScanPoint {
        ScanPoint {
            n_atoms: self.n_atoms,
            u0n: self.u0n,
            t_bs: self.t_bs,
            t_phase: self.t_phase,
            theta: self.theta,
            xi: self.xi_in,
            sigma: self.sigma,
            method: self.method,
            seed: self.seed,
        }
    }

    /// `Δθ` for a single measurement, i.e. `√m·Δθ`.
    pub fn dtheta(&self) -> f64 {
        self.sqrt_m_dtheta
    }
}

impl Keyed for ScanRow {
    fn key(&self) -> String {
        self.point().key()
    }
}

const SCAN_HEADER: [&str; 11] = [
    "N",
    "u0n",
    "t_bs",
    "t_phase",
    "theta",
    "xi_in",
    "sigma",
    "method",
    "sqrt_m_dtheta",
    "fisher_value",
    "seed",
];

impl Row for ScanRow {
    fn header() -> Vec<&'static str> {
        SCAN_HEADER.to_vec()
    }

    fn fields(&self) -> Vec<String> {
        vec![
            self.n_atoms.to_string(),
            fmt_f64(self.u0n),
            fmt_f64(self.t_bs),
            fmt_f64(self.t_phase),
            fmt_f64(self.theta),
            fmt_f64(self.xi_in),
            fmt_f64(self.sigma),
            self.method.as_str().to_string(),
            fmt_f64(self.sqrt_m_dtheta),
            fmt_f64(self.fisher_value),
            self.seed.to_string(),
        ]
    }

    fn from_fields(f: &[&str]) -> Option<Self> {
        if f.len() != SCAN_HEADER.len() {
            return None;
        }
        Some(Self {
            n_atoms: f[0].parse().ok()?,
            u0n: parse_f64(f[1])?,
            t_bs: parse_f64(f[2])?,
            t_phase: parse_f64(f[3])?,
            theta: parse_f64(f[4])?,
            xi_in: parse_f64(f[5])?,
            sigma: parse_f64(f[6])?,
            method: f[7].parse().ok()?,
            sqrt_m_dtheta: parse_f64(f[8])?,
            fisher_value: parse_f64(f[9])?,
            seed: f[10].parse().ok()?,
        })
    }
}

/// One row per scan point, written incrementally to `sink` when given.
pub fn scan_scaling(spec: &ScanSpec, sink: Option<&Sink>) -> Result<ScanReport<ScanRow>> {
    spec.validate()?;
    let states = StateCache::default();
    run_scan(
        &spec.points(),
        |p| evaluate_point(p, &states, &spec.bayes).map(|r| ScanRow::new(p, &r)),
        sink,
    )
}

/// `(N, √m·Δθ)` pairs for [`fit_prefactor`]; rejects repeated N.
pub fn scaling_series(rows: &[ScanRow]) -> Result<Vec<(usize, f64)>> {
    let mut out: Vec<(usize, f64)> = rows.iter().map(|r| (r.n_atoms, r.sqrt_m_dtheta)).collect();
    out.sort_by_key(|p| p.0);
    if out.windows(2).any(|w| w[0].0 == w[1].0) {
        return Err(Error::DegenerateFit(
            "several rows share one N; filter the scan to one curve first".into(),
        ));
    }
    Ok(out)
}

/// Row with the smallest `√m·Δθ` for every N (first one on ties).
pub fn best_per_n(rows: &[ScanRow]) -> Vec<ScanRow> {
    let mut best: Vec<ScanRow> = Vec::new();
    for r in rows {
        match best.iter_mut().find(|b| b.n_atoms == r.n_atoms) {
            Some(b) if r.sqrt_m_dtheta < b.sqrt_m_dtheta => *b = *r,
            Some(_) => {}
            None => best.push(*r),
        }
    }
    best.sort_by_key(|r| r.n_atoms);
    best
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TeEntry {
    pub t_phase: f64,
    #[serde(with = "maybe_inf")]
    pub sqrt_m_dtheta: f64,
    pub fisher: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TeOptimum {
    pub best: TeEntry,
    pub worst: TeEntry,
    pub table: Vec<TeEntry>,
}

impl TeOptimum {
    /// Worst over best `√m·Δθ`.
    pub fn spread(&self) -> f64 {
        self.worst.sqrt_m_dtheta / self.best.sqrt_m_dtheta
    }
}

/// Extremes of a T_e table; the first entry wins ties.
pub fn te_extremes(table: Vec<TeEntry>) -> Result<TeOptimum> {
    let first = *table
        .first()
        .ok_or_else(|| invalid("T_e list is empty".into()))?;
    let (mut best, mut worst) = (first, first);
    for e in &table {
        if e.sqrt_m_dtheta < best.sqrt_m_dtheta {
            best = *e;
        }
        if e.sqrt_m_dtheta > worst.sqrt_m_dtheta {
            worst = *e;
        }
    }
    Ok(TeOptimum { best, worst, table })
}

/// CFI sensitivity at fixed θ for each phase-accumulation time (ΔE
/// adjusted so that `ΔE·T_e = θ`).
pub fn scan_te_optimum(
    psi_in: &StateVector,
    params: &SequenceParams,
    t_phases: &[f64],
    theta: f64,
    kernel: Option<&DetectionErrorKernel>,
) -> Result<TeOptimum> {
    check_axis("t_phase", t_phases, |v| v > 0.0, "> 0")?;
    let table = t_phases
        .par_iter()
        .map(|&te| {
            let p = SequenceParams {
                t_phase: te,
                ..*params
            }
            .with_theta(theta)?;
            let r = FisherEvaluator::new(psi_in, &p)?.cfi(theta, kernel)?;
            Ok(TeEntry {
                t_phase: te,
                sqrt_m_dtheta: r.sqrt_m_dtheta,
                fisher: r.fisher,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    te_extremes(table)
}

/// Axes of an input-squeezing scan at fixed N.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct XiScanSpec {
    pub n_atoms: usize,
    pub u0n: f64,
    pub t_bs: f64,
    pub t_phase: Vec<f64>,
    pub xi: Vec<f64>,
    pub methods: Vec<Method>,
    pub theta: f64,
    pub sigma: f64,
    pub seed: u64,
    pub bayes: BayesSettings,
}

impl XiScanSpec {
    /// ξ grid `{0.01, 0.05, 0.1, 0.15, …, 0.3, 0.4, …, 1}`.
    pub fn default_xi_grid() -> Vec<f64> {
        let mut g = vec![0.01, 0.05, 0.1, 0.15, 0.2, 0.25, 0.3];
        g.extend((4..=10).map(|k| k as f64 / 10.0));
        g
    }

    pub fn scan_spec(&self) -> ScanSpec {
        ScanSpec {
            n_atoms: vec![self.n_atoms],
            u0n: self.u0n,
            t_bs: vec![self.t_bs],
            t_phase: self.t_phase.clone(),
            xi: self.xi.clone(),
            sigma: vec![self.sigma],
            theta: vec![self.theta],
            methods: self.methods.clone(),
            seed: self.seed,
            bayes: self.bayes,
        }
    }
}

/// [`ScanRow`] plus `ξ_N` after the first beam splitter.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct XiRow {
    #[serde(flatten)]
    pub row: ScanRow,
    pub xi_after_bs: f64,
}

impl Keyed for XiRow {
    fn key(&self) -> String {
        self.row.key()
    }
}

impl Row for XiRow {
    fn header() -> Vec<&'static str> {
        let mut h = ScanRow::header();
        h.push("xi_after_bs");
        h
    }

    fn fields(&self) -> Vec<String> {
        let mut f = self.row.fields();
        f.push(fmt_f64(self.xi_after_bs));
        f
    }

    fn from_fields(f: &[&str]) -> Option<Self> {
        let (last, head) = f.split_last()?;
        Some(Self {
            row: ScanRow::from_fields(head)?,
            xi_after_bs: parse_f64(last)?,
        })
    }
}

pub fn scan_xi_transition(spec: &XiScanSpec, sink: Option<&Sink>) -> Result<ScanReport<XiRow>> {
    check_axis("xi", &spec.xi, |v| (0.0..=1.0).contains(&v), "in [0, 1]")?;
    let scan = spec.scan_spec();
    scan.validate()?;
    let states = StateCache::default();
    run_scan(
        &scan.points(),
        |p| {
            let r = evaluate_point(p, &states, &scan.bayes)?;
            let ifm = Interferometer::new(p.params()?)?;
            let split = ifm.after_first_bs(&*states.get(p.n_atoms, p.xi)?)?;
            Ok(XiRow {
                row: ScanRow::new(p, &r),
                xi_after_bs: number_squeezing(&split).0,
            })
        },
        sink,
    )
}

/// Husimi Q on a (polar × azimuth) grid, `q[polar][azimuth]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HusimiGrid {
    pub polar: Vec<f64>,
    pub azimuth: Vec<f64>,
    pub q: Vec<Vec<f64>>,
}

pub fn husimi_grid(psi: &StateVector, n_polar: usize, n_azimuth: usize) -> Result<HusimiGrid> {
    if n_polar < 2 || n_azimuth < 1 {
        return Err(invalid(format!(
            "Husimi grid needs >= 2 polar and >= 1 azimuthal points, got {n_polar}x{n_azimuth}"
        )));
    }
    let grid = spin::sphere_grid(n_polar, n_azimuth);
    let values = spin::husimi_q(psi, &grid)?;
    Ok(HusimiGrid {
        polar: grid.iter().step_by(n_azimuth).map(|g| g.0).collect(),
        azimuth: grid[..n_azimuth].iter().map(|g| g.1).collect(),
        q: values.chunks(n_azimuth).map(<[f64]>::to_vec).collect(),
    })
}

/// Husimi functions along the sequence for one θ.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HusimiPanels {
    pub theta: f64,
    pub input: HusimiGrid,
    pub after_bs: HusimiGrid,
    pub output: HusimiGrid,
}

pub fn husimi_panels(
    psi_in: &StateVector,
    params: &SequenceParams,
    theta: f64,
    n_polar: usize,
    n_azimuth: usize,
) -> Result<HusimiPanels> {
    let ifm = Interferometer::new(*params)?;
    let split = ifm.after_first_bs(psi_in)?;
    let out = ifm.output_from_split(&split, theta);
    Ok(HusimiPanels {
        theta,
        input: husimi_grid(psi_in, n_polar, n_azimuth)?,
        after_bs: husimi_grid(&split, n_polar, n_azimuth)?,
        output: husimi_grid(&out, n_polar, n_azimuth)?,
    })
}

/// `p[j][k] = P(n_axis[k] | theta_axis[j])`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProbabilityMap {
    pub n_atoms: usize,
    pub u0n: f64,
    pub t_bs: f64,
    pub t_phase: f64,
    pub xi_in: f64,
    pub sigma: f64,
    pub theta_axis: Vec<f64>,
    pub n_axis: Vec<i64>,
    pub p: Vec<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub husimi: Option<Vec<HusimiPanels>>,
}

impl ProbabilityMap {
    /// Local maxima above [`PEAK_THRESHOLD`] per θ.
    pub fn peak_counts(&self) -> Vec<usize> {
        self.p
            .iter()
            .map(|col| count_local_maxima(col, PEAK_THRESHOLD))
            .collect()
    }
}

/// Readout distributions over a θ axis. `ΔE` follows θ at fixed T_e, so a
/// zero T_e only admits θ = 0.
pub fn probability_map(
    psi_in: &StateVector,
    params: &SequenceParams,
    thetas: &[f64],
    kernel: Option<&DetectionErrorKernel>,
) -> Result<ProbabilityMap> {
    check_axis("theta", thetas, |_| true, "finite")?;
    for &t in thetas {
        params.with_theta(t)?;
    }
    let ifm = Interferometer::new(*params)?;
    let split = ifm.after_first_bs(psi_in)?;
    let p = thetas
        .par_iter()
        .map(|&t| crate::estimation::readout_distribution(&ifm, &split, t, kernel))
        .collect();
    let n = params.n_atoms;
    Ok(ProbabilityMap {
        n_atoms: n,
        u0n: params.u0n(),
        t_bs: params.t_bs,
        t_phase: params.t_phase,
        xi_in: number_squeezing(psi_in).0,
        sigma: kernel.map_or(0.0, |k| k.sigma()),
        theta_axis: thetas.to_vec(),
        n_axis: (0..=n).map(|i| spin::outcome_of_index(n, i)).collect(),
        p,
        husimi: None,
    })
}

/// Counts indices `k` with `p[k] > threshold`, `p[k] > p[k−1]` and
/// `p[k] ≥ p[k+1]` (edges compare one side only), so a plateau counts once.
pub fn count_local_maxima(p: &[f64], threshold: f64) -> usize {
    (0..p.len())
        .filter(|&k| {
            p[k] > threshold
                && (k == 0 || p[k] > p[k - 1])
                && (k + 1 == p.len() || p[k] >= p[k + 1])
        })
        .count()
}

/// Evenly spaced values including both ends.
pub fn linspace(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    match n {
        0 => vec![],
        1 => vec![lo],
        _ => (0..n)
            .map(|k| lo + (hi - lo) * k as f64 / (n - 1) as f64)
            .collect(),
    }
}
