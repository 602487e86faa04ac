//! Acceptance suite. Runs every criterion in sequence and prints one
//! PASS/FAIL line each; exits non-zero if any fails.
//!
//! `cargo test --test acceptance -- --include-ignored` (or MZBEC_HEAVY=1)
//! also runs the heavy N = 2048 detection-noise check; use `--release`.

use std::f64::consts::PI;
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;
use std::process::Command;
use std::time::{Duration, Instant};

use num_complex::Complex64 as C64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use mzbec::dynamics::{mz_sequence, Interferometer, Propagator, SequenceParams};
use mzbec::estimation::{monte_carlo_sensitivity, readout_distribution, EstimationRun};
use mzbec::experiments::{
    fit_prefactor, linspace, probability_map, scaling_series, scan_scaling, scan_xi_transition,
    te_grid, BayesSettings, PrefactorFit, ScanSpec, XiRow, XiScanSpec, DEFAULT_N_RANGE,
    PEAK_THRESHOLD,
};
use mzbec::metrology::{cfi, detection_kernel, probability_jet, qfi_crlb, FisherEvaluator, Method};
use mzbec::spin::StateVector;
use mzbec::states::{binomial_state, input_state_for_xi, twin_fock};

type Check = fn() -> Result<String, String>;

struct Criterion {
    id: &'static str,
    name: &'static str,
    budget: Duration,
    check: Check,
    heavy: bool,
}

const fn minutes(m: u64) -> Duration {
    Duration::from_secs(60 * m)
}

const CRITERIA: &[Criterion] = &[
    Criterion {
        id: "1",
        name: "ideal-MZ Heisenberg constant",
        budget: Duration::from_secs(1),
        check: c1_heisenberg_constant,
        heavy: false,
    },
    Criterion {
        id: "2",
        name: "shot-noise calibration",
        budget: Duration::from_secs(10),
        check: c2_shot_noise,
        heavy: false,
    },
    Criterion {
        id: "3",
        name: "Heisenberg scaling with interactions",
        budget: minutes(5),
        check: c3_interacting_scaling,
        heavy: false,
    },
    Criterion {
        id: "4",
        name: "CFI <= QFI random sweep",
        budget: minutes(5),
        check: c4_cfi_below_qfi,
        heavy: false,
    },
    Criterion {
        id: "5",
        name: "Bayesian consistency",
        budget: minutes(10),
        check: c5_bayesian,
        heavy: false,
    },
    Criterion {
        id: "6",
        name: "squeezing transition",
        budget: minutes(10),
        check: c6_squeezing_transition,
        heavy: false,
    },
    Criterion {
        id: "7",
        name: "detection error as prefactor",
        budget: minutes(5),
        check: c7_detection_prefactor,
        heavy: false,
    },
    Criterion {
        id: "7h",
        name: "sigma=5, N=2048 beats shot noise (heavy)",
        budget: minutes(30),
        check: c7_heavy,
        heavy: true,
    },
    Criterion {
        id: "8",
        name: "substructure emergence",
        budget: minutes(1),
        check: c8_substructure,
        heavy: false,
    },
    Criterion {
        id: "9",
        name: "oracle equivalence",
        budget: minutes(1),
        check: c9_oracles,
        heavy: false,
    },
    Criterion {
        id: "10",
        name: "CLI determinism",
        budget: minutes(10),
        check: c10_cli_determinism,
        heavy: false,
    },
];

fn main() {
    let args: Vec<String> = std::env::args().skip(1).collect();
    if args.iter().any(|a| a == "--list") {
        for c in CRITERIA {
            println!("criterion_{}: test", c.id);
        }
        return;
    }
    let heavy = args
        .iter()
        .any(|a| a == "--ignored" || a == "--include-ignored")
        || std::env::var_os("MZBEC_HEAVY").is_some();
    let only_heavy = args.iter().any(|a| a == "--ignored");
    let filters: Vec<&String> = args.iter().filter(|a| !a.starts_with('-')).collect();

    let mut failed = 0;
    let mut ran = 0;
    for c in CRITERIA {
        let label = format!("criterion_{}", c.id);
        if !filters.is_empty() && !filters.iter().any(|f| label.contains(f.as_str())) {
            continue;
        }
        if only_heavy && !c.heavy {
            continue;
        }
        if c.heavy && !heavy {
            println!(
                "criterion {:>2} {:<42} SKIP (heavy; pass --include-ignored)",
                c.id, c.name
            );
            continue;
        }
        ran += 1;
        let start = Instant::now();
        let result = catch_unwind(AssertUnwindSafe(c.check))
            .unwrap_or_else(|p| Err(format!("panicked: {}", panic_text(&p))));
        let elapsed = start.elapsed();
        let (ok, detail) = match result {
            Ok(d) if elapsed <= c.budget => (true, d),
            Ok(d) => (false, format!("{d}; over time budget {:?}", c.budget)),
            Err(d) => (false, d),
        };
        if !ok {
            failed += 1;
        }
        println!(
            "criterion {:>2} {:<42} {} [{:.2?}] {}",
            c.id,
            c.name,
            if ok { "PASS" } else { "FAIL" },
            elapsed,
            detail
        );
    }
    println!(
        "acceptance: {} run, {} passed, {} failed",
        ran,
        ran - failed,
        failed
    );
    if failed > 0 {
        std::process::exit(1);
    }
}

fn panic_text(p: &Box<dyn std::any::Any + Send>) -> String {
    p.downcast_ref::<String>()
        .cloned()
        .or_else(|| p.downcast_ref::<&str>().map(|s| s.to_string()))
        .unwrap_or_else(|| "unknown panic".into())
}

fn ensure(cond: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

fn e2s<E: std::fmt::Display>(e: E) -> String {
    e.to_string()
}

fn mz(n: usize, u0n: f64, t_bs: f64, t_phase: f64) -> SequenceParams {
    SequenceParams::mach_zehnder(n, u0n, t_bs, t_phase).unwrap()
}

fn c1_heisenberg_constant() -> Result<String, String> {
    let n = 100usize;
    let r = qfi_crlb(&twin_fock(n).map_err(e2s)?, &mz(n, 0.0, 1.0, 1.0)).map_err(e2s)?;
    let got = r.sqrt_m_dtheta * n as f64;
    let nf = n as f64;
    let want = nf / (nf * (nf + 2.0) / 2.0).sqrt();
    ensure((got - want).abs() <= 1e-6, || {
        format!("N·√mΔθ = {got:.9}, want {want:.9}")
    })?;
    ensure(format!("{got:.4}") == "1.4003", || {
        format!("{got} does not round to 1.4003")
    })?;
    Ok(format!("N·√mΔθ = {got:.8} (closed form {want:.8})"))
}

fn c2_shot_noise() -> Result<String, String> {
    let spec = ScanSpec {
        n_atoms: (1..=8).map(|k| 50 * k).collect(),
        u0n: 0.0,
        t_bs: vec![1.0],
        t_phase: vec![1.0],
        xi: vec![1.0],
        methods: vec![Method::Crlb, Method::Cfi],
        ..ScanSpec::default()
    };
    let rep = scan_scaling(&spec, None).map_err(e2s)?;
    ensure(rep.errors.is_empty() && rep.rows.len() == 16, || {
        format!("{:?}", rep.errors)
    })?;
    let worst = rep
        .rows
        .iter()
        .map(|r| (r.sqrt_m_dtheta * (r.n_atoms as f64).sqrt() - 1.0).abs())
        .fold(0.0, f64::max);
    ensure(worst <= 1e-9, || format!("max |√mΔθ·√N − 1| = {worst:e}"))?;
    Ok(format!(
        "N = 50..400, CRLB and CFI: max |√mΔθ·√N − 1| = {worst:.1e}"
    ))
}

/// Fock input, U0N = 1, T_t = 2, T_e = 1, CFI over the default N range.
fn interacting_fit(theta: f64, sigma: f64) -> Result<(PrefactorFit, Vec<f64>), String> {
    let spec = ScanSpec {
        n_atoms: DEFAULT_N_RANGE.to_vec(),
        u0n: 1.0,
        t_bs: vec![2.0],
        t_phase: vec![1.0],
        xi: vec![0.0],
        sigma: vec![sigma],
        theta: vec![theta],
        methods: vec![Method::Cfi],
        ..ScanSpec::default()
    };
    let rep = scan_scaling(&spec, None).map_err(e2s)?;
    ensure(rep.errors.is_empty(), || format!("{:?}", rep.errors))?;
    let series = scaling_series(&rep.rows).map_err(e2s)?;
    let fit = fit_prefactor(&series).map_err(e2s)?;
    Ok((fit, series.iter().map(|p| p.1).collect()))
}

fn c3_interacting_scaling() -> Result<String, String> {
    let mut parts = Vec::new();
    for theta in [0.01, 0.005, 0.02] {
        let (fit, _) = interacting_fit(theta, 0.0)?;
        ensure((-1.1..=-0.9).contains(&fit.exponent), || {
            format!(
                "θ = {theta}: exponent {:.4} outside [−1.1, −0.9]",
                fit.exponent
            )
        })?;
        parts.push(format!("θ={theta}: {:.3}", fit.exponent));
    }
    Ok(format!("exponents {}", parts.join(", ")))
}

fn c4_cfi_below_qfi() -> Result<String, String> {
    let mut rng = ChaCha8Rng::seed_from_u64(0x5eed);
    let mut worst = f64::NEG_INFINITY;
    let mut with_kernel = 0;
    for k in 0..200 {
        let n = 2 * rng.random_range(1..=50usize);
        let u0n = rng.random_range(-3.0..3.0);
        let t_bs = rng.random_range(0.2..25.0);
        let t_phase = rng.random_range(0.1..40.0);
        let theta = match k % 4 {
            0 => rng.random_range(-0.05..0.05),
            _ => rng.random_range(-PI..PI),
        };
        let xi = match k % 3 {
            0 => 0.0,
            1 => 1.0,
            _ => rng.random_range(0.05..0.95),
        };
        let psi = input_state_for_xi(n, xi).map_err(e2s)?;
        let eval = FisherEvaluator::new(&psi, &mz(n, u0n, t_bs, t_phase)).map_err(e2s)?;
        let kernel = if k % 5 == 0 {
            with_kernel += 1;
            Some(detection_kernel(rng.random_range(0.5..4.0), n).map_err(e2s)?)
        } else {
            None
        };
        let f = eval.classical_fisher(theta, kernel.as_ref()).map_err(e2s)?;
        let q = eval.quantum_fisher();
        let excess = (f - q) / q;
        worst = worst.max(excess);
        ensure(f <= q * (1.0 + 1e-8), || {
            format!("N={n} u0n={u0n} T_t={t_bs} T_e={t_phase} θ={theta} ξ={xi}: F={f} > F_Q={q}")
        })?;
    }
    Ok(format!(
        "200 configurations ({with_kernel} with detection noise), max (F − F_Q)/F_Q = {worst:.2e}"
    ))
}

fn c5_bayesian() -> Result<String, String> {
    let n = 100;
    let psi = twin_fock(n).map_err(e2s)?;
    let theta = 0.01;
    let mut parts = Vec::new();
    for te in [1.0, 10.0] {
        let p = mz(n, 1.0, 1.0, te).with_theta(theta).map_err(e2s)?;
        let bound = cfi(&psi, &p, theta, None).map_err(e2s)?.sqrt_m_dtheta;
        let mut run = EstimationRun::local(theta, 20, n, 2024);
        run.n_trials = 1000;
        let mc = monte_carlo_sensitivity(&run, &psi, &p, None).map_err(e2s)?;
        let ratio = mc.sqrt_m_dtheta / bound;
        ensure((ratio - 1.0).abs() <= 0.25, || {
            format!(
                "T_e = {te}: Monte Carlo {:.5} vs bound {bound:.5} (ratio {ratio:.3})",
                mc.sqrt_m_dtheta
            )
        })?;
        parts.push(format!(
            "T_e={te}: {:.5}/{bound:.5} = {ratio:.3}",
            mc.sqrt_m_dtheta
        ));
    }
    Ok(format!(
        "m=20, 1000 trials, prior θ±π/N: {}",
        parts.join(", ")
    ))
}

/// Index of an interior maximum `b` with some `a < b < c` strictly below it;
/// the global interior maximum is returned.
fn interior_max(v: &[f64]) -> Option<usize> {
    let (b, vb) = v
        .iter()
        .enumerate()
        .skip(1)
        .take(v.len().saturating_sub(2))
        .fold(
            (0, f64::NEG_INFINITY),
            |acc, (i, &x)| if x > acc.1 { (i, x) } else { acc },
        );
    (b > 0 && v[..b].iter().any(|&x| x < vb) && v[b + 1..].iter().any(|&x| x < vb)).then_some(b)
}

fn c6_squeezing_transition() -> Result<String, String> {
    let n = 100;
    let xs = XiScanSpec {
        n_atoms: n,
        u0n: 1.0,
        t_bs: 20.0,
        t_phase: vec![1.0],
        xi: XiScanSpec::default_xi_grid(),
        methods: vec![Method::Crlb, Method::Cfi],
        theta: 0.01,
        sigma: 0.0,
        seed: 0,
        bayes: BayesSettings::default(),
    };
    let rep = scan_xi_transition(&xs, None).map_err(e2s)?;
    ensure(rep.errors.is_empty(), || format!("{:?}", rep.errors))?;
    let curve =
        |m: Method| -> Vec<&XiRow> { rep.rows.iter().filter(|r| r.row.method == m).collect() };
    let (crlb, cfi_rows) = (curve(Method::Crlb), curve(Method::Cfi));
    let xi: Vec<f64> = cfi_rows.iter().map(|r| r.row.xi_in).collect();
    let d: Vec<f64> = cfi_rows.iter().map(|r| r.row.sqrt_m_dtheta).collect();

    let b = interior_max(&d).ok_or("CFI curve has no interior maximum")?;
    ensure((0.1..=0.4).contains(&xi[b]), || {
        format!("CFI maximum at ξ = {}", xi[b])
    })?;
    let global_min = d.iter().cloned().fold(f64::INFINITY, f64::min);
    ensure(d[0] == global_min, || {
        format!("smallest-ξ point {} is not the minimum {global_min}", d[0])
    })?;
    let sqrt_n = (n as f64).sqrt();
    ensure(d[0] * sqrt_n < 1.0, || {
        format!("ξ→0 value {} not below shot noise", d[0] * sqrt_n)
    })?;
    ensure(d[..=b].windows(2).all(|w| w[0] < w[1]), || {
        "CFI curve not monotone between ξ→0 and its maximum".into()
    })?;

    let q: Vec<f64> = crlb.iter().map(|r| r.row.sqrt_m_dtheta).collect();
    let dj: Vec<f64> = crlb.iter().map(|r| -r.xi_after_bs).collect();
    let bq = interior_max(&q).ok_or("CRLB curve has no interior maximum")?;
    let bj = interior_max(&dj).ok_or("ΔJz(T_t) has no interior minimum")?;
    ensure((0.1..=0.4).contains(&xi[bq]) && bq == bj, || {
        format!(
            "CRLB maximum at ξ = {}, ΔJz minimum at ξ = {}",
            xi[bq], xi[bj]
        )
    })?;
    Ok(format!(
        "CFI N·Δθ: {:.2} at ξ=0.01, max {:.2} at ξ={}, {:.2} at ξ=1; CRLB max at ξ={}",
        d[0] * n as f64,
        d[b] * n as f64,
        xi[b],
        d[d.len() - 1] * n as f64,
        xi[bq]
    ))
}

fn c7_detection_prefactor() -> Result<String, String> {
    let (clean, clean_pts) = interacting_fit(0.01, 0.0)?;
    let (noisy, noisy_pts) = interacting_fit(0.01, 2.0)?;
    ensure((-1.15..=-0.85).contains(&noisy.exponent), || {
        format!("σ=2 exponent {:.4} outside [−1.15, −0.85]", noisy.exponent)
    })?;
    ensure(noisy.beta_heisenberg > clean.beta_heisenberg, || {
        format!(
            "β(σ=2) = {} not above β(σ=0) = {}",
            noisy.beta_heisenberg, clean.beta_heisenberg
        )
    })?;
    ensure(noisy_pts.iter().zip(&clean_pts).all(|(a, b)| a > b), || {
        "σ=2 not worse pointwise".into()
    })?;
    Ok(format!(
        "σ=2 exponent {:.3}, β {:.2} vs {:.2} without noise",
        noisy.exponent, noisy.beta_heisenberg, clean.beta_heisenberg
    ))
}

/// σ = 5 at N = 2048 (T_t = 21, U0N = 1, Fock input), T_e optimised over
/// {1, …, 40}.
fn c7_heavy() -> Result<String, String> {
    let n = 2048;
    let psi = twin_fock(n).map_err(e2s)?;
    let kernel = detection_kernel(5.0, n).map_err(e2s)?;
    let mut best = (f64::INFINITY, 0.0);
    for te in te_grid(40) {
        let eval = FisherEvaluator::new(&psi, &mz(n, 1.0, 21.0, te)).map_err(e2s)?;
        let r = eval.cfi(0.01, Some(&kernel)).map_err(e2s)?;
        if r.sqrt_m_dtheta < best.0 {
            best = (r.sqrt_m_dtheta, te);
        }
    }
    let v = best.0 * (n as f64).sqrt();
    ensure(v < 1.0, || {
        format!("best √mΔθ·√N = {v:.3} at T_e = {}", best.1)
    })?;
    Ok(format!("best √mΔθ·√N = {v:.3} at T_e = {}", best.1))
}

fn c8_substructure() -> Result<String, String> {
    let n = 100;
    let p = mz(n, 1.0, 1.0, 1.0);
    let thetas = linspace(-PI / 2.0, PI / 2.0, 181);
    let fock = probability_map(&twin_fock(n).map_err(e2s)?, &p, &thetas, None).map_err(e2s)?;
    let bin = probability_map(&binomial_state(n).map_err(e2s)?, &p, &thetas, None).map_err(e2s)?;
    let fc = fock.peak_counts();
    let bc = bin.peak_counts();
    let fmin = *fc.iter().min().unwrap();
    ensure(fmin >= 3, || {
        format!("Fock input: a column has only {fmin} maxima")
    })?;
    ensure(bc.iter().all(|&c| c == 1), || {
        format!(
            "binomial input: maxima counts {:?}",
            bc.iter().filter(|&&c| c != 1).collect::<Vec<_>>()
        )
    })?;
    Ok(format!(
        "{} θ columns, threshold {PEAK_THRESHOLD:e}: Fock {}..{} maxima, binomial exactly 1",
        thetas.len(),
        fmin,
        fc.iter().max().unwrap()
    ))
}

// ---- independent dense oracle -------------------------------------------

type Mat = Vec<Vec<C64>>;

fn zeros(d: usize) -> Mat {
    vec![vec![C64::new(0.0, 0.0); d]; d]
}

fn matmul(a: &Mat, b: &Mat) -> Mat {
    let d = a.len();
    let mut c = zeros(d);
    for i in 0..d {
        for k in 0..d {
            let aik = a[i][k];
            for j in 0..d {
                c[i][j] += aik * b[k][j];
            }
        }
    }
    c
}

/// `e^{A}` by scaling and squaring with a Taylor series.
fn expm(a: &Mat) -> Mat {
    let d = a.len();
    let norm = a
        .iter()
        .map(|r| r.iter().map(|x| x.norm()).sum::<f64>())
        .fold(0.0, f64::max);
    let s = if norm > 0.5 {
        (norm / 0.5).log2().ceil() as i32
    } else {
        0
    };
    let scale = 0.5f64.powi(s);
    let a: Mat = a
        .iter()
        .map(|r| r.iter().map(|x| x * scale).collect())
        .collect();
    let mut result = zeros(d);
    let mut term = zeros(d);
    for i in 0..d {
        result[i][i] = C64::new(1.0, 0.0);
        term[i][i] = C64::new(1.0, 0.0);
    }
    for k in 1..40 {
        term = matmul(&term, &a);
        for row in term.iter_mut() {
            for x in row.iter_mut() {
                *x /= k as f64;
            }
        }
        for i in 0..d {
            for j in 0..d {
                result[i][j] += term[i][j];
            }
        }
    }
    for _ in 0..s {
        result = matmul(&result, &result);
    }
    result
}

/// `−i t (−Ω Jx − ΔE Jz + U0 Jz²)` built from the Dicke matrix elements.
fn generator(n: usize, omega: f64, u0: f64, delta_e: f64, t: f64) -> Mat {
    let j = n as f64 / 2.0;
    let d = n + 1;
    let mut h = zeros(d);
    for i in 0..d {
        let mu = i as f64 - j;
        h[i][i] = C64::new(-delta_e * mu + u0 * mu * mu, 0.0);
        if i + 1 < d {
            let jx = (j * (j + 1.0) - mu * (mu + 1.0)).sqrt() / 2.0;
            h[i][i + 1] = C64::new(-omega * jx, 0.0);
            h[i + 1][i] = C64::new(-omega * jx, 0.0);
        }
    }
    h.iter()
        .map(|r| r.iter().map(|x| x * C64::new(0.0, -t)).collect())
        .collect()
}

fn max_diff(a: &Mat, b: &Mat) -> f64 {
    a.iter()
        .zip(b)
        .flat_map(|(r, s)| r.iter().zip(s).map(|(x, y)| (x - y).norm()))
        .fold(0.0, f64::max)
}

fn random_state(n: usize, rng: &mut ChaCha8Rng) -> StateVector {
    let v = (0..=n)
        .map(|_| C64::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)))
        .collect();
    StateVector::normalized(n, v).unwrap()
}

fn c9_oracles() -> Result<String, String> {
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let mut worst_u = 0.0f64;
    let mut worst_seq = 0.0f64;
    for n in [2, 4, 6] {
        for _ in 0..8 {
            let omega = rng.random_range(-3.0..3.0);
            let u0 = rng.random_range(-2.0..2.0);
            let de = rng.random_range(-2.0..2.0);
            let t = rng.random_range(0.0..6.0);
            let u = Propagator::new(n, omega, u0, de, t).map_err(e2s)?.unitary();
            worst_u = worst_u.max(max_diff(&u, &expm(&generator(n, omega, u0, de, t))));

            let p = mz(
                n,
                rng.random_range(-2.0..2.0),
                rng.random_range(0.3..5.0),
                rng.random_range(0.0..8.0),
            )
            .with_theta(rng.random_range(-PI..PI))
            .map_err(e2s)?;
            let bs = expm(&generator(n, p.omega, p.u0, 0.0, p.t_bs));
            let ph = expm(&generator(n, 0.0, p.u0, p.delta_e, p.t_phase));
            let total = matmul(&bs, &matmul(&ph, &bs));
            let psi = random_state(n, &mut rng);
            let got = mz_sequence(&psi, &p).map_err(e2s)?;
            for (i, row) in total.iter().enumerate() {
                let want: C64 = row.iter().zip(psi.amplitudes()).map(|(a, b)| a * b).sum();
                worst_seq = worst_seq.max((got.amplitudes()[i] - want).norm());
            }
        }
    }
    ensure(worst_u <= 1e-9 && worst_seq <= 1e-9, || {
        format!("propagator defect {worst_u:e}, sequence defect {worst_seq:e}")
    })?;

    // analytic ∂θP against Richardson-extrapolated central differences
    let mut worst_d = 0.0f64;
    let mut evaluated = 0;
    for (n, u0n, t_bs, te) in [
        (2, 1.0, 1.0, 1.0),
        (6, -0.5, 3.0, 2.0),
        (10, 1.0, 1.0, 10.0),
        (20, 2.0, 20.0, 1.0),
    ] {
        let p = mz(n, u0n, t_bs, te);
        let ifm = Interferometer::new(p).map_err(e2s)?;
        for xi in [0.0, 0.4, 1.0] {
            let split = ifm
                .after_first_bs(&input_state_for_xi(n, xi).map_err(e2s)?)
                .map_err(e2s)?;
            let kernel = detection_kernel(1.5, n).map_err(e2s)?;
            for kern in [None, Some(&kernel)] {
                for theta in [-1.0, 0.0, 0.01, 0.7, 2.5] {
                    let jet = probability_jet(&ifm, &split, theta, kern);
                    let fd = |h: f64| -> Vec<f64> {
                        let a = readout_distribution(&ifm, &split, theta + h, kern);
                        let b = readout_distribution(&ifm, &split, theta - h, kern);
                        a.iter().zip(&b).map(|(x, y)| (x - y) / (2.0 * h)).collect()
                    };
                    let (d1, d2) = (fd(1e-3), fd(5e-4));
                    for (k, &a) in jet.derivs.iter().enumerate() {
                        let rich = (4.0 * d2[k] - d1[k]) / 3.0;
                        worst_d = worst_d.max((a - rich).abs());
                        evaluated += 1;
                    }
                }
            }
        }
    }
    ensure(worst_d <= 1e-6, || format!("max |∂θP − FD| = {worst_d:e}"))?;
    Ok(format!(
        "propagators {worst_u:.1e}, full sequence {worst_seq:.1e} (N=2,4,6); ∂θP vs FD {worst_d:.1e} over {evaluated} entries"
    ))
}

fn run_cli(args: &[&str], dir: &Path, threads: Option<usize>) -> Result<Vec<u8>, String> {
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_mzbec"));
    cmd.args(args).current_dir(dir);
    if let Some(t) = threads {
        cmd.env("RAYON_NUM_THREADS", t.to_string());
    }
    let out = cmd.output().map_err(e2s)?;
    ensure(out.status.success(), || {
        format!(
            "mzbec {args:?} failed: {}",
            String::from_utf8_lossy(&out.stderr)
        )
    })?;
    Ok(out.stdout)
}

fn c10_cli_determinism() -> Result<String, String> {
    let dir = tempfile::tempdir().map_err(e2s)?;
    let invocations: &[&[&str]] = &[
        &[
            "scaling",
            "--n-atoms",
            "20,40,60",
            "--method",
            "crlb,cfi",
            "--xi",
            "0,0.3,1",
            "--sigma",
            "0,2",
        ],
        &[
            "bayes",
            "--n-atoms",
            "40",
            "--t-phase",
            "1,10",
            "--trials",
            "300",
            "--seed",
            "7",
            "--format",
            "json",
        ],
        &[
            "xi-scan",
            "--n-atoms",
            "40",
            "--t-bs",
            "5",
            "--xi",
            "0.01,0.2,0.5,1",
        ],
        &["te-scan", "--n-atoms", "40", "--te-max", "12"],
        &[
            "probmap",
            "--n-atoms",
            "30",
            "--theta-range=-1,1,21",
            "--husimi",
            "--husimi-grid",
            "5,6",
        ],
        &[
            "husimi",
            "--n-atoms",
            "30",
            "--stage",
            "output",
            "--husimi-grid",
            "7,9",
        ],
        &[
            "prefactor",
            "--n-atoms",
            "20,40,80",
            "--optimize-te",
            "--te-max",
            "8",
        ],
    ];
    let mut files = 0;
    for (k, args) in invocations.iter().enumerate() {
        let ext = if args.contains(&"json") || args[0] == "probmap" || args[0] == "husimi" {
            "json"
        } else {
            "csv"
        };
        let mut outputs = Vec::new();
        for (run, threads) in [None, Some(1), None].into_iter().enumerate() {
            let out = format!("run{run}_{k}.{ext}");
            let mut full: Vec<&str> = args.to_vec();
            full.extend(["--out", &out]);
            let stdout = run_cli(&full, dir.path(), threads)?;
            let bytes = std::fs::read(dir.path().join(&out)).map_err(e2s)?;
            ensure(!bytes.is_empty(), || format!("{out} is empty"))?;
            outputs.push((bytes, stdout));
        }
        ensure(outputs.windows(2).all(|w| w[0] == w[1]), || {
            format!("mzbec {args:?}: outputs differ between runs")
        })?;
        files += 1;

        // a second run over an existing complete file reuses it unchanged
        if args[0] == "scaling" {
            let out = format!("run0_{k}.{ext}");
            let mut full: Vec<&str> = args.to_vec();
            full.extend(["--out", &out]);
            run_cli(&full, dir.path(), None)?;
            let again = std::fs::read(dir.path().join(&out)).map_err(e2s)?;
            ensure(again == outputs[0].0, || "resumed output differs".into())?;
        }
    }
    Ok(format!(
        "{files} invocations × 3 runs (incl. 1 thread) byte-identical"
    ))
}
