//! Command-line front end for the interferometer scans.
//!
//! Exit codes: 0 success, 2 invalid configuration, 3 numerical failure.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use serde::{Deserialize, Deserializer, Serialize};

use mzbec::dynamics::{Interferometer, SequenceParams};
use mzbec::estimation::{Estimator, PriorWindow};
use mzbec::experiments::{
    best_per_n, fit_prefactor, husimi_grid, husimi_panels, linspace, probability_map, render_csv,
    render_json, scaling_series, scan_scaling, scan_xi_transition, te_extremes, te_grid,
    BayesSettings, HusimiGrid, OutputFormat, PrefactorFit, Row, ScanReport, ScanRow, ScanSpec,
    Sink, TeEntry, TeOptimum, XiScanSpec, DEFAULT_THETA,
};
use mzbec::metrology::{detection_kernel, Method};
use mzbec::states::input_state_for_xi;
use mzbec::Error;

#[derive(Parser, Debug)]
#[command(
    name = "mzbec",
    version,
    about = "Two-mode BEC Mach-Zehnder interferometer scans"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// √m·Δθ over N (and any other listed axes); one row per point.
    Scaling(Opts),
    /// Power-law fit Δθ = β·N^exponent, optionally with T_e optimised per N.
    Prefactor(Opts),
    /// Sensitivity versus phase-accumulation time T_e.
    TeScan(Opts),
    /// Sensitivity versus input number squeezing ξ.
    XiScan(Opts),
    /// Readout probabilities P(n|θ) over a θ axis.
    Probmap(Opts),
    /// Monte-Carlo Bayesian phase estimation.
    Bayes(Opts),
    /// Husimi Q function of the state at one stage of the sequence.
    Husimi(Opts),
}

/// All flags. The `--config` file uses the same names (`n-atoms` or
/// `n_atoms`); flags given on the command line win.
#[derive(Args, Debug, Default, Deserialize)]
#[serde(default, deny_unknown_fields, rename_all = "kebab-case")]
struct Opts {
    /// Atom numbers (even), comma separated.
    #[arg(long, value_delimiter = ',')]
    #[serde(deserialize_with = "one_or_many")]
    n_atoms: Option<Vec<usize>>,
    /// Interaction strength U0·N, held fixed across N.
    #[arg(long, allow_negative_numbers = true)]
    u0n: Option<f64>,
    /// Beam-splitter duration T_t (Ω = π/(2 T_t)).
    #[arg(long, value_delimiter = ',')]
    #[serde(deserialize_with = "one_or_many")]
    t_bs: Option<Vec<f64>>,
    /// Phase-accumulation time T_e.
    #[arg(long, value_delimiter = ',')]
    #[serde(deserialize_with = "one_or_many")]
    t_phase: Option<Vec<f64>>,
    /// Phase θ = ΔE·T_e.
    #[arg(long, value_delimiter = ',', allow_negative_numbers = true)]
    #[serde(deserialize_with = "one_or_many")]
    theta: Option<Vec<f64>>,
    /// Input squeezing ξ: 1 binomial, < 0.02 twin Fock.
    #[arg(long, value_delimiter = ',')]
    #[serde(deserialize_with = "one_or_many")]
    xi: Option<Vec<f64>>,
    /// Detection noise σ in atoms (0 = ideal counting).
    #[arg(long, value_delimiter = ',')]
    #[serde(deserialize_with = "one_or_many")]
    sigma: Option<Vec<f64>>,
    /// crlb, cfi or bayesian.
    #[arg(long, value_delimiter = ',')]
    #[serde(deserialize_with = "one_or_many")]
    method: Option<Vec<String>>,
    #[arg(long)]
    seed: Option<u64>,
    /// Monte-Carlo trials per Bayesian point.
    #[arg(long)]
    trials: Option<usize>,
    /// Output file; rows go to stdout when absent.
    #[arg(long)]
    out: Option<PathBuf>,
    /// csv or json (default from the --out extension, else csv).
    #[arg(long)]
    format: Option<String>,
    /// Flat JSON object with any of these options.
    #[arg(long)]
    #[serde(skip)]
    config: Option<PathBuf>,

    /// prefactor: pick the best T_e per N from the T_e grid.
    #[arg(long)]
    optimize_te: bool,
    /// Largest T_e of the default grid {1, …, te_max}.
    #[arg(long)]
    te_max: Option<usize>,
    /// bayes: measurements per trial.
    #[arg(long)]
    m: Option<usize>,
    /// bayes: posterior grid points.
    #[arg(long)]
    n_grid: Option<usize>,
    /// bayes: posterior_mean, map or max_likelihood.
    #[arg(long)]
    estimator: Option<String>,
    /// bayes: prior support, `local` (θ ± π/N), `global` (±π/4) or a
    /// half-width in radians.
    #[arg(long)]
    window: Option<String>,
    /// probmap: θ axis as lo,hi,count (ignored when --theta is given).
    #[arg(long, value_delimiter = ',', allow_negative_numbers = true)]
    #[serde(deserialize_with = "one_or_many")]
    theta_range: Option<Vec<f64>>,
    /// probmap: add Husimi panels at --husimi-theta.
    #[arg(long)]
    husimi: bool,
    #[arg(long, value_delimiter = ',', allow_negative_numbers = true)]
    #[serde(deserialize_with = "one_or_many")]
    husimi_theta: Option<Vec<f64>>,
    /// Husimi grid as polar,azimuth point counts.
    #[arg(long, value_delimiter = ',')]
    #[serde(deserialize_with = "one_or_many")]
    husimi_grid: Option<Vec<usize>>,
    /// husimi: input, after_bs or output.
    #[arg(long)]
    stage: Option<String>,
}

fn one_or_many<'de, D, T>(d: D) -> Result<Option<Vec<T>>, D::Error>
where
    D: Deserializer<'de>,
    T: Deserialize<'de>,
{
    #[derive(Deserialize)]
    #[serde(untagged)]
    enum Repr<T> {
        One(T),
        Many(Vec<T>),
    }
    Ok(Some(match Repr::deserialize(d)? {
        Repr::One(x) => vec![x],
        Repr::Many(v) => v,
    }))
}

macro_rules! prefer {
    ($cli:ident, $file:ident; $($f:ident),*) => {
        $( if $cli.$f.is_none() { $cli.$f = $file.$f.take(); } )*
    };
}

impl Opts {
    fn merge_config(mut self) -> Result<Self, CliError> {
        let Some(path) = self.config.clone() else {
            return Ok(self);
        };
        let text = std::fs::read_to_string(&path)
            .map_err(|e| CliError::config(format!("{}: {e}", path.display())))?;
        let value: serde_json::Value = serde_json::from_str(&text)
            .map_err(|e| CliError::config(format!("{}: {e}", path.display())))?;
        let serde_json::Value::Object(map) = value else {
            return Err(CliError::config(format!(
                "{}: expected a JSON object",
                path.display()
            )));
        };
        let map: serde_json::Map<String, serde_json::Value> = map
            .into_iter()
            .map(|(k, v)| (k.replace('_', "-"), v))
            .collect();
        let mut file: Opts = serde_json::from_value(serde_json::Value::Object(map))
            .map_err(|e| CliError::config(format!("{}: {e}", path.display())))?;
        prefer!(self, file; n_atoms, u0n, t_bs, t_phase, theta, xi, sigma, method, seed, trials,
            out, format, te_max, m, n_grid, estimator, window, theta_range, husimi_theta,
            husimi_grid, stage);
        self.optimize_te |= file.optimize_te;
        self.husimi |= file.husimi;
        Ok(self)
    }

    fn methods(&self, default: &[Method]) -> Result<Vec<Method>, CliError> {
        match &self.method {
            None => Ok(default.to_vec()),
            Some(v) => v
                .iter()
                .map(|s| s.parse().map_err(CliError::from))
                .collect(),
        }
    }

    fn format(&self) -> Result<OutputFormat, CliError> {
        match (&self.format, &self.out) {
            (Some(f), _) => Ok(f.parse()?),
            (None, Some(p)) if p.extension().is_some_and(|e| e == "json") => Ok(OutputFormat::Json),
            _ => Ok(OutputFormat::Csv),
        }
    }

    fn sink(&self) -> Result<Option<Sink>, CliError> {
        let format = self.format()?;
        Ok(self.out.as_ref().map(|p| Sink::new(p, format)))
    }

    fn bayes(&self) -> Result<BayesSettings, CliError> {
        let d = BayesSettings::default();
        let window = match self.window.as_deref() {
            None | Some("local") => PriorWindow::Local,
            Some("global") => {
                PriorWindow::Global(-std::f64::consts::FRAC_PI_4, std::f64::consts::FRAC_PI_4)
            }
            Some(w) => match w.parse::<f64>() {
                Ok(h) if h > 0.0 && h.is_finite() => PriorWindow::HalfWidth(h),
                _ => return Err(CliError::config(format!("bad --window {w:?}"))),
            },
        };
        let estimator = match &self.estimator {
            Some(s) => s.parse::<Estimator>()?,
            None => d.estimator,
        };
        Ok(BayesSettings {
            m: self.m.unwrap_or(d.m),
            n_trials: self.trials.unwrap_or(d.n_trials),
            n_grid: self.n_grid.unwrap_or(d.n_grid),
            window,
            estimator,
        })
    }

    fn spec(&self, d: &ScanSpec) -> Result<ScanSpec, CliError> {
        Ok(ScanSpec {
            n_atoms: self.n_atoms.clone().unwrap_or_else(|| d.n_atoms.clone()),
            u0n: self.u0n.unwrap_or(d.u0n),
            t_bs: self.t_bs.clone().unwrap_or_else(|| d.t_bs.clone()),
            t_phase: self.t_phase.clone().unwrap_or_else(|| d.t_phase.clone()),
            xi: self.xi.clone().unwrap_or_else(|| d.xi.clone()),
            sigma: self.sigma.clone().unwrap_or_else(|| d.sigma.clone()),
            theta: self.theta.clone().unwrap_or_else(|| d.theta.clone()),
            methods: self.methods(&d.methods)?,
            seed: self.seed.unwrap_or(d.seed),
            bayes: self.bayes()?,
        })
    }

    fn husimi_grid(&self) -> Result<(usize, usize), CliError> {
        match self.husimi_grid.as_deref() {
            None => Ok((41, 80)),
            Some(&[p, a]) => Ok((p, a)),
            Some(_) => Err(CliError::config("--husimi-grid takes polar,azimuth".into())),
        }
    }
}

#[derive(Debug)]
struct CliError {
    code: u8,
    message: String,
}

impl CliError {
    fn config(message: String) -> Self {
        Self { code: 2, message }
    }
}

impl From<Error> for CliError {
    fn from(e: Error) -> Self {
        Self {
            code: if e.is_numerical() { 3 } else { 2 },
            message: e.to_string(),
        }
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        Self {
            code: 2,
            message: e.to_string(),
        }
    }
}

fn single<T: Copy + std::fmt::Debug>(name: &str, v: &[T]) -> Result<T, CliError> {
    match v {
        [x] => Ok(*x),
        _ => Err(CliError::config(format!(
            "{name} takes a single value here, got {v:?}"
        ))),
    }
}

fn emit_rows<R: Row>(
    rows: &[R],
    sink: Option<&Sink>,
    format: OutputFormat,
) -> Result<(), CliError> {
    if sink.is_none() {
        let text = match format {
            OutputFormat::Csv => render_csv(rows),
            OutputFormat::Json => render_json(rows)?,
        };
        print!("{text}");
    }
    Ok(())
}

/// Reports point failures; exit 3 if any was numerical, else 2.
fn finish<R>(report: &ScanReport<R>, sink: Option<&Sink>) -> Result<(), CliError> {
    if report.errors.is_empty() {
        return Ok(());
    }
    for e in &report.errors {
        eprintln!("point {} failed: {}", e.key, e.message);
    }
    if let Some(s) = sink {
        eprintln!("details in {}", s.errors_path().display());
    }
    let numerical = report.errors.iter().any(|e| e.numerical);
    Err(CliError {
        code: if numerical { 3 } else { 2 },
        message: format!("{} of the scan points failed", report.errors.len()),
    })
}

fn write_side_output<T: Serialize>(
    out: Option<&Path>,
    suffix: &str,
    value: &T,
) -> Result<(), CliError> {
    let text = render_json(value)?;
    match out {
        Some(p) => {
            let mut s = p.as_os_str().to_owned();
            s.push(".");
            s.push(suffix);
            std::fs::write(PathBuf::from(s), &text)?;
            print!("{text}");
        }
        None => eprint!("{text}"),
    }
    Ok(())
}

fn write_document(opts: &Opts, json: String, csv: impl FnOnce() -> String) -> Result<(), CliError> {
    let text = match opts.format()? {
        OutputFormat::Json => json,
        OutputFormat::Csv => csv(),
    };
    match &opts.out {
        Some(p) => {
            if let Some(dir) = p.parent().filter(|d| !d.as_os_str().is_empty()) {
                std::fs::create_dir_all(dir)?;
            }
            std::fs::write(p, text)?;
        }
        None => print!("{text}"),
    }
    Ok(())
}

fn cmd_scaling(opts: &Opts, defaults: ScanSpec) -> Result<(), CliError> {
    let spec = opts.spec(&defaults)?;
    let sink = opts.sink()?;
    let report = scan_scaling(&spec, sink.as_ref())?;
    emit_rows(&report.rows, sink.as_ref(), opts.format()?)?;
    finish(&report, sink.as_ref())
}

#[derive(Serialize)]
struct PrefactorReport {
    fit: PrefactorFit,
    points: Vec<ScanRow>,
}

fn cmd_prefactor(opts: &Opts) -> Result<(), CliError> {
    let mut defaults = ScanSpec::default();
    if opts.optimize_te {
        defaults.t_phase = te_grid(opts.te_max.unwrap_or(40));
    }
    let spec = opts.spec(&defaults)?;
    let per_n = spec.points().len() / spec.n_atoms.len().max(1);
    if !opts.optimize_te && per_n != 1 {
        return Err(CliError::config(
            "prefactor fits one curve: give single values for all axes but N, or --optimize-te"
                .into(),
        ));
    }
    if opts.optimize_te && per_n != spec.t_phase.len() {
        return Err(CliError::config(
            "with --optimize-te only N and T_e may take several values".into(),
        ));
    }
    let sink = opts.sink()?;
    let report = scan_scaling(&spec, sink.as_ref())?;
    finish(&report, sink.as_ref())?;
    let points = best_per_n(&report.rows);
    let fit = fit_prefactor(&scaling_series(&points)?)?;
    write_side_output(
        opts.out.as_deref(),
        "fit.json",
        &PrefactorReport { fit, points },
    )
}

#[derive(Serialize)]
struct TeSummary {
    n_atoms: usize,
    t_bs: f64,
    xi_in: f64,
    sigma: f64,
    theta: f64,
    method: Method,
    spread: f64,
    #[serde(flatten)]
    optimum: TeOptimum,
}

fn cmd_te_scan(opts: &Opts) -> Result<(), CliError> {
    let defaults = ScanSpec {
        n_atoms: vec![100],
        t_bs: vec![1.0],
        t_phase: te_grid(opts.te_max.unwrap_or(40)),
        ..ScanSpec::default()
    };
    let spec = opts.spec(&defaults)?;
    let sink = opts.sink()?;
    let report = scan_scaling(&spec, sink.as_ref())?;
    emit_rows(&report.rows, sink.as_ref(), opts.format()?)?;
    finish(&report, sink.as_ref())?;

    let mut summaries: Vec<TeSummary> = Vec::new();
    for &n_atoms in &spec.n_atoms {
        for &t_bs in &spec.t_bs {
            for &xi in &spec.xi {
                for &sigma in &spec.sigma {
                    for &theta in &spec.theta {
                        for &method in &spec.methods {
                            let table: Vec<TeEntry> = report
                                .rows
                                .iter()
                                .filter(|r| {
                                    r.n_atoms == n_atoms
                                        && r.t_bs == t_bs
                                        && r.xi_in == xi
                                        && r.sigma == sigma
                                        && r.theta == theta
                                        && r.method == method
                                })
                                .map(|r| TeEntry {
                                    t_phase: r.t_phase,
                                    sqrt_m_dtheta: r.sqrt_m_dtheta,
                                    fisher: r.fisher_value,
                                })
                                .collect();
                            let optimum = te_extremes(table)?;
                            summaries.push(TeSummary {
                                n_atoms,
                                t_bs,
                                xi_in: xi,
                                sigma,
                                theta,
                                method,
                                spread: optimum.spread(),
                                optimum,
                            });
                        }
                    }
                }
            }
        }
    }
    write_side_output(opts.out.as_deref(), "optimum.json", &summaries)
}

fn cmd_xi_scan(opts: &Opts) -> Result<(), CliError> {
    let xs = XiScanSpec {
        n_atoms: single("--n-atoms", opts.n_atoms.as_deref().unwrap_or(&[100]))?,
        u0n: opts.u0n.unwrap_or(1.0),
        t_bs: single("--t-bs", opts.t_bs.as_deref().unwrap_or(&[20.0]))?,
        t_phase: opts.t_phase.clone().unwrap_or_else(|| vec![1.0]),
        xi: opts.xi.clone().unwrap_or_else(XiScanSpec::default_xi_grid),
        methods: opts.methods(&[Method::Crlb, Method::Cfi])?,
        theta: single("--theta", opts.theta.as_deref().unwrap_or(&[DEFAULT_THETA]))?,
        sigma: single("--sigma", opts.sigma.as_deref().unwrap_or(&[0.0]))?,
        seed: opts.seed.unwrap_or(0),
        bayes: opts.bayes()?,
    };
    let sink = opts.sink()?;
    let report = scan_xi_transition(&xs, sink.as_ref())?;
    emit_rows(&report.rows, sink.as_ref(), opts.format()?)?;
    finish(&report, sink.as_ref())
}

struct SinglePoint {
    params: SequenceParams,
    xi: f64,
    sigma: f64,
}

fn single_point(opts: &Opts) -> Result<SinglePoint, CliError> {
    let n = single("--n-atoms", opts.n_atoms.as_deref().unwrap_or(&[100]))?;
    let t_bs = single("--t-bs", opts.t_bs.as_deref().unwrap_or(&[1.0]))?;
    let t_phase = single("--t-phase", opts.t_phase.as_deref().unwrap_or(&[1.0]))?;
    Ok(SinglePoint {
        params: SequenceParams::mach_zehnder(n, opts.u0n.unwrap_or(1.0), t_bs, t_phase)?,
        xi: single("--xi", opts.xi.as_deref().unwrap_or(&[0.0]))?,
        sigma: single("--sigma", opts.sigma.as_deref().unwrap_or(&[0.0]))?,
    })
}

fn cmd_probmap(opts: &Opts) -> Result<(), CliError> {
    let sp = single_point(opts)?;
    let thetas = match (&opts.theta, opts.theta_range.as_deref()) {
        (Some(t), _) => t.clone(),
        (None, Some(&[lo, hi, count])) if count >= 1.0 && count.fract() == 0.0 => {
            linspace(lo, hi, count as usize)
        }
        (None, Some(_)) => return Err(CliError::config("--theta-range takes lo,hi,count".into())),
        (None, None) => linspace(
            -std::f64::consts::FRAC_PI_2,
            std::f64::consts::FRAC_PI_2,
            181,
        ),
    };
    let psi = input_state_for_xi(sp.params.n_atoms, sp.xi)?;
    let kernel = if sp.sigma > 0.0 {
        Some(detection_kernel(sp.sigma, sp.params.n_atoms)?)
    } else {
        None
    };
    let mut map = probability_map(&psi, &sp.params, &thetas, kernel.as_ref())?;
    map.xi_in = sp.xi;
    if opts.husimi {
        let (np, na) = opts.husimi_grid()?;
        let at = opts
            .husimi_theta
            .clone()
            .unwrap_or_else(|| vec![DEFAULT_THETA]);
        map.husimi = Some(
            at.iter()
                .map(|&t| husimi_panels(&psi, &sp.params.with_theta(t)?, t, np, na))
                .collect::<mzbec::Result<_>>()?,
        );
    }
    let json = render_json(&map)?;
    write_document(opts, json, || {
        let mut s = String::from("theta,n,p\n");
        for (t, col) in map.theta_axis.iter().zip(&map.p) {
            for (n, p) in map.n_axis.iter().zip(col) {
                s.push_str(&format!(
                    "{},{n},{}\n",
                    mzbec::experiments::fmt_f64(*t),
                    mzbec::experiments::fmt_f64(*p)
                ));
            }
        }
        s
    })
}

#[derive(Serialize)]
struct HusimiReport {
    n_atoms: usize,
    u0n: f64,
    t_bs: f64,
    t_phase: f64,
    xi_in: f64,
    theta: f64,
    stage: String,
    #[serde(flatten)]
    grid: HusimiGrid,
}

fn cmd_husimi(opts: &Opts) -> Result<(), CliError> {
    let sp = single_point(opts)?;
    let theta = single("--theta", opts.theta.as_deref().unwrap_or(&[DEFAULT_THETA]))?;
    let params = sp.params.with_theta(theta)?;
    let (np, na) = opts.husimi_grid()?;
    let psi = input_state_for_xi(params.n_atoms, sp.xi)?;
    let ifm = Interferometer::new(params)?;
    let stage = opts.stage.clone().unwrap_or_else(|| "after_bs".into());
    let state = match stage.replace('-', "_").as_str() {
        "input" => psi,
        "after_bs" => ifm.after_first_bs(&psi)?,
        "output" => ifm.output(&psi, theta)?,
        other => return Err(CliError::config(format!("unknown --stage {other:?}"))),
    };
    let report = HusimiReport {
        n_atoms: params.n_atoms,
        u0n: params.u0n(),
        t_bs: params.t_bs,
        t_phase: params.t_phase,
        xi_in: sp.xi,
        theta,
        stage,
        grid: husimi_grid(&state, np, na)?,
    };
    let json = render_json(&report)?;
    write_document(opts, json, || {
        let mut s = String::from("polar,azimuth,q\n");
        for (p, row) in report.grid.polar.iter().zip(&report.grid.q) {
            for (a, q) in report.grid.azimuth.iter().zip(row) {
                let f = mzbec::experiments::fmt_f64;
                s.push_str(&format!("{},{},{}\n", f(*p), f(*a), f(*q)));
            }
        }
        s
    })
}

fn run(cli: Cli) -> Result<(), CliError> {
    match cli.command {
        Command::Scaling(o) => cmd_scaling(&o.merge_config()?, ScanSpec::default()),
        Command::Prefactor(o) => cmd_prefactor(&o.merge_config()?),
        Command::TeScan(o) => cmd_te_scan(&o.merge_config()?),
        Command::XiScan(o) => cmd_xi_scan(&o.merge_config()?),
        Command::Probmap(o) => cmd_probmap(&o.merge_config()?),
        Command::Bayes(o) => {
            let o = o.merge_config()?;
            let defaults = ScanSpec {
                n_atoms: vec![100],
                t_bs: vec![1.0],
                methods: vec![Method::Bayesian],
                ..ScanSpec::default()
            };
            cmd_scaling(&o, defaults)
        }
        Command::Husimi(o) => cmd_husimi(&o.merge_config()?),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {}", e.message);
            ExitCode::from(e.code)
        }
    }
}
