//! Ordered, resumable row output.
//!
//! Points are evaluated on the rayon pool; a single writer emits rows in
//! grid order as soon as the prefix is complete. Rows already present in an
//! existing output file are reused by key instead of being recomputed.

use std::collections::HashMap;
use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::sync::mpsc;

use rayon::prelude::*;
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum OutputFormat {
    #[default]
    Csv,
    Json,
}

impl std::str::FromStr for OutputFormat {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "csv" => Ok(Self::Csv),
            "json" => Ok(Self::Json),
            other => Err(Error::InvalidParameter(format!("unknown format {other:?}"))),
        }
    }
}

/// Where a scan writes its rows.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Sink {
    pub path: PathBuf,
    pub format: OutputFormat,
}

impl Sink {
    pub fn new(path: impl Into<PathBuf>, format: OutputFormat) -> Self {
        Self {
            path: path.into(),
            format,
        }
    }

    /// `<out>.errors.json`
    pub fn errors_path(&self) -> PathBuf {
        sidecar(&self.path, "errors.json")
    }
}

pub(crate) fn sidecar(path: &Path, suffix: &str) -> PathBuf {
    let mut s = path.as_os_str().to_owned();
    s.push(".");
    s.push(suffix);
    PathBuf::from(s)
}

/// A scan coordinate with a stable textual key.
pub trait Keyed {
    fn key(&self) -> String;
}

/// A result row with a fixed CSV layout.
pub trait Row: Keyed + Serialize + DeserializeOwned + Send {
    fn header() -> Vec<&'static str>;
    fn fields(&self) -> Vec<String>;
    fn from_fields(fields: &[&str]) -> Option<Self>;

    fn csv_line(&self) -> String {
        let mut line = self.fields().join(",");
        line.push('\n');
        line
    }
}

/// Full double precision; non-finite values as `inf`, `-inf`, `nan`.
pub fn fmt_f64(x: f64) -> String {
    if x.is_nan() {
        "nan".into()
    } else if x.is_infinite() {
        if x > 0.0 { "inf" } else { "-inf" }.into()
    } else {
        format!("{x:.16e}")
    }
}

pub fn parse_f64(s: &str) -> Option<f64> {
    s.trim().parse().ok()
}

/// Serde helpers for floats that may be infinite (JSON has no literal).
pub mod maybe_inf {
    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(x: &f64, s: S) -> Result<S::Ok, S::Error> {
        if x.is_finite() {
            s.serialize_f64(*x)
        } else {
            s.serialize_str(&super::fmt_f64(*x))
        }
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<f64, D::Error> {
        #[derive(Deserialize)]
        #[serde(untagged)]
        enum Repr {
            Num(f64),
            Text(String),
        }
        match Repr::deserialize(d)? {
            Repr::Num(x) => Ok(x),
            Repr::Text(t) => super::parse_f64(&t)
                .ok_or_else(|| serde::de::Error::custom(format!("bad float {t:?}"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PointError {
    pub key: String,
    pub message: String,
    /// Numerical failure rather than an invalid configuration.
    pub numerical: bool,
}

#[derive(Debug, Clone)]
pub struct ScanReport<R> {
    /// Successful rows in grid order.
    pub rows: Vec<R>,
    pub errors: Vec<PointError>,
    /// Rows taken over from an existing output file.
    pub reused: usize,
}

impl<R> ScanReport<R> {
    pub fn is_complete(&self) -> bool {
        self.errors.is_empty()
    }
}

pub fn render_csv<R: Row>(rows: &[R]) -> String {
    let mut out = R::header().join(",");
    out.push('\n');
    for r in rows {
        out.push_str(&r.csv_line());
    }
    out
}

pub fn render_json<T: Serialize + ?Sized>(value: &T) -> Result<String> {
    let mut s = serde_json::to_string_pretty(value)?;
    s.push('\n');
    Ok(s)
}

/// Rows of an existing output file keyed by [`Keyed::key`]. A trailing
/// line without newline (interrupted write) is ignored.
fn load_existing<R: Row>(sink: &Sink) -> Result<HashMap<String, R>> {
    let text = match fs::read_to_string(&sink.path) {
        Ok(t) => t,
        Err(e) if e.kind() == std::io::ErrorKind::NotFound => return Ok(HashMap::new()),
        Err(e) => return Err(e.into()),
    };
    if text.is_empty() {
        return Ok(HashMap::new());
    }
    let foreign = || {
        Error::InvalidParameter(format!(
            "{} exists but is not output of this scan",
            sink.path.display()
        ))
    };
    let rows: Vec<R> = match sink.format {
        OutputFormat::Json => serde_json::from_str(&text).map_err(|_| foreign())?,
        OutputFormat::Csv => {
            let mut lines = text.split_inclusive('\n');
            let header = lines.next().unwrap_or_default();
            if header.trim_end() != R::header().join(",") {
                return Err(foreign());
            }
            lines
                .filter(|l| l.ends_with('\n'))
                .map(|l| {
                    let fields: Vec<&str> = l.trim_end().split(',').collect();
                    R::from_fields(&fields).ok_or_else(foreign)
                })
                .collect::<Result<_>>()?
        }
    };
    Ok(rows.into_iter().map(|r| (r.key(), r)).collect())
}

/// Evaluates `points` in parallel and emits rows in point order.
///
/// Failing points are reported in [`ScanReport::errors`] (and in the
/// `.errors.json` sidecar when writing) and do not stop the scan. I/O
/// errors on the output itself abort it.
pub fn run_scan<P, R, F>(points: &[P], eval: F, sink: Option<&Sink>) -> Result<ScanReport<R>>
where
    P: Keyed + Sync,
    R: Row,
    F: Fn(&P) -> Result<R> + Sync,
{
    let keys: Vec<String> = points.iter().map(Keyed::key).collect();
    let mut existing = match sink {
        Some(s) => load_existing::<R>(s)?,
        None => HashMap::new(),
    };
    let mut slots: Vec<Option<Result<R>>> =
        keys.iter().map(|k| existing.remove(k).map(Ok)).collect();
    let reused = slots.iter().filter(|s| s.is_some()).count();
    let todo: Vec<usize> = (0..points.len()).filter(|&i| slots[i].is_none()).collect();

    let mut writer = match sink {
        Some(s) => {
            if let Some(dir) = s.path.parent().filter(|d| !d.as_os_str().is_empty()) {
                fs::create_dir_all(dir)?;
            }
            let mut w = BufWriter::new(File::create(&s.path)?);
            if s.format == OutputFormat::Csv {
                w.write_all(R::header().join(",").as_bytes())?;
                w.write_all(b"\n")?;
                w.flush()?;
            }
            Some(w)
        }
        None => None,
    };
    let csv = sink.is_some_and(|s| s.format == OutputFormat::Csv);

    let mut rows = Vec::with_capacity(points.len());
    let mut errors = Vec::new();
    let mut io_error: Option<std::io::Error> = None;
    let mut next = 0;
    let mut emit = |slots: &mut Vec<Option<Result<R>>>, next: &mut usize| {
        while *next < slots.len() {
            let Some(res) = slots[*next].take() else {
                break;
            };
            match res {
                Ok(row) => {
                    if let (true, Some(w), None) = (csv, writer.as_mut(), io_error.as_ref()) {
                        if let Err(e) = w
                            .write_all(row.csv_line().as_bytes())
                            .and_then(|_| w.flush())
                        {
                            io_error = Some(e);
                        }
                    }
                    rows.push(row);
                }
                Err(e) => errors.push(PointError {
                    key: keys[*next].clone(),
                    message: e.to_string(),
                    numerical: e.is_numerical(),
                }),
            }
            *next += 1;
        }
    };

    emit(&mut slots, &mut next);
    let (tx, rx) = mpsc::channel::<(usize, Result<R>)>();
    std::thread::scope(|scope| {
        let eval = &eval;
        let todo = &todo;
        scope.spawn(move || {
            todo.par_iter().for_each_with(tx, |tx, &i| {
                // receiver outlives the producer
                let _ = tx.send((i, eval(&points[i])));
            });
        });
        for (i, res) in rx {
            slots[i] = Some(res);
            emit(&mut slots, &mut next);
        }
    });

    if let Some(e) = io_error {
        return Err(e.into());
    }
    if let (Some(s), Some(mut w)) = (sink, writer) {
        if s.format == OutputFormat::Json {
            w.write_all(render_json(&rows)?.as_bytes())?;
        }
        w.flush()?;
        let err_path = s.errors_path();
        if errors.is_empty() {
            match fs::remove_file(&err_path) {
                Err(e) if e.kind() != std::io::ErrorKind::NotFound => return Err(e.into()),
                _ => {}
            }
        } else {
            fs::write(&err_path, render_json(&errors)?)?;
        }
    }
    Ok(ScanReport {
        rows,
        errors,
        reused,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::sync::atomic::{AtomicUsize, Ordering};

    #[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
    struct Sq {
        x: u32,
        #[serde(with = "maybe_inf")]
        y: f64,
    }

    impl Keyed for u32 {
        fn key(&self) -> String {
            self.to_string()
        }
    }

    impl Keyed for Sq {
        fn key(&self) -> String {
            self.x.to_string()
        }
    }

    impl Row for Sq {
        fn header() -> Vec<&'static str> {
            vec!["x", "y"]
        }
        fn fields(&self) -> Vec<String> {
            vec![self.x.to_string(), fmt_f64(self.y)]
        }
        fn from_fields(f: &[&str]) -> Option<Self> {
            match f {
                [x, y] => Some(Sq {
                    x: x.parse().ok()?,
                    y: parse_f64(y)?,
                }),
                _ => None,
            }
        }
    }

    fn eval(x: &u32) -> Result<Sq> {
        match x {
            7 => Err(Error::ImpossibleOutcomes),
            13 => Ok(Sq {
                x: 13,
                y: f64::INFINITY,
            }),
            _ => Ok(Sq {
                x: *x,
                y: (*x as f64).sqrt() / 3.0,
            }),
        }
    }

    #[test]
    fn float_format_round_trips() {
        for x in [
            0.1,
            1.0 / 3.0,
            -2.5e-300,
            6.02e23,
            f64::MIN_POSITIVE,
            f64::INFINITY,
        ] {
            assert_eq!(parse_f64(&fmt_f64(x)), Some(x));
        }
        assert_eq!(fmt_f64(0.5), "5.0000000000000000e-1");
    }

    #[test]
    fn rows_in_order_with_errors() {
        let pts: Vec<u32> = (0..40).collect();
        let rep = run_scan(&pts, eval, None).unwrap();
        assert_eq!(rep.rows.len(), 39);
        assert!(rep.rows.windows(2).all(|w| w[0].x < w[1].x));
        assert_eq!(rep.errors.len(), 1);
        assert_eq!(rep.errors[0].key, "7");
        assert!(rep.errors[0].numerical);
    }

    #[test]
    fn resume_reuses_rows_and_reproduces_bytes() {
        for format in [OutputFormat::Csv, OutputFormat::Json] {
            let dir = tempfile::tempdir().unwrap();
            let sink = Sink::new(dir.path().join("out"), format);
            let pts: Vec<u32> = (0..30).collect();
            run_scan(&pts, eval, Some(&sink)).unwrap();
            let full = fs::read(&sink.path).unwrap();
            assert!(sink.errors_path().exists());

            if format == OutputFormat::Csv {
                // interrupted run: a prefix plus a torn line
                let text = String::from_utf8(full.clone()).unwrap();
                let cut: String = text.lines().take(12).map(|l| format!("{l}\n")).collect();
                fs::write(&sink.path, format!("{cut}21,9.99")).unwrap();
            }
            let calls = AtomicUsize::new(0);
            let rep = run_scan(
                &pts,
                |p| {
                    calls.fetch_add(1, Ordering::Relaxed);
                    eval(p)
                },
                Some(&sink),
            )
            .unwrap();
            let expect_reused = if format == OutputFormat::Csv { 11 } else { 29 };
            assert_eq!(rep.reused, expect_reused);
            assert_eq!(calls.load(Ordering::Relaxed), 30 - expect_reused);
            assert_eq!(fs::read(&sink.path).unwrap(), full);
        }
    }

    #[test]
    fn refuses_foreign_file() {
        let dir = tempfile::tempdir().unwrap();
        let sink = Sink::new(dir.path().join("out.csv"), OutputFormat::Csv);
        fs::write(&sink.path, "a,b,c\n1,2,3\n").unwrap();
        let pts: Vec<u32> = (0..3).collect();
        assert!(matches!(
            run_scan(&pts, eval, Some(&sink)),
            Err(Error::InvalidParameter(_))
        ));
        assert_eq!(fs::read_to_string(&sink.path).unwrap(), "a,b,c\n1,2,3\n");
    }

    #[test]
    fn stale_error_sidecar_removed() {
        let dir = tempfile::tempdir().unwrap();
        let sink = Sink::new(dir.path().join("out.csv"), OutputFormat::Csv);
        run_scan(&[6u32, 7], eval, Some(&sink)).unwrap();
        assert!(sink.errors_path().exists());
        run_scan(&[6u32, 8], eval, Some(&sink)).unwrap();
        assert!(!sink.errors_path().exists());
    }
}
