use serde::{Deserialize, Serialize};

use crate::{Error, Result};

/// Power-law fit `Δθ = β · N^exponent` on log-log axes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PrefactorFit {
    /// `exp(intercept)` of the free fit.
    pub beta: f64,
    pub exponent: f64,
    /// RMS residual of `ln Δθ` in the free fit.
    pub residual: f64,
    /// Prefactor with the exponent pinned to −1: geometric mean of `Δθ·N`.
    pub beta_heisenberg: f64,
    /// RMS residual of `ln Δθ` in the pinned fit.
    pub residual_heisenberg: f64,
    pub n_range: Vec<usize>,
}

/// Least squares on `ln Δθ` versus `ln N`.
pub fn fit_prefactor(points: &[(usize, f64)]) -> Result<PrefactorFit> {
    if points.len() < 3 {
        return Err(Error::DegenerateFit(format!(
            "need at least 3 points, got {}",
            points.len()
        )));
    }
    if let Some(&(n, d)) = points
        .iter()
        .find(|(n, d)| *n == 0 || !(d.is_finite() && *d > 0.0))
    {
        return Err(Error::DegenerateFit(format!(
            "non-positive or non-finite point (N={n}, value={d})"
        )));
    }
    let xs: Vec<f64> = points.iter().map(|(n, _)| (*n as f64).ln()).collect();
    let ys: Vec<f64> = points.iter().map(|(_, d)| d.ln()).collect();
    let k = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / k;
    let my = ys.iter().sum::<f64>() / k;
    let sxx: f64 = xs.iter().map(|x| (x - mx).powi(2)).sum();
    if sxx == 0.0 {
        return Err(Error::DegenerateFit("all N values are equal".into()));
    }
    let sxy: f64 = xs.iter().zip(&ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let rms = |pred: &dyn Fn(f64) -> f64| -> f64 {
        (xs.iter()
            .zip(&ys)
            .map(|(x, y)| (y - pred(*x)).powi(2))
            .sum::<f64>()
            / k)
            .sqrt()
    };
    let residual = rms(&|x| intercept + slope * x);
    // ln Δθ = ln β − ln N
    let ln_beta_h = xs.iter().zip(&ys).map(|(x, y)| y + x).sum::<f64>() / k;
    let residual_heisenberg = rms(&|x| ln_beta_h - x);
    Ok(PrefactorFit {
        beta: intercept.exp(),
        exponent: slope,
        residual,
        beta_heisenberg: ln_beta_h.exp(),
        residual_heisenberg,
        n_range: points.iter().map(|(n, _)| *n).collect(),
    })
}
