//! AR(1) whitening of channel residuals and the Ljung-Box portmanteau test.

use log::warn;
use serde::{Deserialize, Serialize};
use statrs::distribution::{ChiSquared, ContinuousCDF};

use crate::error::{Error, Result};

/// Shortest series `fit_ar1` accepts.
pub const MIN_AR1_LEN: usize = 20;
/// Ljung-Box p-value above which a series counts as white.
pub const WHITENESS_THRESHOLD: f64 = 0.05;
/// Parameters removed from the chi-square degrees of freedom.
pub const FITTED_PARAMS: usize = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Ar1Model {
    pub phi: f64,
    pub intercept: f64,
    /// Innovations for t = 2..n.
    pub residuals: Vec<f64>,
    pub n_used: usize,
}

/// Conditional least squares of `r[t]` on `r[t-1]`.
pub fn fit_ar1(r: &[f64]) -> Result<Ar1Model> {
    if r.len() < MIN_AR1_LEN {
        return Err(Error::Data(format!(
            "AR(1) fit needs at least {MIN_AR1_LEN} values, got {}",
            r.len()
        )));
    }
    let prev = &r[..r.len() - 1];
    let next = &r[1..];
    let m = prev.len() as f64;
    let mean_prev = prev.iter().sum::<f64>() / m;
    let mean_next = next.iter().sum::<f64>() / m;
    let mut sxx = 0.0;
    let mut sxy = 0.0;
    for (a, b) in prev.iter().zip(next) {
        sxx += (a - mean_prev) * (a - mean_prev);
        sxy += (a - mean_prev) * (b - mean_next);
    }
    if sxx <= 0.0 {
        return Err(Error::Numerical("AR(1) fit on a zero-variance series".into()));
    }
    let phi = sxy / sxx;
    let intercept = mean_next - phi * mean_prev;
    if phi.abs() >= 1.0 {
        warn!("AR(1) coefficient {phi:.4} is not stationary");
    }
    let residuals: Vec<f64> = prev.iter().zip(next).map(|(a, b)| b - intercept - phi * a).collect();
    Ok(Ar1Model { phi, intercept, n_used: residuals.len(), residuals })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WhitenessReport {
    pub ljung_box_stat: f64,
    pub lags_tested: usize,
    pub degrees_of_freedom: usize,
    pub p_value: f64,
    pub lag1_autocorr: f64,
    pub threshold: f64,
    pub passed: bool,
}

/// `min(20, n / 5)`, at least 1.
pub fn default_max_lag(n: usize) -> usize {
    (n / 5).clamp(1, 20)
}

/// Sample autocorrelations at lags `1..=max_lag`; all zero for a constant series.
pub fn autocorrelations(x: &[f64], max_lag: usize) -> Vec<f64> {
    let n = x.len();
    let mean = x.iter().sum::<f64>() / n as f64;
    let c0: f64 = x.iter().map(|v| (v - mean) * (v - mean)).sum();
    (1..=max_lag)
        .map(|k| {
            if c0 <= 0.0 || k >= n {
                return 0.0;
            }
            (k..n).map(|t| (x[t] - mean) * (x[t - k] - mean)).sum::<f64>() / c0
        })
        .collect()
}

/// Upper tail of the chi-square distribution.
pub fn chi_square_sf(stat: f64, df: usize) -> f64 {
    if stat <= 0.0 {
        return 1.0;
    }
    let dist = ChiSquared::new(df as f64).expect("positive degrees of freedom");
    dist.sf(stat).clamp(0.0, 1.0)
}

/// Ljung-Box Q over lags `1..=max_lag` with `max_lag - 1` degrees of freedom.
pub fn whiteness_test(eps: &[f64], max_lag: usize) -> WhitenessReport {
    let n = eps.len();
    debug_assert!(max_lag >= 1 && n > max_lag);
    let max_lag = max_lag.clamp(1, n.saturating_sub(1).max(1));
    let acf = autocorrelations(eps, max_lag);
    let nf = n as f64;
    let q: f64 = nf * (nf + 2.0)
        * acf.iter().enumerate().map(|(i, r)| r * r / (nf - (i + 1) as f64)).sum::<f64>();
    let df = max_lag.saturating_sub(FITTED_PARAMS).max(1);
    let p_value = chi_square_sf(q, df);
    WhitenessReport {
        ljung_box_stat: q,
        lags_tested: max_lag,
        degrees_of_freedom: df,
        p_value,
        lag1_autocorr: acf.first().copied().unwrap_or(0.0),
        threshold: WHITENESS_THRESHOLD,
        passed: p_value > WHITENESS_THRESHOLD,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Whitened {
    /// The nonconformity scores: the input itself, or AR(1) innovations (one shorter).
    pub scores: Vec<f64>,
    pub model: Option<Ar1Model>,
    /// Test of the returned scores.
    pub report: WhitenessReport,
    /// Test of the raw input.
    pub raw_report: WhitenessReport,
}

impl Whitened {
    /// Number of leading input values without a score.
    pub fn offset(&self) -> usize {
        usize::from(self.model.is_some())
    }
}

/// Returns the input if it already passes, otherwise its AR(1) innovations.
pub fn whiten(r: &[f64]) -> Result<Whitened> {
    if r.len() < MIN_AR1_LEN {
        return Err(Error::Data(format!(
            "whitening needs at least {MIN_AR1_LEN} residuals, got {}",
            r.len()
        )));
    }
    let raw_report = whiteness_test(r, default_max_lag(r.len()));
    if raw_report.passed {
        return Ok(Whitened { scores: r.to_vec(), model: None, report: raw_report.clone(), raw_report });
    }
    let model = fit_ar1(r)?;
    let report = whiteness_test(&model.residuals, default_max_lag(model.residuals.len()));
    if !report.passed {
        warn!(
            "AR(1) innovations still dependent (Ljung-Box p = {:.4}); scores may not be exchangeable",
            report.p_value
        );
    }
    Ok(Whitened { scores: model.residuals.clone(), model: Some(model), report, raw_report })
}
