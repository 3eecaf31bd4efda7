//! Evaluation artifacts: interval-length summaries, coverage audits and
//! plot-ready fit series.

use std::io::Write;

use chrono::{Datelike, NaiveDate};
use serde::{Deserialize, Serialize};

use crate::conformal::{Channel, ForecastInterval};
use crate::error::{Error, Result};
use crate::ingest::empirical_quantile;
use crate::smoother::fit_loess;

pub use crate::synth::{synth_generate, ScenarioOracle, ScenarioSpec, SynthData};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Subset {
    All,
    /// Highest 10% of point forecasts; ties at the cutoff are kept.
    TopDecileByForecast,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IntervalSummary {
    pub channel: Channel,
    pub alpha: f64,
    pub subset: Subset,
    pub n: usize,
    pub min_len: f64,
    pub mean_len: f64,
    pub max_len: f64,
}

/// Min/mean/max interval length over a subset of same-channel, same-level intervals.
pub fn summarize_intervals(intervals: &[ForecastInterval], subset: Subset) -> Result<IntervalSummary> {
    let first = intervals
        .first()
        .ok_or_else(|| Error::Data("cannot summarize an empty interval list".into()))?;
    if intervals.iter().any(|iv| iv.channel != first.channel || iv.alpha != first.alpha) {
        return Err(Error::Data("summary input mixes channels or alpha levels".into()));
    }
    let selected: Vec<&ForecastInterval> = match subset {
        Subset::All => intervals.iter().collect(),
        Subset::TopDecileByForecast => {
            let mut points: Vec<f64> = intervals.iter().map(|iv| iv.point).collect();
            points.sort_by(|a, b| b.total_cmp(a));
            let k = ((0.1 * points.len() as f64 - 1e-9).ceil() as usize).max(1);
            let cutoff = points[k - 1];
            intervals.iter().filter(|iv| iv.point >= cutoff).collect()
        }
    };
    // Sorted so the mean does not depend on input order.
    let mut lengths: Vec<f64> = selected.iter().map(|iv| iv.length()).collect();
    lengths.sort_by(f64::total_cmp);
    let n = lengths.len();
    Ok(IntervalSummary {
        channel: first.channel,
        alpha: first.alpha,
        subset,
        n,
        min_len: lengths[0],
        mean_len: lengths.iter().sum::<f64>() / n as f64,
        max_len: lengths[n - 1],
    })
}

/// `".90"` for alpha = 0.10.
pub fn coverage_label(alpha: f64) -> String {
    let s = format!("{:.2}", 1.0 - alpha);
    s.strip_prefix('0').map(String::from).unwrap_or(s)
}

/// Writes the interval-length table: `Time, Min .90, Mean .90, Max .90, Min .70, ...`.
/// Each row holds one channel's summaries in `alphas` order.
pub fn write_summary_table<W: Write>(
    alphas: &[f64],
    rows: &[(Channel, Vec<IntervalSummary>)],
    mut sink: W,
) -> Result<()> {
    let mut header = vec!["Time".to_string()];
    for &a in alphas {
        let c = coverage_label(a);
        header.extend([format!("Min {c}"), format!("Mean {c}"), format!("Max {c}")]);
    }
    writeln!(sink, "{}", header.join(","))?;
    for (channel, sums) in rows {
        if sums.len() != alphas.len() {
            return Err(Error::Data(format!(
                "{} summaries for {} alpha levels",
                sums.len(),
                alphas.len()
            )));
        }
        let mut cells = vec![channel.time_label().to_string()];
        for s in sums {
            cells.extend([
                format!("{:.1}", s.min_len),
                format!("{:.1}", s.mean_len),
                format!("{:.1}", s.max_len),
            ]);
        }
        writeln!(sink, "{}", cells.join(","))?;
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AlphaCoverage {
    pub alpha: f64,
    pub n: usize,
    pub covered: usize,
    pub coverage: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CoverageReport {
    pub coverage: f64,
    pub n: usize,
    pub covered: usize,
    /// One entry per distinct alpha, ascending.
    pub by_alpha: Vec<AlphaCoverage>,
}

/// Fraction of truths inside their intervals (bounds inclusive).
pub fn coverage_audit(intervals: &[ForecastInterval], truths: &[f64]) -> Result<CoverageReport> {
    if intervals.len() != truths.len() {
        return Err(Error::Data(format!(
            "{} intervals but {} truths",
            intervals.len(),
            truths.len()
        )));
    }
    let mut by_alpha: Vec<AlphaCoverage> = Vec::new();
    let mut covered = 0;
    for (iv, &y) in intervals.iter().zip(truths) {
        let hit = iv.contains(y);
        covered += usize::from(hit);
        match by_alpha.iter_mut().find(|a| a.alpha == iv.alpha) {
            Some(a) => {
                a.n += 1;
                a.covered += usize::from(hit);
            }
            None => by_alpha.push(AlphaCoverage { alpha: iv.alpha, n: 1, covered: usize::from(hit), coverage: 0.0 }),
        }
    }
    for a in &mut by_alpha {
        a.coverage = a.covered as f64 / a.n as f64;
    }
    by_alpha.sort_by(|a, b| a.alpha.total_cmp(&b.alpha));
    let n = intervals.len();
    Ok(CoverageReport {
        coverage: if n == 0 { f64::NAN } else { covered as f64 / n as f64 },
        n,
        covered,
        by_alpha,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct FitSeriesRow {
    pub date: NaiveDate,
    pub observed: f64,
    pub fitted: f64,
    pub smoothed_observed: f64,
    pub smoothed_fitted: f64,
    pub q90_line: f64,
}

/// Observed and fitted series over time with loess smooths of each and the
/// observed 0.9 quantile. `from_month` keeps only rows from that month on
/// (smoothing still uses the whole series).
pub fn fit_series_export(
    dates: &[NaiveDate],
    observed: &[Option<f64>],
    fitted: &[Option<f64>],
    span: f64,
    degree: usize,
    from_month: Option<u32>,
) -> Result<Vec<FitSeriesRow>> {
    if dates.len() != observed.len() || dates.len() != fitted.len() {
        return Err(Error::Data("fit series inputs are not aligned".into()));
    }
    let mut t = Vec::new();
    let mut obs = Vec::new();
    let mut fit = Vec::new();
    let mut keep_dates = Vec::new();
    for i in 0..dates.len() {
        if let (Some(o), Some(f)) = (observed[i], fitted[i]) {
            t.push((dates[i] - dates[0]).num_days() as f64);
            obs.push(o);
            fit.push(f);
            keep_dates.push(dates[i]);
        }
    }
    let smooth_obs = fit_loess(&t, &obs, span, degree)?;
    let smooth_fit = fit_loess(&t, &fit, span, degree)?;
    let q90 = empirical_quantile(&obs, 0.9)?;
    Ok((0..t.len())
        .filter(|&i| from_month.is_none_or(|m| keep_dates[i].month() >= m))
        .map(|i| FitSeriesRow {
            date: keep_dates[i],
            observed: obs[i],
            fitted: fit[i],
            smoothed_observed: smooth_obs.predict_value(t[i]),
            smoothed_fitted: smooth_fit.predict_value(t[i]),
            q90_line: q90,
        })
        .collect())
}

pub fn write_fit_series<W: Write>(rows: &[FitSeriesRow], mut sink: W) -> Result<()> {
    writeln!(sink, "date,observed,fitted,smoothed_observed,smoothed_fitted,q90_line")?;
    for r in rows {
        writeln!(
            sink,
            "{},{},{},{},{},{}",
            r.date, r.observed, r.fitted, r.smoothed_observed, r.smoothed_fitted, r.q90_line
        )?;
    }
    Ok(())
}

/// Observed-versus-fitted scatter with a loess smooth of observed on fitted.
pub fn write_fit_scatter<W: Write>(observed: &[f64], fitted: &[f64], span: f64, degree: usize, mut sink: W) -> Result<()> {
    let smooth = fit_loess(fitted, observed, span, degree)?;
    writeln!(sink, "fitted,observed,smoothed")?;
    for (&f, &o) in fitted.iter().zip(observed) {
        writeln!(sink, "{f},{o},{}", smooth.predict_value(f))?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn iv(point: f64, len: f64) -> ForecastInterval {
        ForecastInterval {
            t_index: 0,
            date: None,
            channel: Channel::Pm,
            alpha: 0.1,
            point,
            lower: point - len / 2.0,
            upper: point + len / 2.0,
            extrapolated: false,
            warnings: vec![],
        }
    }

    #[test]
    fn single_interval_summary() {
        let s = summarize_intervals(&[iv(20.0, 5.0)], Subset::All).unwrap();
        assert_eq!((s.min_len, s.mean_len, s.max_len), (5.0, 5.0, 5.0));
        assert!(summarize_intervals(&[], Subset::All).is_err());
    }

    #[test]
    fn top_decile_keeps_ties() {
        let mut v: Vec<_> = (0..20).map(|i| iv(f64::from(i), 1.0)).collect();
        let s = summarize_intervals(&v, Subset::TopDecileByForecast).unwrap();
        assert_eq!(s.n, 2);
        v.push(iv(18.0, 3.0));
        let s = summarize_intervals(&v, Subset::TopDecileByForecast).unwrap();
        // 21 intervals -> k = 3: {19, 18, 18}.
        assert_eq!(s.n, 3);
        v.push(iv(18.0, 3.0));
        let s = summarize_intervals(&v, Subset::TopDecileByForecast).unwrap();
        assert_eq!(s.n, 4);
        assert_eq!(s.max_len, 3.0);
    }

    #[test]
    fn coverage_examples() {
        let v = vec![iv(10.0, 2.0), iv(20.0, 2.0)];
        assert_eq!(coverage_audit(&v, &[10.0, 20.0]).unwrap().coverage, 1.0);
        assert_eq!(coverage_audit(&v, &[12.0, 25.0]).unwrap().coverage, 0.0);
        assert_eq!(coverage_audit(&v, &[11.0, 21.0]).unwrap().coverage, 1.0);
        assert!(coverage_audit(&v, &[1.0]).is_err());
    }

    #[test]
    fn labels() {
        assert_eq!(coverage_label(0.10), ".90");
        assert_eq!(coverage_label(0.30), ".70");
        assert_eq!(coverage_label(0.05), ".95");
    }

    #[test]
    fn constant_observed_series() {
        let start = NaiveDate::from_ymd_opt(2020, 4, 1).unwrap();
        let dates: Vec<_> = (0..183).map(|i| start + chrono::Duration::days(i)).collect();
        let obs = vec![Some(25.0); 183];
        let fit: Vec<_> = (0..183).map(|i| Some(20.0 + f64::from(i) * 0.05)).collect();
        let rows = fit_series_export(&dates, &obs, &fit, 0.3, 2, None).unwrap();
        assert_eq!(rows.len(), 183);
        for r in &rows {
            assert!((r.smoothed_observed - 25.0).abs() < 1e-9);
            assert_eq!(r.q90_line, 25.0);
        }
        let summer = fit_series_export(&dates, &obs, &fit, 0.3, 2, Some(6)).unwrap();
        assert_eq!(summer.len(), 122);
        assert_eq!(summer[0].date, NaiveDate::from_ymd_opt(2020, 6, 1).unwrap());
    }
}
