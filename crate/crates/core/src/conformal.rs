//! Adaptive conformal prediction intervals for the diurnal (PM) and nocturnal
//! (AM) channels.
//!
//! Calibration turns training residuals into nonconformity scores (whitened
//! with an AR(1) fit when they are serially dependent) and trains a quantile
//! regression forest of the scores on a single predictor. A forecast adds the
//! forest's `alpha/2` and `1 - alpha/2` score quantiles, queried at the point
//! forecast, to the point forecast.
//!
//! With a holdout set attached, the interval is additionally widened by the
//! split-conformal quantile of the holdout conformity scores
//! `max(lower - y, y - upper)`.

use std::fmt;
use std::io::{Read, Write};
use std::str::FromStr;

use chrono::NaiveDate;
use serde::{Deserialize, Serialize};

use crate::boosting::BoostedEnsemble;
use crate::error::{check_fraction, Error, Result};
use crate::forest::{default_features_per_split, train_forest, Forest, DEFAULT_MIN_NODE, DEFAULT_N_TREES};
use crate::ingest::{SupervisedFrame, N_PREDICTORS};
use crate::smoother::{AmPairs, LoessModel, MIN_AM_PAIRS};
use crate::tree::{Matrix, TreeParams};
use crate::tsdiag::{whiten, Ar1Model, WhitenessReport};

/// Warning attached to intervals whose scores failed the whiteness test.
pub const WARN_NOT_WHITE: &str = "scores_not_white";

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Channel {
    #[serde(rename = "PM")]
    Pm,
    #[serde(rename = "AM")]
    Am,
}

impl Channel {
    pub fn label(self) -> &'static str {
        match self {
            Channel::Pm => "PM",
            Channel::Am => "AM",
        }
    }

    /// Row label used in the interval-length summary table.
    pub fn time_label(self) -> &'static str {
        match self {
            Channel::Pm => "2PM",
            Channel::Am => "2AM",
        }
    }
}

impl fmt::Display for Channel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.label())
    }
}

impl FromStr for Channel {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "PM" | "pm" => Ok(Channel::Pm),
            "AM" | "am" => Ok(Channel::Am),
            _ => Err(Error::Data(format!("unknown channel '{s}'"))),
        }
    }
}

/// Predictor of the score forest at training time. Forecasts always query it
/// at the point forecast.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum ScorePredictor {
    #[default]
    Fitted,
    /// Observed 14:00 response; only meaningful for the PM channel.
    Observed,
}

impl FromStr for ScorePredictor {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "fitted" => Ok(ScorePredictor::Fitted),
            "observed" => Ok(ScorePredictor::Observed),
            _ => Err(Error::Config(format!("score predictor must be 'fitted' or 'observed', got '{s}'"))),
        }
    }
}

impl fmt::Display for ScorePredictor {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ScorePredictor::Fitted => "fitted",
            ScorePredictor::Observed => "observed",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct QrfParams {
    pub n_trees: usize,
    pub min_node: usize,
    /// `None` uses `max(1, p / 3)`.
    pub features_per_split: Option<usize>,
    pub max_depth: Option<usize>,
    pub bootstrap: bool,
    pub seed: u64,
}

impl Default for QrfParams {
    fn default() -> Self {
        Self {
            n_trees: DEFAULT_N_TREES,
            min_node: DEFAULT_MIN_NODE,
            features_per_split: None,
            max_depth: None,
            bootstrap: true,
            seed: 0,
        }
    }
}

/// Held-out (point forecast, residual) pairs for the calibrated mode.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HoldoutSet {
    pub inputs: Vec<f64>,
    pub residuals: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChannelCalibration {
    pub channel: Channel,
    pub predictor: ScorePredictor,
    pub scores: Vec<f64>,
    /// Score-forest predictor value for each score.
    pub score_inputs: Vec<f64>,
    pub score_model: Forest,
    pub whiteness: WhitenessReport,
    pub raw_whiteness: WhitenessReport,
    pub ar1: Option<Ar1Model>,
    pub holdout: Option<HoldoutSet>,
    /// Range of the fitted values the base model produced during calibration.
    pub fitted_range: (f64, f64),
}

impl ChannelCalibration {
    pub fn restore(mut self) -> Self {
        self.score_model = self.score_model.restore();
        self
    }

    pub fn validity_warnings(&self) -> Vec<String> {
        if self.whiteness.passed {
            Vec::new()
        } else {
            vec![WARN_NOT_WHITE.to_string()]
        }
    }

    /// Score quantiles `(q_{alpha/2}, q_{1-alpha/2})` at a forest input.
    pub fn score_quantiles(&self, input: f64, alpha: f64) -> (f64, f64) {
        let q = self.score_model.predict_quantiles(&[input], &[alpha / 2.0, 1.0 - alpha / 2.0]);
        (q[0], q[1])
    }

    /// Split-conformal widening at level `alpha`; zero without a holdout set,
    /// infinite when the holdout set is too small for the level.
    pub fn adjustment(&self, alpha: f64) -> f64 {
        let Some(h) = &self.holdout else { return 0.0 };
        let m = h.residuals.len();
        if m == 0 {
            return f64::INFINITY;
        }
        let mut e: Vec<f64> = h
            .inputs
            .iter()
            .zip(&h.residuals)
            .map(|(&input, &r)| {
                let (lo, hi) = self.score_quantiles(input, alpha);
                (lo - r).max(r - hi)
            })
            .collect();
        let k = ((1.0 - alpha) * (m as f64 + 1.0) - 1e-9).ceil() as usize;
        if k > m {
            return f64::INFINITY;
        }
        e.sort_by(f64::total_cmp);
        e[k.max(1) - 1]
    }

    /// Interval around `point` given a precomputed adjustment.
    pub fn interval(&self, point: f64, alpha: f64, adjustment: f64) -> (f64, f64) {
        let (lo, hi) = self.score_quantiles(point, alpha);
        let (mut lower, mut upper) = (point + lo - adjustment, point + hi + adjustment);
        if lower > upper {
            let mid = 0.5 * (lower + upper);
            lower = mid;
            upper = mid;
        }
        (lower, upper)
    }
}

/// Whitens `observed - fitted` and trains the score forest.
pub fn build_calibration(
    channel: Channel,
    fitted: &[f64],
    observed: &[f64],
    predictor: ScorePredictor,
    holdout: Option<HoldoutSet>,
    qrf: &QrfParams,
) -> Result<ChannelCalibration> {
    if fitted.len() != observed.len() {
        return Err(Error::Data("fitted and observed series differ in length".into()));
    }
    if channel == Channel::Am && predictor == ScorePredictor::Observed {
        return Err(Error::InvalidParameter(
            "the observed score predictor applies to the PM channel only".into(),
        ));
    }
    let residuals: Vec<f64> = observed.iter().zip(fitted).map(|(y, f)| y - f).collect();
    let w = whiten(&residuals)?;
    let offset = w.offset();
    let source = match predictor {
        ScorePredictor::Fitted => fitted,
        ScorePredictor::Observed => observed,
    };
    let score_inputs = source[offset..].to_vec();
    let params = TreeParams {
        max_depth: qrf.max_depth,
        min_node: qrf.min_node,
        features_per_split: qrf.features_per_split.unwrap_or(default_features_per_split(1)),
        rng_seed: qrf.seed,
    };
    let score_model =
        train_forest(&Matrix::column(&score_inputs), &w.scores, qrf.n_trees, params, qrf.bootstrap, qrf.seed)?;
    let fitted_range = fitted
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), &v| (a.min(v), b.max(v)));
    Ok(ChannelCalibration {
        channel,
        predictor,
        scores: w.scores,
        score_inputs,
        score_model,
        whiteness: w.report,
        raw_whiteness: w.raw_report,
        ar1: w.model,
        holdout,
        fitted_range,
    })
}

/// The diurnal channel: boosting ensemble plus its calibration.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PmChannel {
    pub ensemble: BoostedEnsemble,
    pub calibration: ChannelCalibration,
}

/// The nocturnal channel: loess on the previous day's diurnal fit plus its calibration.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AmChannel {
    pub loess: LoessModel,
    pub calibration: ChannelCalibration,
}

/// Calibrates the PM channel on `rows` (frame order), optionally holding out `holdout_rows`.
pub fn calibrate_pm(
    frame: &SupervisedFrame,
    rows: &[usize],
    ensemble: BoostedEnsemble,
    predictor: ScorePredictor,
    holdout_rows: Option<&[usize]>,
    qrf: &QrfParams,
) -> Result<PmChannel> {
    let (x, y) = frame.design(rows);
    let fitted: Vec<f64> = x.iter().map(|xi| ensemble.predict_best(xi)).collect();
    let holdout = holdout_rows.map(|h| {
        let (hx, hy) = frame.design(h);
        let inputs: Vec<f64> = hx.iter().map(|xi| ensemble.predict_best(xi)).collect();
        let residuals = hy.iter().zip(&inputs).map(|(y, f)| y - f).collect();
        HoldoutSet { inputs, residuals }
    });
    let calibration = build_calibration(Channel::Pm, &fitted, &y, predictor, holdout, qrf)?;
    Ok(PmChannel { ensemble, calibration })
}

/// Calibrates the AM channel from the paired series the loess model was fitted on.
pub fn calibrate_am(
    pairs: &AmPairs,
    loess: LoessModel,
    holdout: Option<&AmPairs>,
    qrf: &QrfParams,
) -> Result<AmChannel> {
    if pairs.len() < MIN_AM_PAIRS {
        return Err(Error::Data(format!(
            "nocturnal channel has {} usable pairs, needs at least {MIN_AM_PAIRS}",
            pairs.len()
        )));
    }
    let fitted: Vec<f64> = pairs.x.iter().map(|&v| loess.predict_value(v)).collect();
    let holdout = holdout.map(|h| {
        let inputs: Vec<f64> = h.x.iter().map(|&v| loess.predict_value(v)).collect();
        let residuals = h.y.iter().zip(&inputs).map(|(y, f)| y - f).collect();
        HoldoutSet { inputs, residuals }
    });
    let calibration =
        build_calibration(Channel::Am, &fitted, &pairs.y, ScorePredictor::Fitted, holdout, qrf)?;
    Ok(AmChannel { loess, calibration })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ForecastInterval {
    pub t_index: usize,
    pub date: Option<NaiveDate>,
    pub channel: Channel,
    pub alpha: f64,
    pub point: f64,
    pub lower: f64,
    pub upper: f64,
    pub extrapolated: bool,
    pub warnings: Vec<String>,
}

impl ForecastInterval {
    pub fn length(&self) -> f64 {
        self.upper - self.lower
    }

    pub fn contains(&self, y: f64) -> bool {
        self.lower <= y && y <= self.upper
    }
}

/// Forecasts sharing a channel and level; the conformal adjustment is computed once.
pub struct PmForecaster<'a> {
    pm: &'a PmChannel,
    alpha: f64,
    adjustment: f64,
}

impl<'a> PmForecaster<'a> {
    pub fn new(pm: &'a PmChannel, alpha: f64) -> Result<Self> {
        check_fraction("alpha", alpha)?;
        Ok(Self { pm, alpha, adjustment: pm.calibration.adjustment(alpha) })
    }

    pub fn forecast(&self, x_new: &[f64], t_index: usize, date: Option<NaiveDate>) -> Result<ForecastInterval> {
        check_dimension(x_new)?;
        let point = self.pm.ensemble.predict_best(x_new);
        let (lower, upper) = self.pm.calibration.interval(point, self.alpha, self.adjustment);
        Ok(ForecastInterval {
            t_index,
            date,
            channel: Channel::Pm,
            alpha: self.alpha,
            point,
            lower,
            upper,
            extrapolated: false,
            warnings: self.pm.calibration.validity_warnings(),
        })
    }
}

pub struct AmForecaster<'a> {
    pm: &'a PmChannel,
    am: &'a AmChannel,
    alpha: f64,
    adjustment: f64,
}

impl<'a> AmForecaster<'a> {
    pub fn new(pm: &'a PmChannel, am: &'a AmChannel, alpha: f64) -> Result<Self> {
        check_fraction("alpha", alpha)?;
        Ok(Self { pm, am, alpha, adjustment: am.calibration.adjustment(alpha) })
    }

    pub fn forecast(&self, x_new: &[f64], t_index: usize, date: Option<NaiveDate>) -> Result<ForecastInterval> {
        check_dimension(x_new)?;
        let pm_point = self.pm.ensemble.predict_best(x_new);
        let smoothed = self.am.loess.predict(pm_point);
        let (lower, upper) = self.am.calibration.interval(smoothed.value, self.alpha, self.adjustment);
        Ok(ForecastInterval {
            t_index,
            date,
            channel: Channel::Am,
            alpha: self.alpha,
            point: smoothed.value,
            lower,
            upper,
            extrapolated: smoothed.extrapolated,
            warnings: self.am.calibration.validity_warnings(),
        })
    }
}

fn check_dimension(x: &[f64]) -> Result<()> {
    if x.len() != N_PREDICTORS {
        return Err(Error::Data(format!(
            "predictor vector has {} entries, expected {N_PREDICTORS}",
            x.len()
        )));
    }
    Ok(())
}

/// PM interval for one new case.
pub fn forecast_pm(pm: &PmChannel, x_new: &[f64], alpha: f64) -> Result<ForecastInterval> {
    PmForecaster::new(pm, alpha)?.forecast(x_new, 0, None)
}

/// AM interval for one new case: loess of the PM point forecast plus score quantiles.
pub fn forecast_am(pm: &PmChannel, am: &AmChannel, x_new: &[f64], alpha: f64) -> Result<ForecastInterval> {
    AmForecaster::new(pm, am, alpha)?.forecast(x_new, 0, None)
}

/// Per-query levels `global_alpha / m` for `m` simultaneous coverage queries.
pub fn bonferroni_adjust(alphas: &[f64], global_alpha: f64) -> Vec<f64> {
    let m = alphas.len().max(1) as f64;
    alphas.iter().map(|_| global_alpha / m).collect()
}

/// Probability statement about the truth exceeding `threshold`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Exceedance {
    Probability(f64),
    /// Threshold strictly inside the interval: only the range is known.
    Indeterminate { low: f64, high: f64 },
}

/// One-sided reading of a symmetric-tail interval. A threshold equal to the
/// lower bound counts as at or below it.
pub fn lower_bound_exceedance(interval: &ForecastInterval, threshold: f64) -> Exceedance {
    let tail = interval.alpha / 2.0;
    if threshold <= interval.lower {
        Exceedance::Probability(1.0 - tail)
    } else if threshold > interval.upper {
        Exceedance::Probability(tail)
    } else {
        Exceedance::Indeterminate { low: tail, high: 1.0 - tail }
    }
}

const INTERVAL_HEADER: [&str; 9] = [
    "t_index",
    "date",
    "channel",
    "alpha",
    "point",
    "lower",
    "upper",
    "extrapolated",
    "validity_warning",
];

pub fn write_intervals_csv<W: Write>(intervals: &[ForecastInterval], sink: W) -> Result<()> {
    let mut w = csv::WriterBuilder::new().terminator(csv::Terminator::Any(b'\n')).from_writer(sink);
    w.write_record(INTERVAL_HEADER)?;
    for iv in intervals {
        w.write_record([
            iv.t_index.to_string(),
            iv.date.map(|d| d.to_string()).unwrap_or_default(),
            iv.channel.label().to_string(),
            iv.alpha.to_string(),
            iv.point.to_string(),
            iv.lower.to_string(),
            iv.upper.to_string(),
            iv.extrapolated.to_string(),
            iv.warnings.join(";"),
        ])?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_intervals_csv<R: Read>(source: R) -> Result<Vec<ForecastInterval>> {
    let mut reader = csv::Reader::from_reader(source);
    let mut out = Vec::new();
    for (i, rec) in reader.records().enumerate() {
        let rec = rec?;
        let bad = |what: &str| Error::Data(format!("interval row {}: bad {what}", i + 1));
        if rec.len() != INTERVAL_HEADER.len() {
            return Err(bad("column count"));
        }
        let num = |k: usize, what: &str| rec[k].parse::<f64>().map_err(|_| bad(what));
        out.push(ForecastInterval {
            t_index: rec[0].parse().map_err(|_| bad("t_index"))?,
            date: if rec[1].is_empty() {
                None
            } else {
                Some(NaiveDate::parse_from_str(&rec[1], "%Y-%m-%d").map_err(|_| bad("date"))?)
            },
            channel: rec[2].parse()?,
            alpha: num(3, "alpha")?,
            point: num(4, "point")?,
            lower: num(5, "lower")?,
            upper: num(6, "upper")?,
            extrapolated: rec[7].parse().map_err(|_| bad("extrapolated"))?,
            warnings: rec[8].split(';').filter(|s| !s.is_empty()).map(String::from).collect(),
        });
    }
    Ok(out)
}
