//! End-to-end fit of both channels on a training season, and interval
//! forecasts over a labeled season.

use log::warn;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::boosting::{train_rows, BoostParams};
use crate::conformal::{
    calibrate_am, calibrate_pm, AmChannel, AmForecaster, ForecastInterval, PmChannel, PmForecaster, QrfParams,
    ScorePredictor,
};
use crate::derive_seed;
use crate::error::{Error, Result};
use crate::ingest::SupervisedFrame;
use crate::smoother::{fit_loess, pair_am_channel, DEFAULT_DEGREE, DEFAULT_SPAN, MIN_AM_PAIRS};

/// Seed streams derived from the master seed.
pub mod streams {
    pub const BOOSTING: u64 = 1;
    pub const PM_SCORES: u64 = 2;
    pub const AM_SCORES: u64 = 3;
    pub const HOLDOUT: u64 = 4;
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PipelineSettings {
    pub boost: BoostParams,
    pub loess_span: f64,
    pub loess_degree: usize,
    pub qrf: QrfParams,
    pub predictor: ScorePredictor,
    /// Hold out calibration blocks and widen intervals by the split-conformal quantile.
    pub calibrated: bool,
    /// Length in days of one holdout block.
    pub holdout_block: usize,
    /// One block in `holdout_every` is held out, chosen at random.
    pub holdout_every: usize,
    pub seed: u64,
}

impl Default for PipelineSettings {
    fn default() -> Self {
        Self {
            boost: BoostParams::default(),
            loess_span: DEFAULT_SPAN,
            loess_degree: DEFAULT_DEGREE,
            qrf: QrfParams::default(),
            predictor: ScorePredictor::Fitted,
            calibrated: false,
            holdout_block: 7,
            holdout_every: 3,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FittedPipeline {
    pub pm: PmChannel,
    pub am: Option<AmChannel>,
    /// Diurnal fit for every training-frame row that has predictors.
    pub pm_fitted: Vec<Option<f64>>,
    /// Nocturnal fit for every training-frame row that has a pair.
    pub am_fitted: Vec<Option<f64>>,
    pub holdout_rows: Vec<usize>,
    pub notes: Vec<String>,
}

impl FittedPipeline {
    pub fn restore(mut self) -> Self {
        self.pm.calibration = self.pm.calibration.restore();
        if let Some(am) = &mut self.am {
            am.calibration = am.calibration.clone().restore();
        }
        self
    }
}

/// Marks `round(n_blocks / every)` randomly chosen blocks of `block`
/// consecutive rows as held out. A fixed stride would tie the holdout to
/// particular parts of the season.
pub fn holdout_mask(n_rows: usize, block: usize, every: usize, seed: u64) -> Vec<bool> {
    let mut mask = vec![false; n_rows];
    if block == 0 || every == 0 || n_rows == 0 {
        return mask;
    }
    let n_blocks = n_rows.div_ceil(block);
    let n_hold = ((n_blocks as f64 / every as f64).round() as usize).clamp(1, n_blocks);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for b in rand::seq::index::sample(&mut rng, n_blocks, n_hold) {
        for m in &mut mask[b * block..((b + 1) * block).min(n_rows)] {
            *m = true;
        }
    }
    mask
}

pub fn fit_pipeline(
    train: &SupervisedFrame,
    test: &SupervisedFrame,
    settings: &PipelineSettings,
) -> Result<FittedPipeline> {
    let complete = train.complete_indices();
    let (proper, holdout): (Vec<usize>, Vec<usize>) = if settings.calibrated {
        if settings.holdout_every < 2 || settings.holdout_block < 1 {
            return Err(Error::InvalidParameter(
                "calibrated mode needs holdout_block >= 1 and holdout_every >= 2".into(),
            ));
        }
        let mask = holdout_mask(
            train.len(),
            settings.holdout_block,
            settings.holdout_every,
            derive_seed(settings.seed, streams::HOLDOUT),
        );
        complete.iter().partition(|&&i| !mask[i])
    } else {
        (complete.clone(), Vec::new())
    };
    let mut notes = Vec::new();

    let boost = BoostParams { seed: derive_seed(settings.seed, streams::BOOSTING), ..settings.boost };
    let ensemble = train_rows(train, &proper, test, &boost)?;
    let pm_fitted: Vec<Option<f64>> =
        train.rows.iter().map(|r| r.x_lagged.map(|x| ensemble.predict_best(&x))).collect();

    let pm_qrf = QrfParams { seed: derive_seed(settings.seed, streams::PM_SCORES), ..settings.qrf };
    let pm = calibrate_pm(
        train,
        &proper,
        ensemble,
        settings.predictor,
        settings.calibrated.then_some(holdout.as_slice()),
        &pm_qrf,
    )?;
    if pm.calibration.ar1.is_some() {
        notes.push(
            "PM residuals were serially dependent; scores are AR(1) innovations added to the raw point forecast without inverting the AR(1) step".into(),
        );
    }

    let pairs = pair_am_channel(train, &pm_fitted)?;
    let holdout_set: std::collections::BTreeSet<usize> = holdout.iter().copied().collect();
    let am_proper = pairs.subset(|row| !holdout_set.contains(&row));
    let am_holdout = pairs.subset(|row| holdout_set.contains(&row));
    let mut am_fitted = vec![None; train.len()];
    let am = if am_proper.len() < MIN_AM_PAIRS {
        warn!("only {} nocturnal pairs; AM channel skipped", am_proper.len());
        notes.push(format!("AM channel skipped: {} usable pairs (< {MIN_AM_PAIRS})", am_proper.len()));
        None
    } else {
        let loess = match fit_loess(&am_proper.x, &am_proper.y, settings.loess_span, settings.loess_degree) {
            Ok(l) => l,
            Err(Error::Data(msg)) => {
                warn!("AM channel skipped: {msg}");
                notes.push(format!("AM channel skipped: {msg}"));
                return Ok(FittedPipeline { pm, am: None, pm_fitted, am_fitted, holdout_rows: holdout, notes });
            }
            Err(e) => return Err(e),
        };
        for (k, &row) in pairs.rows.iter().enumerate() {
            am_fitted[row] = Some(loess.predict_value(pairs.x[k]));
        }
        let am_qrf = QrfParams { seed: derive_seed(settings.seed, streams::AM_SCORES), ..settings.qrf };
        let am = calibrate_am(&am_proper, loess, settings.calibrated.then_some(&am_holdout), &am_qrf)?;
        if am.calibration.ar1.is_some() {
            notes.push(
                "AM residuals were serially dependent; scores are AR(1) innovations added to the raw point forecast without inverting the AR(1) step".into(),
            );
        }
        Some(am)
    };
    for (label, cal) in [("PM", Some(&pm.calibration)), ("AM", am.as_ref().map(|a| &a.calibration))] {
        if let Some(cal) = cal {
            if !cal.whiteness.passed {
                notes.push(format!(
                    "{label} scores failed the whiteness test (Ljung-Box p = {:.4}); intervals carry a validity warning",
                    cal.whiteness.p_value
                ));
            }
        }
    }
    Ok(FittedPipeline { pm, am, pm_fitted, am_fitted, holdout_rows: holdout, notes })
}

/// Intervals paired with the observed value they should cover.
#[derive(Debug, Clone, PartialEq)]
pub struct LabeledIntervals {
    pub intervals: Vec<ForecastInterval>,
    pub truths: Vec<Option<f64>>,
}

impl LabeledIntervals {
    /// Intervals with an observed truth, and those truths.
    pub fn observed(&self) -> (Vec<ForecastInterval>, Vec<f64>) {
        self.intervals
            .iter()
            .zip(&self.truths)
            .filter_map(|(iv, y)| y.map(|y| (iv.clone(), y)))
            .unzip()
    }
}

/// PM intervals for every row with predictors.
pub fn forecast_pm_frame(model: &FittedPipeline, frame: &SupervisedFrame, alpha: f64) -> Result<LabeledIntervals> {
    let f = PmForecaster::new(&model.pm, alpha)?;
    let mut out = LabeledIntervals { intervals: Vec::new(), truths: Vec::new() };
    for r in &frame.rows {
        if let Some(x) = r.x_lagged {
            out.intervals.push(f.forecast(&x, r.t, Some(r.date))?);
            out.truths.push(r.y_pm);
        }
    }
    Ok(out)
}

/// AM intervals for day t built from the predictors of day t-1.
pub fn forecast_am_frame(model: &FittedPipeline, frame: &SupervisedFrame, alpha: f64) -> Result<LabeledIntervals> {
    let mut out = LabeledIntervals { intervals: Vec::new(), truths: Vec::new() };
    let Some(am) = &model.am else { return Ok(out) };
    let f = AmForecaster::new(&model.pm, am, alpha)?;
    for t in 1..frame.len() {
        if let Some(x) = frame.rows[t - 1].x_lagged {
            let r = &frame.rows[t];
            out.intervals.push(f.forecast(&x, r.t, Some(r.date))?);
            out.truths.push(r.y_am);
        }
    }
    Ok(out)
}
