//! Synthetic station seasons with a known conditional quantile.
//!
//! The 14:00 temperature of day `t` is `m(x) + sd(t) * u_t`, where `x` holds
//! the predictors observed `lag_days` earlier plus the day counter, and `u` is
//! a stationary unit-variance Gaussian AR(1) process. The 02:00 temperature of
//! day `t` is linear in the true diurnal quantile of day `t - 1` plus its own
//! AR(1) noise. Both conditional quantiles are therefore available in closed
//! form.

use chrono::{Duration, NaiveDate};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, Normal};

use crate::derive_seed;
use crate::error::{Error, Result};
use crate::ingest::{build_frame, SupervisedFrame, WeatherRecord, AM_HOUR, PM_HOUR};

const PRESSURE_MEAN: f64 = 1015.0;
const PRESSURE_SD: f64 = 6.0;
const HUMIDITY_MEAN: f64 = 60.0;
const HUMIDITY_SD: f64 = 12.0;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScenarioSpec {
    pub n_days: usize,
    pub lag_days: u32,
    pub train_start: NaiveDate,
    pub test_start: NaiveDate,
    pub base_temp: f64,
    /// Peak-to-edge size of the half-sine seasonal shape.
    pub seasonal_amplitude: f64,
    pub trend_per_day: f64,
    /// Weight on the lagged temperature anomaly.
    pub persistence: f64,
    /// Effect of one standard deviation of lagged pressure anomaly.
    pub pressure_effect: f64,
    /// Effect of one standard deviation of lagged humidity anomaly (subtracted).
    pub humidity_effect: f64,
    pub noise_sd: f64,
    /// Noise sd is `noise_sd * (1 + heteroscedasticity * season(t))`.
    pub heteroscedasticity: f64,
    pub noise_phi: f64,
    pub am_intercept: f64,
    pub am_slope: f64,
    pub am_noise_sd: f64,
    pub am_noise_phi: f64,
    /// Quantile of the diurnal law the 02:00 temperature is tied to.
    pub tau: f64,
}

impl Default for ScenarioSpec {
    fn default() -> Self {
        Self {
            n_days: 183,
            lag_days: 14,
            train_start: NaiveDate::from_ymd_opt(2020, 4, 1).expect("valid date"),
            test_start: NaiveDate::from_ymd_opt(2021, 4, 1).expect("valid date"),
            base_temp: 16.0,
            seasonal_amplitude: 9.0,
            trend_per_day: 0.0,
            persistence: 0.3,
            pressure_effect: 1.0,
            humidity_effect: 1.2,
            noise_sd: 2.0,
            heteroscedasticity: 0.6,
            noise_phi: 0.5,
            am_intercept: 2.0,
            am_slope: 0.6,
            am_noise_sd: 1.0,
            am_noise_phi: 0.4,
            tau: 0.90,
        }
    }
}

impl ScenarioSpec {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidParameter(m));
        if self.n_days < 20 {
            return bad(format!("n_days = {} is below 20", self.n_days));
        }
        if self.noise_sd < 0.0 || self.am_noise_sd < 0.0 || self.heteroscedasticity < 0.0 {
            return bad("noise scales must be non-negative".into());
        }
        if self.noise_phi.abs() >= 1.0 || self.am_noise_phi.abs() >= 1.0 {
            return bad("AR(1) noise coefficients must satisfy |phi| < 1".into());
        }
        if !(self.tau > 0.0 && self.tau < 1.0) {
            return bad(format!("tau = {} outside (0, 1)", self.tau));
        }
        let all = [
            self.base_temp,
            self.seasonal_amplitude,
            self.trend_per_day,
            self.persistence,
            self.pressure_effect,
            self.humidity_effect,
            self.am_intercept,
            self.am_slope,
        ];
        if all.iter().any(|v| !v.is_finite()) {
            return bad("scenario coefficients must be finite".into());
        }
        Ok(())
    }

    /// Half-sine seasonal shape in [0, 1] over the analysis window.
    pub fn season(&self, t: f64) -> f64 {
        let u = ((t - 1.0) / (self.n_days as f64 - 1.0)).clamp(0.0, 1.0);
        (std::f64::consts::PI * u).sin()
    }

    /// Expected temperature of day `t` absent weather anomalies.
    pub fn baseline(&self, t: f64) -> f64 {
        self.base_temp + self.seasonal_amplitude * self.season(t) + self.trend_per_day * t
    }

    pub fn pm_sd(&self, t: f64) -> f64 {
        self.noise_sd * (1.0 + self.heteroscedasticity * self.season(t))
    }
}

/// Closed-form conditional quantiles of a scenario.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScenarioOracle {
    pub spec: ScenarioSpec,
}

fn z(q: f64) -> f64 {
    Normal::new(0.0, 1.0).expect("standard normal").inverse_cdf(q)
}

impl ScenarioOracle {
    /// Conditional mean of the 14:00 temperature given a lagged predictor vector.
    pub fn pm_mean(&self, x: &[f64]) -> f64 {
        let s = &self.spec;
        let t = x[7];
        let lag_t = t - f64::from(s.lag_days);
        s.baseline(t)
            + s.persistence * (x[2] - s.baseline(lag_t))
            + s.pressure_effect * (x[3] - PRESSURE_MEAN) / PRESSURE_SD
            - s.humidity_effect * (x[6] - HUMIDITY_MEAN) / HUMIDITY_SD
    }

    pub fn pm_quantile(&self, x: &[f64], q: f64) -> f64 {
        self.pm_mean(x) + self.spec.pm_sd(x[7]) * z(q)
    }

    /// Quantile of the 02:00 temperature of day t given the predictors of day t-1.
    pub fn am_quantile(&self, x_prev: &[f64], q: f64) -> f64 {
        let s = &self.spec;
        s.am_intercept + s.am_slope * self.pm_quantile(x_prev, s.tau) + s.am_noise_sd * z(q)
    }
}

#[derive(Debug, Clone)]
pub struct SynthData {
    pub train_records: Vec<WeatherRecord>,
    pub test_records: Vec<WeatherRecord>,
    pub train: SupervisedFrame,
    pub test: SupervisedFrame,
    pub oracle: ScenarioOracle,
}

/// Two independent seasons from the same law plus the quantile oracle.
pub fn synth_generate(spec: &ScenarioSpec, seed: u64) -> Result<SynthData> {
    spec.validate()?;
    let oracle = ScenarioOracle { spec: spec.clone() };
    let season = |start: NaiveDate, stream: u64| -> Result<(Vec<WeatherRecord>, SupervisedFrame)> {
        let records = simulate_season(&oracle, start, derive_seed(seed, stream));
        let end = start + Duration::days(spec.n_days as i64 - 1);
        let frame = build_frame(&records, spec.lag_days, start, end)?;
        Ok((records, frame))
    };
    let (train_records, train) = season(spec.train_start, 0)?;
    let (test_records, test) = season(spec.test_start, 1)?;
    Ok(SynthData { train_records, test_records, train, test, oracle })
}

struct Ar1Noise {
    phi: f64,
    state: f64,
}

impl Ar1Noise {
    fn new(phi: f64, rng: &mut ChaCha8Rng) -> Self {
        Self { phi, state: rng.sample(StandardNormal) }
    }

    fn step(&mut self, rng: &mut ChaCha8Rng) -> f64 {
        let e: f64 = rng.sample(StandardNormal);
        self.state = self.phi * self.state + (1.0 - self.phi * self.phi).sqrt() * e;
        self.state
    }
}

fn simulate_season(oracle: &ScenarioOracle, start: NaiveDate, seed: u64) -> Vec<WeatherRecord> {
    let s = &oracle.spec;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let lag = s.lag_days as i64;
    let mut pm_noise = Ar1Noise::new(s.noise_phi, &mut rng);
    let mut am_noise = Ar1Noise::new(s.am_noise_phi, &mut rng);
    let mut pressure = Ar1Noise::new(0.8, &mut rng);
    let mut humidity = Ar1Noise::new(0.7, &mut rng);
    // Predictor vectors (day counter included) indexed by day offset from the first simulated day.
    let mut x_hist: Vec<[f64; 8]> = Vec::new();
    let mut records = Vec::new();
    let first = 1 - lag;
    for d in first..=s.n_days as i64 {
        let t = d as f64;
        let date = start + Duration::days(d - 1);
        let p = PRESSURE_MEAN + PRESSURE_SD * pressure.step(&mut rng);
        let rh = (HUMIDITY_MEAN + HUMIDITY_SD * humidity.step(&mut rng)).clamp(5.0, 100.0);
        let wind_speed = (3.0 + 1.5 * rng.sample::<f64, _>(StandardNormal)).abs();
        let wind_dir = rng.random_range(0.0..360.0);
        let u = pm_noise.step(&mut rng);
        let idx = (d - first) as usize;
        let temp = if d >= 1 {
            let x = &x_hist[idx - lag as usize];
            oracle.pm_mean(x) + s.pm_sd(t) * u
        } else {
            s.baseline(t) + s.pm_sd(t) * u
        };
        let dew = temp - (100.0 - rh) / 5.0;
        let vis = (25_000.0 - 150.0 * (rh - HUMIDITY_MEAN) + 2_000.0 * rng.sample::<f64, _>(StandardNormal)).max(0.0);
        let v = am_noise.step(&mut rng);
        let am_temp = if d >= 2 {
            s.am_intercept + s.am_slope * oracle.pm_quantile(&x_hist[idx - 1 - lag as usize], s.tau)
                + s.am_noise_sd * v
        } else {
            s.am_intercept + s.am_slope * s.baseline(t) + s.am_noise_sd * v
        };
        let x = [wind_dir, wind_speed, temp, p, vis, dew, rh, t + lag as f64];
        x_hist.push(x);
        let am_rh = (rh + 15.0).min(100.0);
        records.push(WeatherRecord {
            date,
            hour: AM_HOUR,
            wind_dir: Some(wind_dir),
            wind_speed: Some(wind_speed * 0.6),
            air_temp: Some(am_temp),
            pressure: Some(p),
            visibility: Some(vis),
            dew_point: Some(am_temp - (100.0 - am_rh) / 5.0),
            rel_humidity: Some(am_rh),
        });
        records.push(WeatherRecord {
            date,
            hour: PM_HOUR,
            wind_dir: Some(wind_dir),
            wind_speed: Some(wind_speed),
            air_temp: Some(temp),
            pressure: Some(p),
            visibility: Some(vis),
            dew_point: Some(dew),
            rel_humidity: Some(rh),
        });
    }
    records
}
