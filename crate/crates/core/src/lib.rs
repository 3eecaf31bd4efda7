//! Two-week-ahead forecasts of high (tau = 0.90) diurnal and nocturnal air
//! temperatures from weather-station records, with adaptive conformal
//! prediction intervals.
//!
//! The diurnal (14:00) channel is a quantile gradient boosting fit on
//! predictors lagged by `lag_days`. The nocturnal (02:00) channel is a loess
//! smooth of the previous day's diurnal fit. Each channel's residuals are
//! whitened with an AR(1) fit when needed and modelled by a quantile
//! regression forest, whose score quantiles set the interval around a new
//! point forecast.

pub mod boosting;
pub mod cli;
pub mod conformal;
pub mod error;
pub mod evaluate;
pub mod forest;
pub mod ingest;
pub mod pipeline;
pub mod smoother;
pub mod synth;
pub mod tree;
pub mod tsdiag;

pub use error::{Error, Result};

/// SplitMix64 of `master` advanced by `stream`: independent per-stage and
/// per-tree seeds from one master seed.
pub fn derive_seed(master: u64, stream: u64) -> u64 {
    let mut z = master.wrapping_add(stream.wrapping_add(1).wrapping_mul(0x9E37_79B9_7F4A_7C15));
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}
