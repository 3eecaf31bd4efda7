//! Local polynomial regression with tricube weights (loess, no robustness
//! iterations), and pairing of the nocturnal channel with the previous day's
//! fitted diurnal value.

use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::ingest::SupervisedFrame;

pub const DEFAULT_SPAN: f64 = 0.75;
pub const DEFAULT_DEGREE: usize = 2;
/// Fewest (previous-day fit, 02:00 observation) pairs the nocturnal channel will fit on.
pub const MIN_AM_PAIRS: usize = 10;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LoessModel {
    /// Training inputs, sorted ascending.
    pub x: Vec<f64>,
    pub y: Vec<f64>,
    pub span: f64,
    pub degree: usize,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LoessPrediction {
    pub value: f64,
    /// The query fell outside the training range and was extended linearly.
    pub extrapolated: bool,
}

pub fn fit_loess(x: &[f64], y: &[f64], span: f64, degree: usize) -> Result<LoessModel> {
    if !(1..=2).contains(&degree) {
        return Err(Error::InvalidParameter(format!("loess degree {degree} not in {{1, 2}}")));
    }
    if !(span > 0.0 && span <= 1.0) {
        return Err(Error::InvalidParameter(format!("loess span {span} outside (0, 1]")));
    }
    if x.len() != y.len() || x.len() < degree + 2 {
        return Err(Error::Data(format!(
            "loess needs equal-length inputs with at least {} points, got {} and {}",
            degree + 2,
            x.len(),
            y.len()
        )));
    }
    if x.iter().chain(y).any(|v| !v.is_finite()) {
        return Err(Error::Data("loess inputs must be finite".into()));
    }
    let mut pairs: Vec<(f64, f64)> = x.iter().copied().zip(y.iter().copied()).collect();
    pairs.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.total_cmp(&b.1)));
    let distinct = 1 + pairs.windows(2).filter(|w| w[0].0 < w[1].0).count();
    if distinct < degree + 2 {
        return Err(Error::Data(format!(
            "loess needs {} distinct x values, found {distinct}",
            degree + 2
        )));
    }
    if neighborhood_size(span, pairs.len()) < degree + 1 {
        return Err(Error::InvalidParameter(format!(
            "span {span} over {} points leaves fewer than {} neighbors",
            pairs.len(),
            degree + 1
        )));
    }
    let (x, y) = pairs.into_iter().unzip();
    Ok(LoessModel { x, y, span, degree })
}

/// `ceil(span * n)`, guarded against representation error.
fn neighborhood_size(span: f64, n: usize) -> usize {
    ((span * n as f64 - 1e-9).ceil() as usize).clamp(1, n)
}

impl LoessModel {
    pub fn predict(&self, x0: f64) -> LoessPrediction {
        let (lo, hi) = (self.x[0], self.x[self.x.len() - 1]);
        if x0 < lo || x0 > hi {
            let anchor = if x0 < lo { lo } else { hi };
            let (value, slope) = self.local_fit(anchor);
            return LoessPrediction { value: value + slope * (x0 - anchor), extrapolated: true };
        }
        LoessPrediction { value: self.local_fit(x0).0, extrapolated: false }
    }

    pub fn predict_value(&self, x0: f64) -> f64 {
        self.predict(x0).value
    }

    /// Local weighted polynomial at `x0`: (value, slope) there.
    fn local_fit(&self, x0: f64) -> (f64, f64) {
        let n = self.x.len();
        let k = neighborhood_size(self.span, n);
        let dist: Vec<f64> = self.x.iter().map(|&xi| (xi - x0).abs()).collect();
        let mut sorted = dist.clone();
        let (_, &mut d_max, _) = sorted.select_nth_unstable_by(k - 1, f64::total_cmp);
        // Points tied with the k-th distance are all in the neighborhood.
        let mut neigh = Vec::with_capacity(k + 4);
        for ((&d, &xi), &yi) in dist.iter().zip(&self.x).zip(&self.y) {
            if d <= d_max {
                let w = if d_max > 0.0 { tricube(d / d_max) } else { 1.0 };
                if w > 0.0 {
                    neigh.push((xi - x0, yi, w));
                }
            }
        }
        let scale = if d_max > 0.0 { d_max } else { 1.0 };
        let mut degree = self.degree;
        loop {
            if let Some(beta) = weighted_poly_fit(&neigh, scale, degree) {
                let slope = if degree >= 1 { beta[1] / scale } else { 0.0 };
                return (beta[0], slope);
            }
            if degree == 0 {
                // Every neighbor sits at one location with zero weight sum; fall back to nearest y.
                let i = (0..n)
                    .min_by(|&a, &b| (self.x[a] - x0).abs().total_cmp(&(self.x[b] - x0).abs()))
                    .expect("non-empty model");
                return (self.y[i], 0.0);
            }
            degree -= 1;
        }
    }

    /// Writes `(x, smoothed)` rows on the given grid.
    pub fn write_curve<W: Write>(&self, grid: &[f64], mut sink: W) -> Result<()> {
        writeln!(sink, "x,smoothed")?;
        for &g in grid {
            writeln!(sink, "{g},{}", self.predict_value(g))?;
        }
        Ok(())
    }
}

fn tricube(u: f64) -> f64 {
    if u >= 1.0 {
        0.0
    } else {
        let t = 1.0 - u * u * u;
        t * t * t
    }
}

/// Solves the weighted normal equations in the scaled offset `u / scale`.
/// Returns `None` when the local design is singular.
fn weighted_poly_fit(points: &[(f64, f64, f64)], scale: f64, degree: usize) -> Option<Vec<f64>> {
    let m = degree + 1;
    let mut a = vec![vec![0.0; m + 1]; m];
    for &(u, y, w) in points {
        let v = u / scale;
        let mut pow = [1.0; 3];
        for j in 1..m {
            pow[j] = pow[j - 1] * v;
        }
        for r in 0..m {
            for c in 0..m {
                a[r][c] += w * pow[r] * pow[c];
            }
            a[r][m] += w * pow[r] * y;
        }
    }
    let norm = a.iter().map(|row| row[..m].iter().map(|v| v.abs()).sum::<f64>()).fold(0.0, f64::max);
    if norm == 0.0 {
        return None;
    }
    // Gaussian elimination with partial pivoting.
    for col in 0..m {
        let piv = (col..m).max_by(|&i, &j| a[i][col].abs().total_cmp(&a[j][col].abs()))?;
        if a[piv][col].abs() <= 1e-12 * norm {
            return None;
        }
        a.swap(col, piv);
        for r in col + 1..m {
            let f = a[r][col] / a[col][col];
            for c in col..=m {
                a[r][c] -= f * a[col][c];
            }
        }
    }
    let mut beta = vec![0.0; m];
    for r in (0..m).rev() {
        let mut s = a[r][m];
        for c in r + 1..m {
            s -= a[r][c] * beta[c];
        }
        beta[r] = s / a[r][r];
    }
    Some(beta)
}

/// Inputs for the nocturnal smoother.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct AmPairs {
    /// Fitted 14:00 value of day t-1.
    pub x: Vec<f64>,
    /// Observed 02:00 value of day t.
    pub y: Vec<f64>,
    /// Frame row index of day t.
    pub rows: Vec<usize>,
}

impl AmPairs {
    pub fn len(&self) -> usize {
        self.x.len()
    }

    pub fn is_empty(&self) -> bool {
        self.x.is_empty()
    }

    pub fn subset(&self, keep: impl Fn(usize) -> bool) -> AmPairs {
        let mut out = AmPairs::default();
        for k in 0..self.len() {
            if keep(self.rows[k]) {
                out.x.push(self.x[k]);
                out.y.push(self.y[k]);
                out.rows.push(self.rows[k]);
            }
        }
        out
    }
}

/// Pairs the fitted 14:00 value of day t-1 with the observed 02:00 value of day t.
/// `pm_fitted` is aligned with the frame rows.
pub fn pair_am_channel(frame: &SupervisedFrame, pm_fitted: &[Option<f64>]) -> Result<AmPairs> {
    if pm_fitted.len() != frame.len() {
        return Err(Error::Data(format!(
            "{} fitted values for {} frame rows",
            pm_fitted.len(),
            frame.len()
        )));
    }
    let mut pairs = AmPairs::default();
    for t in 1..frame.len() {
        if let (Some(prev), Some(am)) = (pm_fitted[t - 1], frame.rows[t].y_am) {
            pairs.x.push(prev);
            pairs.y.push(am);
            pairs.rows.push(t);
        }
    }
    Ok(pairs)
}
