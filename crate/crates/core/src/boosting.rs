//! Quantile gradient boosting.
//!
//! Each stage fits a regression tree to the check-loss subgradient, resets
//! every leaf to the tau-quantile of the raw residuals of its members and adds
//! the shrunken tree to the running fit. The number of stages used for
//! prediction is the argmin of the test-set loss curve.

use std::io::Write;

use log::warn;
use rand::seq::index::sample;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{check_fraction, Error, Result};
use crate::ingest::{SupervisedFrame, N_PREDICTORS};
use crate::tree::{grow, Matrix, Tree, TreeParams};

pub const ENSEMBLE_FORMAT_VERSION: u32 = 1;

/// Quantile level of the check loss, strictly inside (0, 1).
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd, Serialize, Deserialize)]
#[serde(try_from = "f64", into = "f64")]
pub struct QuantileTau(f64);

impl QuantileTau {
    pub fn new(tau: f64) -> Result<Self> {
        check_fraction("tau", tau)?;
        Ok(Self(tau))
    }

    pub fn value(self) -> f64 {
        self.0
    }
}

impl TryFrom<f64> for QuantileTau {
    type Error = Error;
    fn try_from(v: f64) -> Result<Self> {
        Self::new(v)
    }
}

impl From<QuantileTau> for f64 {
    fn from(t: QuantileTau) -> f64 {
        t.0
    }
}

/// Check (pinball) loss.
pub fn quantile_loss(y: f64, y_hat: f64, tau: f64) -> f64 {
    if y >= y_hat {
        tau * (y - y_hat)
    } else {
        (1.0 - tau) * (y_hat - y)
    }
}

/// Negative subgradient of the check loss with respect to `y_hat`; zero at the kink.
pub fn loss_subgradient(y: f64, y_hat: f64, tau: f64) -> f64 {
    if y > y_hat {
        tau
    } else if y < y_hat {
        tau - 1.0
    } else {
        0.0
    }
}

pub fn mean_quantile_loss(y: &[f64], y_hat: &[f64], tau: f64) -> f64 {
    if y.is_empty() {
        return 0.0;
    }
    y.iter().zip(y_hat).map(|(&a, &b)| quantile_loss(a, b, tau)).sum::<f64>() / y.len() as f64
}

/// Left-continuous inverse-CDF quantile: the `ceil(tau * n)`-th smallest value.
/// It minimizes the summed check loss over constants.
pub fn check_loss_quantile(values: &mut [f64], tau: f64) -> f64 {
    assert!(!values.is_empty());
    let n = values.len();
    let k = ((tau * n as f64 - 1e-9).ceil() as usize).clamp(1, n);
    let (_, v, _) = values.select_nth_unstable_by(k - 1, f64::total_cmp);
    *v
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BoostParams {
    pub tau: f64,
    pub shrinkage: f64,
    pub max_depth: usize,
    pub min_node: usize,
    pub max_trees: usize,
    /// Fraction of training rows drawn per stage; 1.0 disables subsampling.
    pub subsample: f64,
    pub seed: u64,
}

impl Default for BoostParams {
    fn default() -> Self {
        Self {
            tau: 0.90,
            shrinkage: 1e-4,
            max_depth: 6,
            min_node: 5,
            max_trees: 100_000,
            subsample: 1.0,
            seed: 0,
        }
    }
}

impl BoostParams {
    pub fn validate(&self) -> Result<()> {
        check_fraction("tau", self.tau)?;
        if !(self.shrinkage > 0.0 && self.shrinkage.is_finite()) {
            return Err(Error::InvalidParameter(format!("shrinkage {} must be > 0", self.shrinkage)));
        }
        if self.max_trees < 1 {
            return Err(Error::InvalidParameter("max_trees must be >= 1".into()));
        }
        if self.min_node < 1 {
            return Err(Error::InvalidParameter("min_node must be >= 1".into()));
        }
        if !(self.subsample > 0.0 && self.subsample <= 1.0) {
            return Err(Error::InvalidParameter(format!(
                "subsample {} outside (0, 1]",
                self.subsample
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoostedEnsemble {
    pub format_version: u32,
    pub init_value: f64,
    pub trees: Vec<Tree>,
    pub shrinkage: f64,
    pub tau: QuantileTau,
    /// Number of stages used by default; argmin of the test loss curve.
    pub best_iter: usize,
    /// Mean check loss after 0, 1, ..., len(trees) stages.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub train_loss_curve: Vec<f64>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub test_loss_curve: Vec<f64>,
}

impl BoostedEnsemble {
    /// `init + shrinkage * sum of the first n_iter trees`; `None` means `best_iter`.
    pub fn predict(&self, x: &[f64], n_iter: Option<usize>) -> Result<f64> {
        let n = n_iter.unwrap_or(self.best_iter);
        if n > self.trees.len() {
            return Err(Error::InvalidParameter(format!(
                "n_iter {n} exceeds the {} trees in the ensemble",
                self.trees.len()
            )));
        }
        Ok(self.predict_prefix(x, n))
    }

    /// Prediction at `best_iter`.
    pub fn predict_best(&self, x: &[f64]) -> f64 {
        self.predict_prefix(x, self.best_iter)
    }

    fn predict_prefix(&self, x: &[f64], n: usize) -> f64 {
        // Accumulation order must match the running fit kept during training.
        let mut f = self.init_value;
        for tree in &self.trees[..n] {
            f += self.shrinkage * tree.predict(x);
        }
        f
    }

    /// Drops the stages past `best_iter`; the loss curves are kept.
    pub fn truncate_to_best(&mut self) {
        self.trees.truncate(self.best_iter);
    }

    /// Writes one loss curve as `iteration,loss` rows.
    pub fn write_loss_curve<W: Write>(curve: &[f64], mut sink: W) -> Result<()> {
        writeln!(sink, "iteration,loss")?;
        for (m, l) in curve.iter().enumerate() {
            writeln!(sink, "{m},{l}")?;
        }
        Ok(())
    }
}

/// Trains on the complete rows of two frames; the test frame drives early stopping.
pub fn train(
    train_frame: &SupervisedFrame,
    test_frame: &SupervisedFrame,
    params: &BoostParams,
) -> Result<BoostedEnsemble> {
    let train_idx = train_frame.complete_indices();
    train_rows(train_frame, &train_idx, test_frame, params)
}

/// Trains on a chosen subset of training-frame rows.
pub fn train_rows(
    train_frame: &SupervisedFrame,
    train_idx: &[usize],
    test_frame: &SupervisedFrame,
    params: &BoostParams,
) -> Result<BoostedEnsemble> {
    let (x_train, y_train) = train_frame.design(train_idx);
    let (x_test, y_test) = test_frame.design(&test_frame.complete_indices());
    let x_train = Matrix::from_rows(&x_train)?;
    let x_test = if x_test.is_empty() {
        Matrix::new(Vec::new(), 0, N_PREDICTORS)?
    } else {
        Matrix::from_rows(&x_test)?
    };
    train_matrix(&x_train, &y_train, &x_test, &y_test, params)
}

pub fn train_matrix(
    x_train: &Matrix,
    y_train: &[f64],
    x_test: &Matrix,
    y_test: &[f64],
    params: &BoostParams,
) -> Result<BoostedEnsemble> {
    params.validate()?;
    let n = y_train.len();
    if n == 0 || x_train.n_rows() != n {
        return Err(Error::Data(format!(
            "training set has {} rows and {} responses",
            x_train.n_rows(),
            n
        )));
    }
    if x_test.n_rows() != y_test.len() || (x_test.n_rows() > 0 && x_test.n_cols() != x_train.n_cols()) {
        return Err(Error::Data("test design does not match the training design".into()));
    }
    if let Some(bad) = y_train.iter().chain(y_test).find(|v| !v.is_finite()) {
        return Err(Error::Data(format!("non-finite response {bad}")));
    }
    let tau = params.tau;
    let init_value = check_loss_quantile(&mut y_train.to_vec(), tau);
    let mut fit_train = vec![init_value; n];
    let mut fit_test = vec![init_value; y_test.len()];
    let mut train_curve = Vec::with_capacity(params.max_trees + 1);
    let mut test_curve = Vec::with_capacity(params.max_trees + 1);
    train_curve.push(mean_quantile_loss(y_train, &fit_train, tau));
    if !y_test.is_empty() {
        test_curve.push(mean_quantile_loss(y_test, &fit_test, tau));
    }

    let tree_params = TreeParams {
        max_depth: Some(params.max_depth),
        min_node: params.min_node,
        features_per_split: x_train.n_cols(),
        rng_seed: params.seed,
    };
    let all_rows: Vec<usize> = (0..n).collect();
    let n_sub = ((params.subsample * n as f64).round() as usize).clamp(1, n);
    let mut rng = ChaCha8Rng::seed_from_u64(params.seed);
    let mut gradient = vec![0.0; n];
    let mut residuals = Vec::new();
    let mut trees = Vec::with_capacity(params.max_trees);
    for _ in 0..params.max_trees {
        for i in 0..n {
            gradient[i] = loss_subgradient(y_train[i], fit_train[i], tau);
        }
        let rows = if n_sub < n {
            let mut r = sample(&mut rng, n, n_sub).into_vec();
            r.sort_unstable();
            r
        } else {
            all_rows.clone()
        };
        let mut tree = grow(x_train, &gradient, &rows, &tree_params)?;
        for leaf in tree.leaf_ids() {
            residuals.clear();
            residuals.extend(tree.leaf_members(leaf).iter().map(|&i| y_train[i] - fit_train[i]));
            let v = check_loss_quantile(&mut residuals, tau);
            tree.set_leaf_value(leaf, v);
        }
        tree.strip_members();
        for (i, f) in fit_train.iter_mut().enumerate() {
            *f += params.shrinkage * tree.predict(x_train.row(i));
        }
        for (i, f) in fit_test.iter_mut().enumerate() {
            *f += params.shrinkage * tree.predict(x_test.row(i));
        }
        train_curve.push(mean_quantile_loss(y_train, &fit_train, tau));
        if !y_test.is_empty() {
            test_curve.push(mean_quantile_loss(y_test, &fit_test, tau));
        }
        trees.push(tree);
    }

    let best_iter = if test_curve.is_empty() {
        warn!("test frame has no complete rows; using all {} trees", params.max_trees);
        params.max_trees
    } else {
        argmin_first(&test_curve)
    };
    Ok(BoostedEnsemble {
        format_version: ENSEMBLE_FORMAT_VERSION,
        init_value,
        trees,
        shrinkage: params.shrinkage,
        tau: QuantileTau::new(tau)?,
        best_iter,
        train_loss_curve: train_curve,
        test_loss_curve: test_curve,
    })
}

/// Index of the smallest value; ties go to the earliest index.
pub(crate) fn argmin_first(v: &[f64]) -> usize {
    let mut best = 0;
    for (i, &x) in v.iter().enumerate() {
        if x < v[best] {
            best = i;
        }
    }
    best
}
