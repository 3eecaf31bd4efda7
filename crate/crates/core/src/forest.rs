//! Quantile regression forests.
//!
//! Trees are grown with ordinary variance splits. Quantiles come from the
//! weighted empirical distribution of the training responses sharing a leaf
//! with the query point, so the quantile level only matters at query time.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::derive_seed;
use crate::error::{Error, Result};
use crate::tree::{grow, Matrix, Tree, TreeParams};

pub const DEFAULT_N_TREES: usize = 500;
pub const DEFAULT_MIN_NODE: usize = 5;

/// `max(1, floor(p / 3))`.
pub fn default_features_per_split(p: usize) -> usize {
    (p / 3).max(1)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Forest {
    pub trees: Vec<Tree>,
    pub train_response: Vec<f64>,
    pub n_trees: usize,
    pub params: TreeParams,
    pub bootstrap: bool,
    pub seed: u64,
    /// Training indices ordered by response (stable on ties).
    #[serde(skip)]
    order: Vec<usize>,
}

/// Grows `n_trees` trees; tree `k` uses a seed derived from `(seed, k)`.
pub fn train_forest(
    x: &Matrix,
    y: &[f64],
    n_trees: usize,
    params: TreeParams,
    bootstrap: bool,
    seed: u64,
) -> Result<Forest> {
    let n = y.len();
    if n == 0 || x.n_rows() != n {
        return Err(Error::Data(format!(
            "forest needs matching non-empty inputs, got {} rows and {n} responses",
            x.n_rows()
        )));
    }
    if n_trees < 1 {
        return Err(Error::InvalidParameter("n_trees must be >= 1".into()));
    }
    if n < params.min_node {
        return Err(Error::Data(format!(
            "{n} training rows is fewer than min_node = {}",
            params.min_node
        )));
    }
    params.validate(x.n_cols())?;
    let trees = (0..n_trees)
        .into_par_iter()
        .map(|k| {
            let tree_seed = derive_seed(seed, k as u64);
            let rows: Vec<usize> = if bootstrap {
                let mut rng = ChaCha8Rng::seed_from_u64(tree_seed);
                let mut r: Vec<usize> = (0..n).map(|_| rng.random_range(0..n)).collect();
                r.sort_unstable();
                r
            } else {
                (0..n).collect()
            };
            let p = TreeParams { rng_seed: derive_seed(tree_seed, u64::MAX), ..params };
            grow(x, y, &rows, &p)
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(Forest {
        trees,
        train_response: y.to_vec(),
        n_trees,
        params,
        bootstrap,
        seed,
        order: response_order(y),
    })
}

fn response_order(y: &[f64]) -> Vec<usize> {
    let mut order: Vec<usize> = (0..y.len()).collect();
    order.sort_by(|&a, &b| y[a].total_cmp(&y[b]));
    order
}

impl Forest {
    /// Rebuilds derived state after deserialization.
    pub fn restore(mut self) -> Self {
        self.order = response_order(&self.train_response);
        self
    }

    /// Weight of each training response at `x`; sums to one.
    pub fn weights(&self, x: &[f64]) -> Vec<f64> {
        let mut w = vec![0.0; self.train_response.len()];
        let per_tree = 1.0 / self.trees.len() as f64;
        for tree in &self.trees {
            let members = tree.leaf_members(tree.route(x));
            let each = per_tree / members.len() as f64;
            for &i in members {
                w[i] += each;
            }
        }
        w
    }

    /// Smallest training response whose cumulative weight reaches `q`.
    pub fn predict_quantile(&self, x: &[f64], q: f64) -> f64 {
        self.predict_quantiles(x, &[q])[0]
    }

    /// Several quantile levels from one weight computation.
    pub fn predict_quantiles(&self, x: &[f64], qs: &[f64]) -> Vec<f64> {
        debug_assert!(qs.iter().all(|q| *q > 0.0 && *q < 1.0));
        let w = self.weights(x);
        let order = if self.order.len() == self.train_response.len() {
            std::borrow::Cow::Borrowed(&self.order)
        } else {
            std::borrow::Cow::Owned(response_order(&self.train_response))
        };
        qs.iter()
            .map(|&q| {
                let mut cum = 0.0;
                for &i in order.iter() {
                    cum += w[i];
                    if cum >= q - 1e-12 {
                        return self.train_response[i];
                    }
                }
                self.train_response[*order.last().expect("non-empty forest")]
            })
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn root_leaf_forest(y: &[f64]) -> Forest {
        let x = Matrix::column(&vec![0.0; y.len()]);
        let params = TreeParams { max_depth: Some(0), min_node: 1, features_per_split: 1, rng_seed: 0 };
        train_forest(&x, y, 1, params, false, 3).unwrap()
    }

    #[test]
    fn uniform_leaf_quantiles() {
        let y: Vec<f64> = (1..=10).rev().map(f64::from).collect();
        let f = root_leaf_forest(&y);
        assert_eq!(f.trees[0].nodes.len(), 1);
        assert_eq!(f.trees[0].leaf_members(0).len(), 10);
        assert_eq!(f.predict_quantile(&[0.0], 0.5), 5.0);
        assert_eq!(f.predict_quantile(&[0.0], 0.91), 10.0);
        assert_eq!(f.predict_quantile(&[0.0], 0.05), 1.0);
    }

    #[test]
    fn constant_response() {
        let x = Matrix::column(&(0..30).map(f64::from).collect::<Vec<_>>());
        let params = TreeParams { max_depth: None, min_node: 5, features_per_split: 1, rng_seed: 0 };
        let f = train_forest(&x, &[2.5; 30], 20, params, true, 1).unwrap();
        for t in &f.trees {
            for id in t.leaf_ids() {
                assert_eq!(t.leaf_value(id), 2.5);
            }
        }
        assert_eq!(f.predict_quantile(&[4.0], 0.01), 2.5);
        assert_eq!(f.predict_quantile(&[4.0], 0.99), 2.5);
    }

    #[test]
    fn weights_sum_to_one() {
        let xs: Vec<f64> = (0..40).map(|i| f64::from(i) * 0.37).collect();
        let ys: Vec<f64> = xs.iter().map(|v| v.sin()).collect();
        let params = TreeParams { max_depth: None, min_node: 3, features_per_split: 1, rng_seed: 0 };
        let f = train_forest(&Matrix::column(&xs), &ys, 50, params, true, 9).unwrap();
        let s: f64 = f.weights(&[5.0]).iter().sum();
        assert!((s - 1.0).abs() < 1e-12);
    }

    #[test]
    fn errors() {
        let params = TreeParams { max_depth: None, min_node: 5, features_per_split: 1, rng_seed: 0 };
        let x = Matrix::column(&[1.0, 2.0]);
        assert!(train_forest(&x, &[1.0, 2.0], 10, params, false, 0).is_err());
        let empty = Matrix::new(Vec::new(), 0, 1).unwrap();
        assert!(train_forest(&empty, &[], 10, params, false, 0).is_err());
    }

    #[test]
    fn restore_after_json() {
        let f = root_leaf_forest(&[3.0, 1.0, 2.0]);
        let json = serde_json::to_string(&f).unwrap();
        let back: Forest = serde_json::from_str::<Forest>(&json).unwrap().restore();
        assert_eq!(back.predict_quantile(&[0.0], 0.5), 2.0);
        assert_eq!(back, f);
    }
}
