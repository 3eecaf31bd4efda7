//! Binary regression trees grown by exhaustive variance-reduction split search.

use rand::seq::index::sample;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Dense row-major matrix of predictor values.
#[derive(Debug, Clone, PartialEq)]
pub struct Matrix {
    data: Vec<f64>,
    n_rows: usize,
    n_cols: usize,
}

impl Matrix {
    pub fn new(data: Vec<f64>, n_rows: usize, n_cols: usize) -> Result<Self> {
        if data.len() != n_rows * n_cols {
            return Err(Error::InvalidParameter(format!(
                "matrix data has {} entries, expected {n_rows}x{n_cols}",
                data.len()
            )));
        }
        Ok(Self { data, n_rows, n_cols })
    }

    pub fn from_rows<R: AsRef<[f64]>>(rows: &[R]) -> Result<Self> {
        let n_cols = rows.first().map_or(0, |r| r.as_ref().len());
        let mut data = Vec::with_capacity(rows.len() * n_cols);
        for r in rows {
            let r = r.as_ref();
            if r.len() != n_cols {
                return Err(Error::InvalidParameter("ragged matrix rows".into()));
            }
            data.extend_from_slice(r);
        }
        Ok(Self { data, n_rows: rows.len(), n_cols })
    }

    /// Single-column matrix.
    pub fn column(values: &[f64]) -> Self {
        Self { data: values.to_vec(), n_rows: values.len(), n_cols: 1 }
    }

    pub fn n_rows(&self) -> usize {
        self.n_rows
    }

    pub fn n_cols(&self) -> usize {
        self.n_cols
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.n_cols..(i + 1) * self.n_cols]
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.n_cols + j]
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TreeParams {
    /// `None` grows until the node-size or purity rules stop it.
    pub max_depth: Option<usize>,
    /// Minimum observations per terminal node.
    pub min_node: usize,
    /// Candidate features drawn per node; equal to the column count disables sampling.
    pub features_per_split: usize,
    pub rng_seed: u64,
}

impl TreeParams {
    pub fn validate(&self, n_features: usize) -> Result<()> {
        if self.min_node < 1 {
            return Err(Error::InvalidParameter("min_node must be >= 1".into()));
        }
        if self.features_per_split < 1 || self.features_per_split > n_features {
            return Err(Error::InvalidParameter(format!(
                "features_per_split = {} outside 1..={n_features}",
                self.features_per_split
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum Node {
    Split { feature: usize, threshold: f64, left: usize, right: usize },
    Leaf {
        value: f64,
        #[serde(default, skip_serializing_if = "Vec::is_empty")]
        members: Vec<usize>,
    },
}

/// A fitted tree. Node 0 is the root; children are referenced by index.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Tree {
    pub nodes: Vec<Node>,
    pub n_features: usize,
}

impl Tree {
    /// A single-leaf tree.
    pub fn constant(value: f64, n_features: usize) -> Self {
        Self { nodes: vec![Node::Leaf { value, members: Vec::new() }], n_features }
    }

    /// Index of the leaf `x` lands in. Goes left iff `x[feature] <= threshold`.
    pub fn route(&self, x: &[f64]) -> usize {
        let mut id = 0;
        loop {
            match self.nodes[id] {
                Node::Split { feature, threshold, left, right } => {
                    id = if x[feature] <= threshold { left } else { right };
                }
                Node::Leaf { .. } => return id,
            }
        }
    }

    pub fn predict(&self, x: &[f64]) -> f64 {
        self.leaf_value(self.route(x))
    }

    pub fn leaf_value(&self, id: usize) -> f64 {
        match &self.nodes[id] {
            Node::Leaf { value, .. } => *value,
            Node::Split { .. } => panic!("node {id} is not a leaf"),
        }
    }

    pub fn leaf_members(&self, id: usize) -> &[usize] {
        match &self.nodes[id] {
            Node::Leaf { members, .. } => members,
            Node::Split { .. } => panic!("node {id} is not a leaf"),
        }
    }

    pub fn set_leaf_value(&mut self, id: usize, v: f64) {
        match &mut self.nodes[id] {
            Node::Leaf { value, .. } => *value = v,
            Node::Split { .. } => panic!("node {id} is not a leaf"),
        }
    }

    /// Ids of all leaves in node order.
    pub fn leaf_ids(&self) -> Vec<usize> {
        (0..self.nodes.len()).filter(|&i| matches!(self.nodes[i], Node::Leaf { .. })).collect()
    }

    pub fn depth(&self) -> usize {
        fn go(nodes: &[Node], id: usize) -> usize {
            match nodes[id] {
                Node::Leaf { .. } => 0,
                Node::Split { left, right, .. } => 1 + go(nodes, left).max(go(nodes, right)),
            }
        }
        go(&self.nodes, 0)
    }

    /// Drops stored member indices once they are no longer needed.
    pub fn strip_members(&mut self) {
        for n in &mut self.nodes {
            if let Node::Leaf { members, .. } = n {
                *members = Vec::new();
            }
        }
    }
}

/// The best split found at a node.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SplitChoice {
    pub feature: usize,
    pub threshold: f64,
    /// Reduction in the sum of squared deviations.
    pub gain: f64,
}

/// Grows a tree on `rows` (duplicates allowed, e.g. bootstrap draws).
pub fn grow(x: &Matrix, target: &[f64], rows: &[usize], params: &TreeParams) -> Result<Tree> {
    if rows.is_empty() {
        return Err(Error::InvalidParameter("cannot grow a tree on an empty row subset".into()));
    }
    if target.len() != x.n_rows() {
        return Err(Error::InvalidParameter(format!(
            "target has {} entries for {} matrix rows",
            target.len(),
            x.n_rows()
        )));
    }
    params.validate(x.n_cols())?;
    for &r in rows {
        if !target[r].is_finite() || x.row(r).iter().any(|v| !v.is_finite()) {
            return Err(Error::Data(format!("row {r} has a non-finite value")));
        }
    }
    let mut builder = Builder {
        x,
        target,
        params,
        rng: ChaCha8Rng::seed_from_u64(params.rng_seed),
        nodes: Vec::new(),
        scratch: Vec::with_capacity(rows.len()),
    };
    builder.build(rows.to_vec(), 0);
    Ok(Tree { nodes: builder.nodes, n_features: x.n_cols() })
}

struct Builder<'a> {
    x: &'a Matrix,
    target: &'a [f64],
    params: &'a TreeParams,
    rng: ChaCha8Rng,
    nodes: Vec<Node>,
    scratch: Vec<(f64, f64)>,
}

impl Builder<'_> {
    fn build(&mut self, rows: Vec<usize>, depth: usize) -> usize {
        let id = self.nodes.len();
        let n = rows.len();
        let mean = rows.iter().map(|&r| self.target[r]).sum::<f64>() / n as f64;
        let depth_ok = self.params.max_depth.is_none_or(|d| depth < d);
        if !depth_ok || n < 2 * self.params.min_node {
            self.nodes.push(Node::Leaf { value: mean, members: rows });
            return id;
        }
        let split = self.best_split(&rows, mean);
        let Some(split) = split else {
            self.nodes.push(Node::Leaf { value: mean, members: rows });
            return id;
        };
        let (left_rows, right_rows): (Vec<usize>, Vec<usize>) =
            rows.into_iter().partition(|&r| self.x.get(r, split.feature) <= split.threshold);
        self.nodes.push(Node::Split {
            feature: split.feature,
            threshold: split.threshold,
            left: usize::MAX,
            right: usize::MAX,
        });
        let left = self.build(left_rows, depth + 1);
        let right = self.build(right_rows, depth + 1);
        if let Node::Split { left: l, right: r, .. } = &mut self.nodes[id] {
            *l = left;
            *r = right;
        }
        id
    }

    fn candidate_features(&mut self) -> Vec<usize> {
        let p = self.x.n_cols();
        let k = self.params.features_per_split;
        if k >= p {
            return (0..p).collect();
        }
        let mut f = sample(&mut self.rng, p, k).into_vec();
        f.sort_unstable();
        f
    }

    fn best_split(&mut self, rows: &[usize], mean: f64) -> Option<SplitChoice> {
        let sse: f64 = rows.iter().map(|&r| (self.target[r] - mean).powi(2)).sum();
        // Sampling happens even for pure nodes so the RNG stream depends only on tree shape.
        let features = self.candidate_features();
        if sse <= 0.0 {
            return None;
        }
        let min_node = self.params.min_node;
        let n = rows.len();
        let mut best: Option<SplitChoice> = None;
        for f in features {
            self.scratch.clear();
            self.scratch
                .extend(rows.iter().map(|&r| (self.x.get(r, f), self.target[r] - mean)));
            self.scratch.sort_by(|a, b| a.0.total_cmp(&b.0));
            let total: f64 = self.scratch.iter().map(|p| p.1).sum();
            let mut left_sum = 0.0;
            for i in 1..n {
                left_sum += self.scratch[i - 1].1;
                if i < min_node || n - i < min_node {
                    continue;
                }
                let (lo, hi) = (self.scratch[i - 1].0, self.scratch[i].0);
                if lo >= hi {
                    continue;
                }
                let right_sum = total - left_sum;
                let gain = left_sum * left_sum / i as f64 + right_sum * right_sum / (n - i) as f64
                    - total * total / n as f64;
                if best.is_none_or(|b| gain > b.gain) {
                    best = Some(SplitChoice { feature: f, threshold: midpoint(lo, hi), gain });
                }
            }
        }
        best.filter(|b| b.gain > 1e-12 * sse)
    }
}

/// Midpoint of two consecutive distinct values, kept strictly below `hi`.
fn midpoint(lo: f64, hi: f64) -> f64 {
    let m = lo + (hi - lo) / 2.0;
    if m >= hi {
        lo
    } else {
        m
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn params(depth: Option<usize>, min_node: usize, fps: usize) -> TreeParams {
        TreeParams { max_depth: depth, min_node, features_per_split: fps, rng_seed: 7 }
    }

    #[test]
    fn constant_target_is_single_leaf() {
        let x = Matrix::column(&[1.0, 2.0, 3.0, 4.0, 5.0, 6.0]);
        let tree = grow(&x, &[3.5; 6], &[0, 1, 2, 3, 4, 5], &params(None, 1, 1)).unwrap();
        assert_eq!(tree.nodes.len(), 1);
        assert_eq!(tree.leaf_value(0), 3.5);
    }

    #[test]
    fn step_function_splits_between_two_and_three() {
        let x = Matrix::column(&[1.0, 2.0, 3.0, 4.0]);
        let y = [0.0, 0.0, 10.0, 10.0];
        let tree = grow(&x, &y, &[0, 1, 2, 3], &params(Some(1), 1, 1)).unwrap();
        let Node::Split { feature, threshold, left, right } = tree.nodes[0] else {
            panic!("expected a root split")
        };
        assert_eq!(feature, 0);
        assert_eq!(threshold, 2.5);
        assert_eq!(tree.leaf_value(left), 0.0);
        assert_eq!(tree.leaf_value(right), 10.0);
        assert_eq!(tree.route(&[2.5]), left);
        assert_eq!(tree.route(&[2.6]), right);
        assert_eq!(tree.leaf_members(left), &[0, 1]);
    }

    #[test]
    fn depth_zero_is_mean_leaf() {
        let x = Matrix::column(&[1.0, 2.0, 3.0, 4.0]);
        let tree = grow(&x, &[1.0, 2.0, 3.0, 6.0], &[0, 1, 2, 3], &params(Some(0), 1, 1)).unwrap();
        assert_eq!(tree.nodes.len(), 1);
        assert_eq!(tree.leaf_value(0), 3.0);
        assert_eq!(tree.route(&[100.0]), 0);
    }

    #[test]
    fn min_node_is_respected() {
        let xs: Vec<f64> = (0..20).map(f64::from).collect();
        let ys: Vec<f64> = xs.iter().map(|v| v * v).collect();
        let rows: Vec<usize> = (0..20).collect();
        let tree = grow(&Matrix::column(&xs), &ys, &rows, &params(None, 5, 1)).unwrap();
        for id in tree.leaf_ids() {
            assert!(tree.leaf_members(id).len() >= 5);
        }
    }

    #[test]
    fn errors() {
        let x = Matrix::column(&[1.0]);
        assert!(grow(&x, &[1.0], &[], &params(None, 1, 1)).is_err());
        assert!(grow(&x, &[1.0], &[0], &params(None, 0, 1)).is_err());
        assert!(grow(&x, &[1.0], &[0], &params(None, 1, 2)).is_err());
        assert!(grow(&x, &[f64::NAN], &[0], &params(None, 1, 1)).is_err());
    }

    #[test]
    fn equal_gain_prefers_lowest_feature() {
        // Both columns separate the target identically.
        let x = Matrix::from_rows(&[[1.0, 1.0], [2.0, 2.0], [3.0, 3.0], [4.0, 4.0]]).unwrap();
        let tree = grow(&x, &[0.0, 0.0, 1.0, 1.0], &[0, 1, 2, 3], &params(Some(1), 1, 2)).unwrap();
        assert!(matches!(tree.nodes[0], Node::Split { feature: 0, .. }));
    }

    #[test]
    fn midpoint_stays_below_upper_value() {
        let lo = 1.0_f64;
        let hi = f64::from_bits(lo.to_bits() + 1);
        assert!(midpoint(lo, hi) < hi);
        assert!(midpoint(lo, hi) >= lo);
    }
}
