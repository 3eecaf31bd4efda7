//! Independent oracles shared by the integration and acceptance suites.
#![allow(dead_code)]

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Smallest sorted response y_(k) with k/n >= j/100, in integer arithmetic.
pub fn inverse_cdf_percent(y: &[f64], j: usize) -> f64 {
    let mut s = y.to_vec();
    s.sort_by(f64::total_cmp);
    let n = s.len();
    let k = (1..=n).find(|&k| 100 * k >= j * n).unwrap();
    s[k - 1]
}

/// Local fit at `x0` solved as a weighted least-squares problem by SVD.
pub fn wls_oracle(x: &[f64], y: &[f64], x0: f64, span: f64, degree: usize) -> f64 {
    let n = x.len();
    let k = (span * n as f64 - 1e-9).ceil() as usize;
    let mut d: Vec<f64> = x.iter().map(|v| (v - x0).abs()).collect();
    d.sort_by(f64::total_cmp);
    let d_max = d[k - 1];
    let rows: Vec<(f64, f64, f64)> = x
        .iter()
        .zip(y)
        .filter_map(|(&xi, &yi)| {
            let u = (xi - x0).abs() / d_max;
            (u < 1.0).then(|| (xi - x0, yi, (1.0 - u.powi(3)).powi(3)))
        })
        .collect();
    let a = DMatrix::from_fn(rows.len(), degree + 1, |i, j| rows[i].2.sqrt() * rows[i].0.powi(j as i32));
    let b = DVector::from_fn(rows.len(), |i, _| rows[i].2.sqrt() * rows[i].1);
    let beta = a.svd(true, true).solve(&b, 1e-14).unwrap();
    beta[0]
}

pub fn noisy_quadratic(seed: u64, n: usize) -> (Vec<f64>, Vec<f64>) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let x: Vec<f64> = (0..n).map(|_| rng.random::<f64>() * 10.0).collect();
    let y = x.iter().map(|v| 0.3 * v * v - 2.0 * v + 1.0 + rng.random::<f64>() - 0.5).collect();
    (x, y)
}
