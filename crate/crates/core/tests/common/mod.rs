#![allow(dead_code)]

use klemu::design::SeedRegistry;
use klemu::empirical::TrajectoryMatrix;
use klemu::linalg::Matrix;
use klemu::simulators::{normal_quantile, open_uniform, seed_stream};

/// `m × n` trajectory matrix of standard normals scaled per row, with
/// coordinates drawn uniformly in `[0,1]^dims`.
pub fn random_trajectories(m: usize, n: usize, dims: usize, seed: u64) -> TrajectoryMatrix<f64> {
    let mut rng = seed_stream(seed);
    let coords: Vec<Vec<f64>> = (0..m).map(|_| (0..dims).map(|_| open_uniform(&mut rng)).collect()).collect();
    let values = Matrix::from_fn(m, n, |j, _| (1.0 + j as f64 * 0.1) * normal_quantile(open_uniform(&mut rng)) + 3.0);
    TrajectoryMatrix::new(values, coords, SeedRegistry::consecutive(n)).unwrap()
}

pub fn normals(n: usize, seed: u64) -> Vec<f64> {
    let mut rng = seed_stream(seed);
    (0..n).map(|_| normal_quantile(open_uniform(&mut rng))).collect()
}

/// Largest `|a − b|` relative to the largest `|b|`.
pub fn max_rel_err(a: &Matrix<f64>, b: &Matrix<f64>) -> f64 {
    a.max_abs_diff(b) / b.max_abs().max(f64::MIN_POSITIVE)
}
