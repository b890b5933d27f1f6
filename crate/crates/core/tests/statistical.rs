mod common;

use klemu::design::{lhs_sample, ParameterSpace, SeedRegistry};
use klemu::emulator::EmulatorConfig;
use klemu::metrics::ks_two_sample;
use klemu::simulators::{sample_trajectories, StochasticSimulator, ToyProcess3D};
use klemu::surrogates::{legendre_orthonormal, total_degree_indices, KernelFamily, SurrogateKind};
use klemu::validation::{summarize, test_point_evaluate};

type Toy = ToyProcess3D<f64>;

fn toy_samples(x: &[f64], seeds: impl Iterator<Item = u64>) -> Vec<f64> {
    let sim = Toy::new();
    seeds.map(|s| sim.evaluate(x, s).unwrap()).collect()
}

#[test]
fn toy_process_has_zero_mean() {
    let n = 100_000;
    for x in [[0.0, 0.0, 0.0], [1.0, 1.0, 1.0], [2.0, 0.5, 1.5]] {
        let v = toy_samples(&x, 0..n);
        let mean = v.iter().sum::<f64>() / n as f64;
        let std = (v.iter().map(|a| (a - mean).powi(2)).sum::<f64>() / (n - 1) as f64).sqrt();
        assert!(mean.abs() <= 5.0 * std / (n as f64).sqrt(), "{x:?}: mean {mean}, std {std}");
    }
}

#[test]
fn toy_covariance_matches_oracle() {
    let n = 100_000u64;
    let pairs = [
        ([0.5, 0.5, 0.5], [1.5, 1.5, 1.5]),
        ([1.0, 1.0, 1.0], [1.0, 1.0, 1.0]),
        ([0.0, 2.0, 2.0], [2.0, 0.0, 0.0]),
        ([0.2, 1.7, 0.9], [1.1, 0.3, 1.9]),
        ([2.0, 2.0, 2.0], [1.9, 1.8, 0.1]),
    ];
    for (x, y) in pairs {
        let (a, b) = (toy_samples(&x, 0..n), toy_samples(&y, 0..n));
        let (ma, mb) = (a.iter().sum::<f64>() / n as f64, b.iter().sum::<f64>() / n as f64);
        let c = a.iter().zip(&b).map(|(u, v)| (u - ma) * (v - mb)).sum::<f64>() / n as f64;
        let oracle = Toy::covariance(&x, &y).unwrap();
        assert!((c - oracle).abs() <= 0.05 * oracle.abs(), "{x:?},{y:?}: {c} vs {oracle}");
    }
}

#[test]
fn pce_basis_is_orthonormal_under_monte_carlo() {
    let dims = 2;
    let indices = total_degree_indices(dims, 3);
    let pts = ParameterSpace::cube(dims, -1.0, 1.0).unwrap().sample_uniform(100_000, 5);
    let psi: Vec<Vec<f64>> = pts
        .iter()
        .map(|t| {
            let tables: Vec<Vec<f64>> = t.iter().map(|&v| legendre_orthonormal(3, v)).collect();
            indices.iter().map(|a| a.iter().enumerate().map(|(d, &k)| tables[d][k as usize]).product()).collect()
        })
        .collect();
    let n = pts.len() as f64;
    for i in 0..indices.len() {
        for j in 0..=i {
            let g = psi.iter().map(|r| r[i] * r[j]).sum::<f64>() / n;
            let want = if i == j { 1.0 } else { 0.0 };
            assert!((g - want).abs() <= 3e-2, "<psi_{i}, psi_{j}> = {g}");
        }
    }
}

#[test]
fn kriging_emulator_passes_ks_against_direct_simulation() {
    let sim = Toy::new();
    let space = ParameterSpace::cube(3, 0.0, 2.0).unwrap();
    let x = [1.0, 1.0, 1.0];
    let reference = toy_samples(&x, 10_000_000..10_010_000);
    let cfg = EmulatorConfig::eigvec(SurrogateKind::Kriging(KernelFamily::Matern52));
    let builds = 50;
    let mut accepted = 0;
    for b in 0..builds {
        let doe = lhs_sample(&space, 30, 100 + b).unwrap();
        let data = sample_trajectories(&sim, &doe, &SeedRegistry::range(b * 1000, 50)).unwrap();
        let emu = cfg.fit(&data, &[]).unwrap();
        let (_, reject) = ks_two_sample(&emu.predict_samples(&x).unwrap(), &reference, 0.05).unwrap();
        accepted += usize::from(!reject);
    }
    assert!(accepted * 100 >= 80 * builds as usize, "{accepted}/{builds} builds accepted");
}

#[test]
fn accuracy_does_not_drop_as_trajectories_grow() {
    let sim = Toy::new();
    let space = ParameterSpace::cube(3, 0.0, 2.0).unwrap();
    let test = space.sample_uniform(500, 77);
    let cfg = EmulatorConfig::eigvec(SurrogateKind::Kriging(KernelFamily::Matern52));
    let doe_seeds = 1..=3u64;
    let score = |n: usize| {
        doe_seeds
            .clone()
            .map(|s| {
                let doe = lhs_sample(&space, 30, s).unwrap();
                let data = sample_trajectories(&sim, &doe, &SeedRegistry::consecutive(n)).unwrap();
                let emu = cfg.fit(&data, &[]).unwrap();
                summarize(&test_point_evaluate(&emu, &sim, &test, data.seeds(), 20, 0.05).unwrap()).hist_intersection.mean
            })
            .sum::<f64>()
            / 3.0
    };
    let scores: Vec<f64> = [50, 100, 1000].into_iter().map(score).collect();
    for w in scores.windows(2) {
        assert!(w[1] >= w[0] - 0.03, "{scores:?}");
    }
}
