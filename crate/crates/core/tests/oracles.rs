//! Frozen values checked against independent computations.

use std::ops::Range;

use rand::RngExt;

use cfwd::dynamics::{drift_term, sample_cluster_noise, SimConfig, Simulator};
use cfwd::monotone::{
    cluster_decompose, hs_norm_sq, inner_product, isotonic_project, materialize_potential, project,
    ClusterPartition, GeneralGridFunction, GridFunction, PotentialSpec,
};
use cfwd::observables::mean_and_std_err;
use cfwd::rng::replica_stream;

fn grid(v: &[f64]) -> GridFunction {
    GridFunction::new(v.to_vec()).unwrap()
}

/// `||pr_f||_HS^2` as the sum of `||pr_f e_i||^2` over the orthonormal basis
/// `e_i = sqrt(n) 1_{cell i}`.
fn hs_by_basis(f: &GridFunction) -> f64 {
    let n = f.n();
    (0..n)
        .map(|i| {
            let mut e = vec![0.0; n];
            e[i] = (n as f64).sqrt();
            let pe = project(f, &GeneralGridFunction::new(e).unwrap()).unwrap();
            inner_product(&pe, &pe).unwrap()
        })
        .sum()
}

#[test]
fn hs_norm_matches_dense_basis_sum() {
    let cases: [(&[f64], f64); 4] = [
        (&[0.0; 16], 1.0),
        (
            &[
                0., 0., 1., 1., 1., 2., 2., 2., 2., 3., 4., 4., 5., 5., 5., 6.,
            ],
            7.0,
        ),
        (
            &[
                0., 1., 2., 3., 4., 5., 6., 7., 8., 9., 10., 11., 12., 13., 14., 15.,
            ],
            16.0,
        ),
        (
            &[
                -1., -1., -1., -1., -1., -1., -1., -1., 2., 2., 2., 2., 2., 2., 2., 2.,
            ],
            2.0,
        ),
    ];
    for (values, expected) in cases {
        let f = grid(values);
        assert!((hs_by_basis(&f) - expected).abs() < 1e-12);
        assert!((hs_norm_sq(&f) - expected).abs() < 1e-12);
    }
}

#[test]
fn projection_is_blockwise_mean() {
    let f = grid(&[0., 0., 1., 1., 1., 3.]);
    let h = GeneralGridFunction::new(vec![1., 2., 3., 4., 8., 5.]).unwrap();
    assert_eq!(
        project(&f, &h).unwrap().values(),
        &[1.5, 1.5, 5.0, 5.0, 5.0, 5.0]
    );
}

/// Least-squares monotone fit by exhaustive search over block partitions,
/// each block taking the mean of its entries.
fn brute_isotonic(x: &[f64], w: &[f64]) -> Vec<f64> {
    let n = x.len();
    let mut best: Option<(f64, Vec<f64>)> = None;
    for cuts in 0u32..(1 << (n - 1)) {
        let mut blocks: Vec<Range<usize>> = Vec::new();
        let mut start = 0;
        for i in 1..n {
            if cuts & (1 << (i - 1)) != 0 {
                blocks.push(start..i);
                start = i;
            }
        }
        blocks.push(start..n);
        let means: Vec<f64> = blocks
            .iter()
            .map(|b| {
                let wt: f64 = w[b.clone()].iter().sum();
                b.clone().map(|i| x[i] * w[i]).sum::<f64>() / wt
            })
            .collect();
        if means.windows(2).any(|m| m[0] > m[1]) {
            continue;
        }
        let mut y = vec![0.0; n];
        for (b, m) in blocks.iter().zip(&means) {
            y[b.clone()].fill(*m);
        }
        let cost: f64 = (0..n).map(|i| w[i] * (y[i] - x[i]).powi(2)).sum();
        if best.as_ref().is_none_or(|(c, _)| cost < *c - 1e-15) {
            best = Some((cost, y));
        }
    }
    best.unwrap().1
}

#[test]
fn isotonic_matches_block_partition_search() {
    let mut rng = replica_stream(11, 0);
    for _ in 0..2000 {
        let n = rng.random_range(1..=7);
        let x: Vec<f64> = (0..n).map(|_| rng.random_range(-2.0..2.0)).collect();
        let w: Vec<f64> = (0..n).map(|_| rng.random_range(0.1..2.0)).collect();
        let y = isotonic_project(&GeneralGridFunction::new(x.clone()).unwrap(), &w).unwrap();
        for (a, b) in y.values().iter().zip(brute_isotonic(&x, &w)) {
            assert!((a - b).abs() < 1e-12, "x = {x:?}, w = {w:?}");
        }
    }
}

#[test]
fn isotonic_frozen_examples() {
    let iso = |x: &[f64], w: &[f64]| {
        isotonic_project(&GeneralGridFunction::new(x.to_vec()).unwrap(), w)
            .unwrap()
            .into_values()
    };
    assert_eq!(iso(&[3., 1., 2.], &[1., 1., 1.]), vec![2., 2., 2.]);
    assert_eq!(iso(&[2., 1.], &[0.75, 0.25]), vec![1.75, 1.75]);
    assert_eq!(
        iso(&[0., 2., 1., 3.], &[1., 1., 1., 1.]),
        vec![0., 1.5, 1.5, 3.]
    );
}

#[test]
fn levels_potential_on_grid() {
    let xi = materialize_potential(&PotentialSpec::levels(4).unwrap(), 8);
    assert_eq!(xi.values(), &[0., 0., 0.25, 0.25, 0.5, 0.5, 0.75, 0.75]);
    assert_eq!(PotentialSpec::levels(4).unwrap().distinct_level_count(8), 4);
    let d = drift_term(&GridFunction::constant(8, 1.0).unwrap(), &xi).unwrap();
    assert_eq!(
        d.values(),
        &[-0.375, -0.375, -0.125, -0.125, 0.125, 0.125, 0.375, 0.375]
    );
    let d = drift_term(&grid(&[0., 0., 0., 0., 1., 1., 1., 1.]), &xi).unwrap();
    assert_eq!(
        d.values(),
        &[-0.125, -0.125, 0.125, 0.125, -0.125, -0.125, 0.125, 0.125]
    );
}

#[test]
fn cluster_noise_covariance() {
    let partition = ClusterPartition::from_blocks(4, vec![0..1, 1..4]).unwrap();
    let dt = 1e-2;
    let draws = 100_000;
    let mut rng = replica_stream(21, 0);
    let (mut a, mut b) = (Vec::with_capacity(draws), Vec::with_capacity(draws));
    for _ in 0..draws {
        let z = sample_cluster_noise(&partition, dt, &mut rng);
        a.push(z[0]);
        b.push(z[1]);
    }
    let second = |v: &[f64]| v.iter().map(|x| x * x).sum::<f64>() / draws as f64;
    let (va, vb) = (dt / 0.25, dt / 0.75);
    let tol = |v: f64| 3.0 * v * (2.0 / draws as f64).sqrt();
    assert!((second(&a) - va).abs() < tol(va), "{} vs {va}", second(&a));
    assert!((second(&b) - vb).abs() < tol(vb), "{} vs {vb}", second(&b));
    let cov = a.iter().zip(&b).map(|(x, y)| x * y).sum::<f64>() / draws as f64;
    assert!(
        cov.abs() < 3.0 * (va * vb / draws as f64).sqrt(),
        "cov {cov}"
    );
}

#[test]
fn single_cell_is_brownian() {
    let mut config = SimConfig::new(1, 1e-2, 1.0, 31);
    config.snapshot_stride = 25;
    let sim = Simulator::new(config).unwrap();
    let replicas = 4000;
    let mut at_half = Vec::new();
    let mut at_end = Vec::new();
    for r in 0..replicas {
        let mut state = sim.init_replica(r);
        for _ in 0..100 {
            sim.step(&mut state).unwrap();
            if state.step_index == 50 {
                at_half.push(state.x.values()[0]);
            }
        }
        assert!((state.t - 1.0).abs() < 1e-12);
        at_end.push(state.x.values()[0]);
    }
    for (xs, t) in [(&at_half, 0.5), (&at_end, 1.0)] {
        let (mean, se) = mean_and_std_err(xs);
        assert!(mean.abs() < 3.0 * se, "mean {mean} at t = {t}");
        let var = xs.iter().map(|x| x * x).sum::<f64>() / xs.len() as f64;
        assert!(
            (var - t).abs() < 3.0 * t * (2.0 / xs.len() as f64).sqrt(),
            "var {var} at t = {t}"
        );
    }
}

#[test]
fn constant_potential_without_noise_is_stationary() {
    let mut config = SimConfig::new(8, 1e-3, 0.1, 1);
    config.noise_enabled = false;
    config.potential = PotentialSpec::constant(2.5);
    config.initial = cfwd::dynamics::InitialSpec::Identity;
    let sim = Simulator::new(config).unwrap();
    let mut state = sim.init_state();
    let start = state.x.clone();
    for _ in 0..100 {
        sim.step(&mut state).unwrap();
    }
    assert_eq!(state.x, start);
}

#[test]
fn drift_alone_splits_a_cluster_into_its_levels() {
    let mut config = SimConfig::new(16, 1e-3, 1e-3, 1);
    config.noise_enabled = false;
    config.potential = PotentialSpec::levels(4).unwrap();
    let sim = Simulator::new(config).unwrap();
    let mut state = sim.init_state();
    let report = sim.step(&mut state).unwrap();
    assert_eq!(report.merges, 0);
    assert_eq!(
        cluster_decompose(&state.x).blocks(),
        &[0..4, 4..8, 8..12, 12..16]
    );
    let expected = [-0.375e-3, -0.125e-3, 0.125e-3, 0.375e-3];
    for (i, v) in state.x.values().iter().enumerate() {
        assert!((v - expected[i / 4]).abs() < 1e-18);
    }
}
