use cfwd::dynamics::{InitialSpec, RunOptions, SimConfig, Simulator};
use cfwd::monotone::{hs_norm_sq, make_test_function, PotentialSpec};
use cfwd::observables::{
    compensated_martingale_h, pair_qv_estimate, particle_count, sup_count_statistic,
    supermartingale_test, HProbe, ProbeSet, SupermartingaleOptions, TrajectoryRecord, Verdict,
};

fn probe(id: &str, u: f64, v: f64, n: usize) -> HProbe {
    HProbe {
        id: id.into(),
        h: make_test_function(u, v, n).unwrap(),
    }
}

fn run(config: SimConfig, replica: u64, probes: ProbeSet) -> TrajectoryRecord {
    Simulator::new(config)
        .unwrap()
        .run_with(&RunOptions {
            replica,
            probes,
            corrupt_at_step: None,
        })
        .unwrap()
}

fn leveled(n: usize, t_end: f64) -> SimConfig {
    let mut c = SimConfig::new(n, 1e-3, t_end, 8);
    c.initial = InitialSpec::Identity;
    c.potential = PotentialSpec::levels(4).unwrap();
    c.store_snapshots = true;
    c
}

#[test]
fn compensator_routes_agree_at_stride_one() {
    let config = leveled(16, 0.2);
    let xi = Simulator::new(config.clone()).unwrap().xi_grid().clone();
    let p = probe("p", 0.25, 0.5, 16);
    let record = run(
        config,
        0,
        ProbeSet {
            pairs: vec![],
            tests: vec![p.clone()],
        },
    );
    let series = record.h_probe("p").unwrap();
    let points = compensated_martingale_h(&record, &p.h, &xi).unwrap();
    assert_eq!(points.len(), series.mh.len());
    for (k, pt) in points.iter().enumerate() {
        assert_eq!(pt.xh, series.xh[k]);
        assert!((pt.mh - series.mh[k]).abs() < 1e-12);
        assert!((pt.qvh - series.qvh[k]).abs() < 1e-12);
    }
}

#[test]
fn zero_potential_leaves_probe_uncompensated() {
    let mut config = SimConfig::new(16, 1e-3, 0.1, 3);
    config.initial = InitialSpec::Identity;
    let record = run(
        config,
        0,
        ProbeSet {
            pairs: vec![],
            tests: vec![probe("p", 0.0, 0.5, 16)],
        },
    );
    let s = &record.h_probes[0];
    assert_eq!(s.mh, s.xh);
}

#[test]
fn single_cluster_carries_no_probe_bracket() {
    let mut config = SimConfig::new(8, 1e-3, 0.05, 2);
    config.noise_enabled = true;
    let record = run(
        config,
        0,
        ProbeSet {
            pairs: vec![],
            tests: vec![probe("p", 0.0, 1.0, 8)],
        },
    );
    let s = &record.h_probes[0];
    assert!(s.qvh.iter().all(|q| *q == 0.0));
    assert!(s.xh.iter().all(|v| *v == 0.0));
}

#[test]
fn constant_start_is_absorbed_inside_each_level() {
    let mut config = leveled(16, 0.2);
    config.initial = InitialSpec::Constant(0.0);
    let xi = Simulator::new(config.clone()).unwrap().xi_grid().clone();
    let probes = ProbeSet {
        pairs: vec![],
        tests: vec![probe("inner", 0.25, 0.5, 16)],
    };
    let records: Vec<_> = (0..8)
        .map(|r| run(config.clone(), r, probes.clone()))
        .collect();
    let report =
        supermartingale_test(&records, "inner", &xi, &SupermartingaleOptions::default()).unwrap();
    assert_eq!(report.verdict, Verdict::Consistent);
    assert_eq!(report.absorption_step, vec![Some(0); 8]);
    assert_eq!(report.absorption_breaks, 0);
    assert_eq!(report.min_value, 0.0);
}

#[test]
fn straddling_probe_is_refused() {
    let config = leveled(16, 0.05);
    let xi = Simulator::new(config.clone()).unwrap().xi_grid().clone();
    let probes = ProbeSet {
        pairs: vec![],
        tests: vec![probe("cross", 0.125, 0.375, 16)],
    };
    let records = vec![run(config, 0, probes)];
    assert!(!records[0].h_probes[0].admissible);
    assert!(
        supermartingale_test(&records, "cross", &xi, &SupermartingaleOptions::default()).is_err()
    );
    assert!(
        supermartingale_test(&records, "missing", &xi, &SupermartingaleOptions::default()).is_err()
    );
}

#[test]
fn sup_count_statistic_rejects_mixed_groups() {
    let a: Vec<_> = (0..3)
        .map(|r| run(leveled(16, 0.05), r, ProbeSet::default()))
        .collect();
    let b: Vec<_> = (0..3)
        .map(|r| run(leveled(8, 0.05), r, ProbeSet::default()))
        .collect();
    let fewer = &a[..2];
    assert!(sup_count_statistic(&[("a".into(), &a[..]), ("b".into(), &b[..])]).is_err());
    assert!(sup_count_statistic(&[("a".into(), &a[..]), ("fewer".into(), fewer)]).is_err());
    let ok = sup_count_statistic(&[("a".into(), &a[..])]).unwrap();
    assert_eq!(ok[0].replicas, 3);
    assert_eq!(ok[0].potential_levels, 4);
    assert!(ok[0].time_average.mean <= ok[0].sup_count.mean);
}

#[test]
fn counts_match_hs_norm_of_snapshots() {
    let record = run(leveled(32, 0.3), 1, ProbeSet::default());
    let snaps = record.snapshots.as_ref().unwrap();
    assert_eq!(snaps.len(), record.counts.len());
    for (x, c) in snaps.iter().zip(&record.counts) {
        assert_eq!(particle_count(x), *c);
        assert_eq!(hs_norm_sq(x).round() as usize, *c);
    }
    assert!(record.mean_count() <= record.sup_count() as f64);
}

#[test]
fn predicted_pair_variation_uses_cluster_mass() {
    let mut config = SimConfig::new(4, 1e-4, 0.01, 4);
    config.initial = InitialSpec::Explicit(vec![0.0, 0.0, 1.0, 1.0]);
    let record = run(
        config,
        0,
        ProbeSet {
            pairs: vec![(0, 1), (1, 2)],
            tests: vec![],
        },
    );
    let within = &record.pair_probes[0];
    assert!(within.equal.iter().all(|e| *e));
    assert!(within.mass.iter().all(|m| *m == 0.5));
    let q = pair_qv_estimate(&record, 1, 0).unwrap();
    assert!((q.predicted - 2.0 * 0.01).abs() < 1e-12);
    assert!((q.realized - q.predicted).abs() < 0.5 * q.predicted);
    let across = pair_qv_estimate(&record, 1, 2).unwrap();
    assert_eq!(across.predicted, 0.0);
    assert!(pair_qv_estimate(&record, 0, 3).is_err());
}
