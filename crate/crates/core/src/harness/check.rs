//! Built-in invariant suite behind `cfwd check`.

use rand::{Rng, RngExt};

use crate::dynamics::{InitialSpec, RunOptions, SimConfig, Simulator};
use crate::monotone::{
    distinct_count, hs_norm_sq, inner_product, isotonic_project, make_test_function, project,
    GeneralGridFunction, GridFunction, PotentialSpec,
};
use crate::observables::{HProbe, ProbeSet};
use crate::rng::replica_stream;

#[derive(Debug, Clone, PartialEq)]
pub struct CheckOutcome {
    pub name: &'static str,
    pub passed: bool,
    pub detail: String,
}

/// Random non-decreasing vector where roughly half of the steps are ties.
pub fn random_monotone<R: Rng>(rng: &mut R, n: usize) -> GridFunction {
    let mut v = Vec::with_capacity(n);
    let mut level: f64 = rng.random_range(-1.0..1.0);
    for _ in 0..n {
        if rng.random_bool(0.5) {
            level += rng.random_range(0.0..1.0);
        }
        v.push(level);
    }
    GridFunction::new(v).expect("constructed monotone")
}

pub fn random_vector<R: Rng>(rng: &mut R, n: usize) -> GeneralGridFunction {
    GeneralGridFunction::new((0..n).map(|_| rng.random_range(-2.0..2.0)).collect()).expect("finite")
}

fn outcome(name: &'static str, failures: Vec<String>, trials: usize) -> CheckOutcome {
    CheckOutcome {
        name,
        passed: failures.is_empty(),
        detail: match failures.first() {
            None => format!("{trials} cases"),
            Some(first) => format!("{} of {trials} failed; first: {first}", failures.len()),
        },
    }
}

/// Runs every check on small grids.
pub fn run_builtin_checks() -> Vec<CheckOutcome> {
    let mut rng = replica_stream(0x5eed, 0);
    let trials = 200;
    let mut out = Vec::new();

    let mut failures = Vec::new();
    for _ in 0..trials {
        let n = rng.random_range(1..=32);
        let f = random_monotone(&mut rng, n);
        let (hs, count) = (hs_norm_sq(&f), distinct_count(&f));
        if (hs - count as f64).abs() > 1e-12 {
            failures.push(format!("n = {n}: {hs} vs {count}"));
        }
    }
    out.push(outcome("hs-norm equals distinct count", failures, trials));

    let mut failures = Vec::new();
    for _ in 0..trials {
        let n = rng.random_range(1..=32);
        let f = random_monotone(&mut rng, n);
        let (a, b) = (random_vector(&mut rng, n), random_vector(&mut rng, n));
        let pa = project(&f, &a).expect("sizes");
        let pb = project(&f, &b).expect("sizes");
        if project(&f, &pa).expect("sizes") != pa {
            failures.push(format!("n = {n}: not idempotent"));
        }
        let lhs = inner_product(&pa, &b).expect("sizes");
        let rhs = inner_product(&a, &pb).expect("sizes");
        if (lhs - rhs).abs() > 1e-12 {
            failures.push(format!("n = {n}: not self-adjoint ({lhs} vs {rhs})"));
        }
        let g = random_monotone(&mut rng, n).as_general();
        if !project(&f, &g).expect("sizes").is_non_decreasing() {
            failures.push(format!("n = {n}: monotone input lost order"));
        }
    }
    out.push(outcome("projection laws", failures, trials));

    let mut failures = Vec::new();
    for _ in 0..trials {
        let n = rng.random_range(1..=48);
        let x = random_vector(&mut rng, n);
        let w: Vec<f64> = (0..n).map(|_| rng.random_range(0.1..2.0)).collect();
        let y = isotonic_project(&x, &w).expect("valid weights");
        let before: f64 = x.values().iter().zip(&w).map(|(a, b)| a * b).sum();
        let after: f64 = y.values().iter().zip(&w).map(|(a, b)| a * b).sum();
        if (before - after).abs() > 1e-10 {
            failures.push(format!("n = {n}: weighted sum {before} -> {after}"));
        }
        let again = isotonic_project(&y.as_general(), &w).expect("valid weights");
        if again != y {
            failures.push(format!("n = {n}: output is not a fixed point"));
        }
    }
    out.push(outcome("isotonic projection", failures, trials));

    let mut failures = Vec::new();
    let runs = 8;
    for replica in 0..runs {
        let mut c = SimConfig::new(32, 1e-3, 0.2, 17);
        c.initial = InitialSpec::Identity;
        c.potential = PotentialSpec::levels(4).expect("k > 0");
        let probes = ProbeSet {
            pairs: vec![(0, 0), (3, 4)],
            tests: vec![HProbe {
                id: "first-level".into(),
                h: make_test_function(0.0, 0.25, 32).expect("on grid"),
            }],
        };
        let result = Simulator::new(c).and_then(|sim| {
            sim.run_with(&RunOptions {
                replica,
                probes,
                corrupt_at_step: None,
            })
        });
        if let Err(e) = result {
            failures.push(e.to_string());
        }
    }
    out.push(outcome("run invariants", failures, runs as usize));
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn builtin_suite_passes() {
        for c in run_builtin_checks() {
            assert!(c.passed, "{}: {}", c.name, c.detail);
        }
    }
}
