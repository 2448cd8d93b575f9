//! Full trajectories: the step loop, observable recording and the per-step
//! invariant monitor.

use serde::{Deserialize, Serialize};

use crate::error::{CfwdError, Result};
use crate::monotone::{inner_product, project_onto_partition, GeneralGridFunction, GridFunction};
use crate::observables::{
    coalesced_level_pairs, is_admissible, particle_count, HSeries, InvariantTally, PairSeries,
    ProbeSet, RecordMetadata, TrajectoryRecord,
};
use crate::rng::RNG_IDENTITY;

use super::{SimConfig, SimState, Simulator, StepReport};

/// Largest tolerated change of `(X, 1)` through order restoration, relative
/// to `max(1, max |proposal|)`.
pub const CONSERVATION_TOL: f64 = 1e-10;
/// Smallest tolerated `(X_t, h)`.
pub const POSITIVITY_TOL: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ViolationKind {
    NonFinite,
    Monotonicity,
    PoolingConservation,
    Absorption,
    Positivity,
    ProbeAbsorption,
}

/// A failed invariant with the offending state.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InvariantViolation {
    pub kind: ViolationKind,
    pub replica: u64,
    pub step: u64,
    pub detail: String,
    pub previous_state: Vec<f64>,
    pub proposal: Vec<f64>,
    pub state: Vec<f64>,
}

impl std::fmt::Display for InvariantViolation {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(
            f,
            "{:?} violated in replica {} at step {}: {}",
            self.kind, self.replica, self.step, self.detail
        )
    }
}

/// Options for [`Simulator::run_with`].
#[derive(Debug, Clone, Default)]
pub struct RunOptions {
    pub replica: u64,
    pub probes: ProbeSet,
    /// Corrupts the observed state after this step so the monitor trips.
    pub corrupt_at_step: Option<u64>,
}

impl Simulator {
    /// Runs replica 0 without probes.
    pub fn run(&self) -> Result<TrajectoryRecord> {
        self.run_with(&RunOptions::default())
    }

    /// Steps from `t = 0` to `t_end`, checking invariants after every step
    /// and recording observables every `snapshot_stride` steps.
    pub fn run_with(&self, options: &RunOptions) -> Result<TrajectoryRecord> {
        for &(i, j) in &options.probes.pairs {
            if i.max(j) >= self.config.n {
                return Err(CfwdError::InvalidConfig(format!(
                    "pair ({i}, {j}) outside grid of {} cells",
                    self.config.n
                )));
            }
        }
        if let Some(p) = options
            .probes
            .tests
            .iter()
            .find(|p| p.h.n() != self.config.n)
        {
            return Err(CfwdError::InvalidConfig(format!(
                "probe `{}` built for n = {}, run has n = {}",
                p.id,
                p.h.n(),
                self.config.n
            )));
        }

        let mut state = self.init_replica(options.replica);
        let mut recorder = Recorder::new(self, options);
        recorder.snapshot(&state);
        let total = self.config.step_count();
        let stride = self.config.snapshot_stride as u64;
        while state.step_index < total {
            let previous = state.x.clone();
            let previous_partition = state.partition.clone();
            let report = self.step(&mut state).map_err(|e| match e {
                CfwdError::Step { .. } => e,
                other => CfwdError::Step {
                    step: state.step_index,
                    message: other.to_string(),
                },
            })?;

            let mut observed = state.x.values().to_vec();
            if options.corrupt_at_step == Some(state.step_index) {
                corrupt(&mut observed);
            }
            let violation = |kind, detail: String| {
                CfwdError::Invariant(Box::new(InvariantViolation {
                    kind,
                    replica: options.replica,
                    step: state.step_index,
                    detail,
                    previous_state: previous.values().to_vec(),
                    proposal: report.pre_pool_proposal.values().to_vec(),
                    state: observed.clone(),
                }))
            };
            check_state(
                &previous,
                &observed,
                &report,
                &self.xi_grid,
                &mut recorder.tally,
            )
            .map_err(|(kind, detail)| violation(kind, detail))?;
            recorder
                .accumulate(&previous, &previous_partition, &report, &state)
                .map_err(|(kind, detail)| violation(kind, detail))?;

            if state.step_index.is_multiple_of(stride) || state.step_index == total {
                recorder.snapshot(&state);
            }
        }
        Ok(recorder.finish())
    }
}

fn corrupt(values: &mut [f64]) {
    match values.len() {
        0 | 1 => values.iter_mut().for_each(|v| *v = f64::NAN),
        n => values[0] = values[n - 1] + 1.0,
    }
}

/// Order, finiteness, conservation through pooling, and persistence of
/// coalescence between cells with equal potential.
fn check_state(
    previous: &GridFunction,
    observed: &[f64],
    report: &StepReport,
    xi_grid: &GeneralGridFunction,
    tally: &mut InvariantTally,
) -> std::result::Result<(), (ViolationKind, String)> {
    if let Some(i) = observed.iter().position(|v| !v.is_finite()) {
        return Err((
            ViolationKind::NonFinite,
            format!("cell {i} is {}", observed[i]),
        ));
    }
    if let Some(i) = observed.windows(2).position(|w| w[0] > w[1]) {
        return Err((
            ViolationKind::Monotonicity,
            format!(
                "cells {i}, {}: {} > {}",
                i + 1,
                observed[i],
                observed[i + 1]
            ),
        ));
    }

    let proposal = report.pre_pool_proposal.values();
    let scale = proposal.iter().fold(1.0_f64, |m, v| m.max(v.abs()));
    let n = observed.len() as f64;
    let before: f64 = proposal.iter().sum::<f64>() / n;
    let after: f64 = observed.iter().sum::<f64>() / n;
    let error = (before - after).abs() / scale;
    tally.max_conservation_error = tally.max_conservation_error.max(error);
    if error > CONSERVATION_TOL {
        return Err((
            ViolationKind::PoolingConservation,
            format!("mean moved from {before} to {after} during pooling"),
        ));
    }

    let (prev, xi) = (previous.values(), xi_grid.values());
    for i in 1..observed.len() {
        if xi[i] == xi[i - 1] && prev[i] == prev[i - 1] {
            tally.absorption_checks += 1;
            if observed[i] != observed[i - 1] {
                return Err((
                    ViolationKind::Absorption,
                    format!("cells {} and {i} share a level and separated", i - 1),
                ));
            }
        }
    }
    tally.steps_checked += 1;
    tally.merges += report.merges as u64;
    Ok(())
}

struct HAccumulator {
    h: GeneralGridFunction,
    compensator: f64,
    qv: f64,
    absorbed: bool,
}

struct Recorder<'a> {
    sim: &'a Simulator,
    record: TrajectoryRecord,
    pair_acc: Vec<(f64, f64)>,
    h_acc: Vec<HAccumulator>,
    tally: InvariantTally,
}

impl<'a> Recorder<'a> {
    fn new(sim: &'a Simulator, options: &RunOptions) -> Self {
        let config: &SimConfig = sim.config();
        let pair_probes = options
            .probes
            .pairs
            .iter()
            .map(|&(i, j)| PairSeries {
                i: i.min(j),
                j: i.max(j),
                equal: Vec::new(),
                mass: Vec::new(),
                realized_qv: Vec::new(),
                predicted_qv: Vec::new(),
            })
            .collect::<Vec<_>>();
        let h_probes = options
            .probes
            .tests
            .iter()
            .map(|p| HSeries {
                id: p.id.clone(),
                h: p.h,
                admissible: is_admissible(&p.h, sim.xi_grid()),
                xh: Vec::new(),
                mh: Vec::new(),
                qvh: Vec::new(),
            })
            .collect::<Vec<_>>();
        let h_acc = options
            .probes
            .tests
            .iter()
            .map(|p| HAccumulator {
                h: p.h.to_grid(),
                compensator: 0.0,
                qv: 0.0,
                absorbed: false,
            })
            .collect();
        Self {
            sim,
            pair_acc: vec![(0.0, 0.0); pair_probes.len()],
            h_acc,
            tally: InvariantTally::default(),
            record: TrajectoryRecord {
                times: Vec::new(),
                steps: Vec::new(),
                counts: Vec::new(),
                com: Vec::new(),
                level_pairs: Vec::new(),
                pair_probes,
                h_probes,
                snapshots: config.store_snapshots.then(Vec::new),
                metadata: RecordMetadata {
                    config: config.clone(),
                    replica: options.replica,
                    rng: RNG_IDENTITY.to_string(),
                },
                tally: InvariantTally::default(),
            },
        }
    }

    /// Per-step sums: pair cross-variations of the drift-compensated
    /// increments, and left-endpoint compensator and bracket of each probe.
    fn accumulate(
        &mut self,
        previous: &GridFunction,
        previous_partition: &crate::monotone::ClusterPartition,
        report: &StepReport,
        state: &SimState,
    ) -> std::result::Result<(), (ViolationKind, String)> {
        let dt = self.sim.config().dt;
        let (prev, next) = (previous.values(), state.x.values());
        let drift = &report.drift_increments;
        for (acc, probe) in self.pair_acc.iter_mut().zip(&self.record.pair_probes) {
            let (i, j) = (probe.i, probe.j);
            let di = next[i] - prev[i] - drift[i];
            let dj = next[j] - prev[j] - drift[j];
            acc.0 += di * dj;
            if prev[i] == prev[j] {
                acc.1 += dt / previous_partition.mass_of(i);
            }
        }

        let drift_grid = GeneralGridFunction::new(drift.clone()).expect("finite drift");
        for (acc, series) in self.h_acc.iter_mut().zip(&self.record.h_probes) {
            acc.compensator += inner_product(&drift_grid, &acc.h).expect("sizes checked");
            let ph = project_onto_partition(previous_partition, &acc.h);
            acc.qv += dt * inner_product(&ph, &ph).expect("sizes checked");

            let value = series.h.pair(&state.x).expect("sizes checked");
            let min = self.tally.min_probe_value.get_or_insert(value);
            *min = min.min(value);
            if value < -POSITIVITY_TOL {
                return Err((
                    ViolationKind::Positivity,
                    format!("probe `{}` is {value}", series.id),
                ));
            }
            if acc.absorbed && series.admissible && value != 0.0 {
                return Err((
                    ViolationKind::ProbeAbsorption,
                    format!("probe `{}` left zero: {value}", series.id),
                ));
            }
            acc.absorbed |= value == 0.0;
        }
        Ok(())
    }

    fn snapshot(&mut self, state: &SimState) {
        let x = &state.x;
        let r = &mut self.record;
        r.times.push(state.t);
        r.steps.push(state.step_index);
        r.counts.push(particle_count(x));
        r.com.push(x.values().iter().sum::<f64>() / x.n() as f64);
        r.level_pairs
            .push(coalesced_level_pairs(x, self.sim.xi_grid()));
        for (series, acc) in r.pair_probes.iter_mut().zip(&self.pair_acc) {
            series
                .equal
                .push(x.values()[series.i] == x.values()[series.j]);
            series.mass.push(state.partition.mass_of(series.i));
            series.realized_qv.push(acc.0);
            series.predicted_qv.push(acc.1);
        }
        for (series, acc) in r.h_probes.iter_mut().zip(&mut self.h_acc) {
            let xh = series.h.pair(x).expect("sizes checked");
            if state.step_index == 0 {
                acc.absorbed = xh == 0.0;
            }
            series.xh.push(xh);
            series.mh.push(xh - acc.compensator);
            series.qvh.push(acc.qv);
        }
        if let Some(s) = r.snapshots.as_mut() {
            s.push(x.clone());
        }
    }

    fn finish(mut self) -> TrajectoryRecord {
        self.record.tally = self.tally;
        self.record
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dynamics::InitialSpec;
    use crate::monotone::{make_test_function, PotentialSpec};
    use crate::observables::HProbe;

    fn config() -> SimConfig {
        let mut c = SimConfig::new(8, 0.01, 0.1, 11);
        c.initial = InitialSpec::Identity;
        c.potential = PotentialSpec::levels(2).unwrap();
        c
    }

    #[test]
    fn zero_horizon_records_initial_state_only() {
        let mut c = config();
        c.t_end = 0.0;
        let r = Simulator::new(c).unwrap().run().unwrap();
        assert_eq!(r.times, vec![0.0]);
        assert_eq!(r.counts, vec![8]);
        assert_eq!(r.tally.steps_checked, 0);
    }

    #[test]
    fn stride_and_final_snapshot() {
        let mut c = config();
        c.snapshot_stride = 3;
        let r = Simulator::new(c).unwrap().run().unwrap();
        assert_eq!(r.steps, vec![0, 3, 6, 9, 10]);
        assert_eq!(r.tally.steps_checked, 10);
    }

    #[test]
    fn same_seed_same_record() {
        let sim = Simulator::new(config()).unwrap();
        let opts = RunOptions {
            replica: 4,
            probes: ProbeSet {
                pairs: vec![(0, 1), (2, 2)],
                tests: vec![HProbe {
                    id: "a".into(),
                    h: make_test_function(0.0, 0.5, 8).unwrap(),
                }],
            },
            corrupt_at_step: None,
        };
        let a = sim.run_with(&opts).unwrap();
        let b = sim.run_with(&opts).unwrap();
        assert_eq!(a, b);
        let other = sim.run_with(&RunOptions { replica: 5, ..opts }).unwrap();
        assert_ne!(a.com, other.com);
    }

    #[test]
    fn corrupted_state_is_reported() {
        let sim = Simulator::new(config()).unwrap();
        let err = sim
            .run_with(&RunOptions {
                corrupt_at_step: Some(4),
                ..RunOptions::default()
            })
            .unwrap_err();
        match err {
            CfwdError::Invariant(v) => {
                assert_eq!(v.kind, ViolationKind::Monotonicity);
                assert_eq!(v.step, 4);
                assert_eq!(v.state.len(), 8);
            }
            other => panic!("unexpected error {other:?}"),
        }
    }

    #[test]
    fn single_particle_corruption_is_non_finite() {
        let mut c = config();
        c.n = 1;
        c.initial = InitialSpec::Constant(0.0);
        let err = Simulator::new(c)
            .unwrap()
            .run_with(&RunOptions {
                corrupt_at_step: Some(1),
                ..RunOptions::default()
            })
            .unwrap_err();
        assert!(matches!(err, CfwdError::Invariant(v) if v.kind == ViolationKind::NonFinite));
    }

    #[test]
    fn rejects_probes_outside_grid() {
        let sim = Simulator::new(config()).unwrap();
        let opts = RunOptions {
            probes: ProbeSet {
                pairs: vec![(0, 8)],
                tests: vec![],
            },
            ..RunOptions::default()
        };
        assert!(sim.run_with(&opts).is_err());
        let opts = RunOptions {
            probes: ProbeSet {
                pairs: vec![],
                tests: vec![HProbe {
                    id: "b".into(),
                    h: make_test_function(0.0, 0.5, 4).unwrap(),
                }],
            },
            ..RunOptions::default()
        };
        assert!(sim.run_with(&opts).is_err());
    }
}
