use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dynamics::{InvariantViolation, RunOptions, SimConfig, Simulator};
use crate::error::CfwdError;
use crate::observables::{
    is_admissible, pair_qv_estimate, sup_count_statistic, supermartingale_test, InvariantTally,
    SampleSummary, SupCountSummary, SupermartingaleReport, TrajectoryRecord,
};
use crate::rng::RNG_IDENTITY;

use super::plan::{ExperimentPlan, PlanError};

#[derive(Debug, thiserror::Error)]
pub enum HarnessError {
    #[error("configuration error: {0}")]
    Plan(#[from] PlanError),
    #[error("configuration error: {0}")]
    Config(CfwdError),
    #[error("sweep point `{point}`: {violation}")]
    Invariant {
        point: String,
        violation: Box<InvariantViolation>,
    },
    #[error("sweep point `{point}`, replica {replica}: {source}")]
    Run {
        point: String,
        replica: u64,
        source: CfwdError,
    },
    #[error("I/O error on {path}: {source}")]
    Io {
        path: String,
        source: std::io::Error,
    },
}

impl HarnessError {
    /// Process exit status for this error.
    pub fn exit_code(&self) -> i32 {
        match self {
            HarnessError::Plan(_) | HarnessError::Config(_) => 1,
            HarnessError::Invariant { .. } | HarnessError::Run { .. } => 2,
            HarnessError::Io { .. } => 3,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BundleMetadata {
    pub config_hash: String,
    pub rng: String,
    pub code_version: String,
    pub replicas: usize,
}

/// Supermartingale check of one probe, or why it was not run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProbeVerdict {
    pub probe: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub report: Option<SupermartingaleReport>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub refused: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PairQvSummary {
    pub i: usize,
    pub j: usize,
    pub realized: SampleSummary,
    pub predicted: SampleSummary,
    pub diff: SampleSummary,
}

/// Tallies of the per-step invariant monitor, merged over replicas.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct MonitorSummary {
    pub steps_checked: u64,
    pub absorption_checks: u64,
    pub merges: u64,
    pub max_conservation_error: f64,
    pub min_probe_value: Option<f64>,
}

impl MonitorSummary {
    fn merge(&mut self, t: &InvariantTally) {
        self.steps_checked += t.steps_checked;
        self.absorption_checks += t.absorption_checks;
        self.merges += t.merges;
        self.max_conservation_error = self.max_conservation_error.max(t.max_conservation_error);
        self.min_probe_value = match (self.min_probe_value, t.min_probe_value) {
            (Some(a), Some(b)) => Some(a.min(b)),
            (a, b) => a.or(b),
        };
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PointResult {
    pub name: String,
    pub config: SimConfig,
    pub counts: SupCountSummary,
    pub supermartingale: Vec<ProbeVerdict>,
    pub pair_qv: Vec<PairQvSummary>,
    pub monitor: MonitorSummary,
    /// Per-replica series; emitted as CSV, left out of the summary.
    #[serde(skip)]
    pub records: Vec<TrajectoryRecord>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResultBundle {
    pub metadata: BundleMetadata,
    pub points: Vec<PointResult>,
}

impl ResultBundle {
    /// The JSON summary document.
    pub fn summary_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("bundle serializes");
        s.push('\n');
        s
    }

    pub fn point(&self, name: &str) -> Option<&PointResult> {
        self.points.iter().find(|p| p.name == name)
    }
}

/// Runs every sweep point with `plan.replicas` replicas in parallel and
/// aggregates in replica order.
pub fn run_plan(plan: &ExperimentPlan) -> Result<ResultBundle, HarnessError> {
    let mut points = Vec::new();
    for point in plan.points() {
        let sim = Simulator::new(point.config.clone()).map_err(HarnessError::Config)?;
        let probes = plan.probe_set(point.config.n)?;
        let records: Vec<TrajectoryRecord> = (0..plan.replicas as u64)
            .into_par_iter()
            .map(|replica| {
                sim.run_with(&RunOptions {
                    replica,
                    probes: probes.clone(),
                    corrupt_at_step: plan.debug.corrupt_at_step,
                })
                .map_err(|e| match e {
                    CfwdError::Invariant(violation) => HarnessError::Invariant {
                        point: point.name.clone(),
                        violation,
                    },
                    source => HarnessError::Run {
                        point: point.name.clone(),
                        replica,
                        source,
                    },
                })
            })
            .collect::<Result<_, _>>()?;

        let counts = sup_count_statistic(&[(point.name.clone(), records.as_slice())])
            .map_err(HarnessError::Config)?
            .remove(0);

        let options = plan.supermartingale_options();
        let supermartingale = probes
            .tests
            .iter()
            .map(|p| {
                if is_admissible(&p.h, sim.xi_grid()) {
                    let report = supermartingale_test(&records, &p.id, sim.xi_grid(), &options)
                        .map_err(HarnessError::Config)?;
                    Ok(ProbeVerdict {
                        probe: p.id.clone(),
                        report: Some(report),
                        refused: None,
                    })
                } else {
                    Ok(ProbeVerdict {
                        probe: p.id.clone(),
                        report: None,
                        refused: Some("support straddles a level change of the potential".into()),
                    })
                }
            })
            .collect::<Result<Vec<_>, HarnessError>>()?;

        let pair_qv = probes
            .pairs
            .iter()
            .map(|&(i, j)| {
                let est: Vec<_> = records
                    .iter()
                    .map(|r| pair_qv_estimate(r, i, j))
                    .collect::<Result<_, _>>()
                    .map_err(HarnessError::Config)?;
                let pick = |f: fn(&crate::observables::PairQv) -> f64| {
                    SampleSummary::of(&est.iter().map(f).collect::<Vec<_>>())
                };
                Ok(PairQvSummary {
                    i,
                    j,
                    realized: pick(|q| q.realized),
                    predicted: pick(|q| q.predicted),
                    diff: pick(|q| q.diff),
                })
            })
            .collect::<Result<Vec<_>, HarnessError>>()?;

        let mut monitor = MonitorSummary::default();
        for r in &records {
            monitor.merge(&r.tally);
        }

        points.push(PointResult {
            name: point.name,
            config: point.config,
            counts,
            supermartingale,
            pair_qv,
            monitor,
            records,
        });
    }
    Ok(ResultBundle {
        metadata: BundleMetadata {
            config_hash: plan.config_hash(),
            rng: RNG_IDENTITY.to_string(),
            code_version: env!("CARGO_PKG_VERSION").to_string(),
            replicas: plan.replicas,
        },
        points,
    })
}
