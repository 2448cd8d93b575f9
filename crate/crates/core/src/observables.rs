//! Trajectory records and the estimators built on them: particle counts,
//! compensated martingales of test-function probes, pair quadratic
//! variations, supermartingale checks and the sup-count summaries.

use serde::{Deserialize, Serialize};

use crate::dynamics::{drift_term, SimConfig};
use crate::error::{CfwdError, Result};
use crate::monotone::{
    cluster_decompose, distinct_count, inner_product, project, GeneralGridFunction, GridFunction,
    TestFunction,
};

/// Number of distinct particles.
pub fn particle_count(x: &GridFunction) -> usize {
    distinct_count(x)
}

/// Named `h_{u,v}` probe.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HProbe {
    pub id: String,
    pub h: TestFunction,
}

/// What to track during a run.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ProbeSet {
    /// Cell pairs `(i, j)`, 0-based, `i <= j`.
    pub pairs: Vec<(usize, usize)>,
    pub tests: Vec<HProbe>,
}

/// Series of one tracked cell pair. `realized_qv` and `predicted_qv` are
/// cumulative sums over all steps up to each snapshot.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PairSeries {
    pub i: usize,
    pub j: usize,
    pub equal: Vec<bool>,
    /// Mass of the cluster containing `i`.
    pub mass: Vec<f64>,
    pub realized_qv: Vec<f64>,
    pub predicted_qv: Vec<f64>,
}

/// Series of one test-function probe: `(X_t, h)`, the compensated
/// martingale `M_h` and its predicted bracket, accumulated per step.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HSeries {
    pub id: String,
    pub h: TestFunction,
    /// `h` lies inside one level interval of the potential.
    pub admissible: bool,
    pub xh: Vec<f64>,
    pub mh: Vec<f64>,
    pub qvh: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RecordMetadata {
    pub config: SimConfig,
    pub replica: u64,
    pub rng: String,
}

/// Counters kept by the per-step invariant monitor.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct InvariantTally {
    pub steps_checked: u64,
    /// Adjacent same-level pairs that were coalesced before a step and
    /// checked after it.
    pub absorption_checks: u64,
    pub merges: u64,
    pub max_conservation_error: f64,
    pub min_probe_value: Option<f64>,
}

/// Observables of one replica, sampled every `snapshot_stride` steps and at
/// the final step.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrajectoryRecord {
    pub times: Vec<f64>,
    pub steps: Vec<u64>,
    pub counts: Vec<usize>,
    /// `(X_t, 1)`.
    pub com: Vec<f64>,
    /// Pairs `(i, j)` with equal potential values that are coalesced.
    pub level_pairs: Vec<u64>,
    pub pair_probes: Vec<PairSeries>,
    pub h_probes: Vec<HSeries>,
    pub snapshots: Option<Vec<GridFunction>>,
    pub metadata: RecordMetadata,
    pub tally: InvariantTally,
}

impl TrajectoryRecord {
    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    pub fn sup_count(&self) -> usize {
        self.counts.iter().copied().max().unwrap_or(0)
    }

    pub fn mean_count(&self) -> f64 {
        if self.counts.is_empty() {
            return 0.0;
        }
        self.counts.iter().map(|&c| c as f64).sum::<f64>() / self.counts.len() as f64
    }

    pub fn h_probe(&self, id: &str) -> Option<&HSeries> {
        self.h_probes.iter().find(|p| p.id == id)
    }
}

/// Number of pairs `i < j` with `ξ_i == ξ_j` and `x_i == x_j`.
pub fn coalesced_level_pairs(x: &GridFunction, xi_grid: &GeneralGridFunction) -> u64 {
    let (x, xi) = (x.values(), xi_grid.values());
    let mut total = 0u64;
    let mut run = 1u64;
    for i in 1..x.len() {
        if x[i] == x[i - 1] && xi[i] == xi[i - 1] {
            run += 1;
        } else {
            total += run * (run - 1) / 2;
            run = 1;
        }
    }
    total + run * (run - 1) / 2
}

/// Whether the potential is constant on the support of `h`.
pub fn is_admissible(h: &TestFunction, xi_grid: &GeneralGridFunction) -> bool {
    let support = &xi_grid.values()[h.support()];
    support.iter().all(|v| *v == support[0])
}

/// One point of a compensated probe series.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct CompensatedPoint {
    pub time: f64,
    pub xh: f64,
    pub mh: f64,
    pub qvh: f64,
}

/// `M_h(t) = (X_t, h) - ∫ (ξ - pr_X ξ, h) ds` and `<M_h>_t = ∫ ||pr_X h||² ds`
/// from stored snapshots, with left-endpoint sums at snapshot spacing.
pub fn compensated_martingale_h(
    record: &TrajectoryRecord,
    h: &TestFunction,
    xi_grid: &GeneralGridFunction,
) -> Result<Vec<CompensatedPoint>> {
    let snapshots = record
        .snapshots
        .as_ref()
        .ok_or_else(|| CfwdError::Observable("record holds no snapshots".into()))?;
    let hg = h.to_grid();
    let mut out = Vec::with_capacity(snapshots.len());
    let (mut compensator, mut qv) = (0.0, 0.0);
    for (k, x) in snapshots.iter().enumerate() {
        if k > 0 {
            let prev = &snapshots[k - 1];
            let span = record.times[k] - record.times[k - 1];
            let drift = drift_term(prev, xi_grid)?;
            compensator += span * inner_product(&drift, &hg)?;
            let ph = project(prev, &hg)?;
            qv += span * inner_product(&ph, &ph)?;
        }
        let xh = h.pair(x)?;
        out.push(CompensatedPoint {
            time: record.times[k],
            xh,
            mh: xh - compensator,
            qvh: qv,
        });
    }
    Ok(out)
}

/// Realized against predicted cross-variation of a tracked pair.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PairQv {
    pub realized: f64,
    pub predicted: f64,
    pub diff: f64,
}

/// Final cumulative values of the pair probe `(i, j)`.
pub fn pair_qv_estimate(record: &TrajectoryRecord, i: usize, j: usize) -> Result<PairQv> {
    let (i, j) = (i.min(j), i.max(j));
    let p = record
        .pair_probes
        .iter()
        .find(|p| p.i == i && p.j == j)
        .ok_or_else(|| CfwdError::Observable(format!("pair ({i}, {j}) is not tracked")))?;
    let realized = p.realized_qv.last().copied().unwrap_or(0.0);
    let predicted = p.predicted_qv.last().copied().unwrap_or(0.0);
    Ok(PairQv {
        realized,
        predicted,
        diff: realized - predicted,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SupermartingaleOptions {
    /// Standard errors a mean increment may exceed zero by.
    pub k: f64,
    /// Number of equal windows the snapshot series is cut into.
    pub windows: usize,
}

impl Default for SupermartingaleOptions {
    fn default() -> Self {
        Self {
            k: 4.0,
            windows: 10,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Verdict {
    Consistent,
    Violated,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LagIncrement {
    pub from_time: f64,
    pub to_time: f64,
    pub mean: f64,
    pub std_err: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SupermartingaleReport {
    pub probe: String,
    pub lags: Vec<LagIncrement>,
    pub verdict: Verdict,
    /// Smallest `(X_t, h)` seen in any replica.
    pub min_value: f64,
    /// Per replica, first snapshot index where `(X_t, h) == 0`.
    pub absorption_step: Vec<Option<usize>>,
    /// Replicas that left zero after being absorbed.
    pub absorption_breaks: usize,
}

/// Checks nonnegativity, the sign of the mean increments across replicas,
/// and exact persistence of zero once reached.
pub fn supermartingale_test(
    records: &[TrajectoryRecord],
    probe: &str,
    xi_grid: &GeneralGridFunction,
    options: &SupermartingaleOptions,
) -> Result<SupermartingaleReport> {
    let series: Vec<&HSeries> = records
        .iter()
        .map(|r| {
            r.h_probe(probe)
                .ok_or_else(|| CfwdError::Observable(format!("probe `{probe}` not recorded")))
        })
        .collect::<Result<_>>()?;
    let first = series
        .first()
        .ok_or_else(|| CfwdError::Observable("no records".into()))?;
    if !is_admissible(&first.h, xi_grid) {
        return Err(CfwdError::Observable(format!(
            "probe `{probe}` straddles a level change of the potential"
        )));
    }
    let len = first.xh.len();
    if series.iter().any(|s| s.xh.len() != len) || len == 0 {
        return Err(CfwdError::Observable(
            "replica series differ in length".into(),
        ));
    }
    let times = &records[0].times;

    let min_value = series
        .iter()
        .flat_map(|s| s.xh.iter().copied())
        .fold(f64::INFINITY, f64::min);

    let mut absorption_step = Vec::with_capacity(series.len());
    let mut absorption_breaks = 0;
    for s in &series {
        let hit = s.xh.iter().position(|v| *v == 0.0);
        if let Some(k) = hit {
            if s.xh[k..].iter().any(|v| *v != 0.0) {
                absorption_breaks += 1;
            }
        }
        absorption_step.push(hit);
    }

    let windows = options.windows.clamp(1, len.saturating_sub(1).max(1));
    let mut lags = Vec::with_capacity(windows);
    if len > 1 {
        let edges: Vec<usize> = (0..=windows).map(|w| w * (len - 1) / windows).collect();
        for w in edges.windows(2) {
            let (a, b) = (w[0], w[1]);
            if a == b {
                continue;
            }
            let increments: Vec<f64> = series.iter().map(|s| s.xh[b] - s.xh[a]).collect();
            let (mean, std_err) = mean_and_std_err(&increments);
            lags.push(LagIncrement {
                from_time: times[a],
                to_time: times[b],
                mean,
                std_err,
            });
        }
    }
    let violated = min_value < -1e-12
        || absorption_breaks > 0
        || lags.iter().any(|l| l.mean > options.k * l.std_err);
    Ok(SupermartingaleReport {
        probe: probe.to_string(),
        lags,
        verdict: if violated {
            Verdict::Violated
        } else {
            Verdict::Consistent
        },
        min_value,
        absorption_step,
        absorption_breaks,
    })
}

/// Sample mean and standard error of the mean.
pub fn mean_and_std_err(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    if xs.is_empty() {
        return (f64::NAN, f64::NAN);
    }
    let mean = xs.iter().sum::<f64>() / n;
    if xs.len() < 2 {
        return (mean, 0.0);
    }
    let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, (var / n).sqrt())
}

/// Linear-interpolation quantile of sorted data.
fn quantile(sorted: &[f64], q: f64) -> f64 {
    let pos = q * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    sorted[lo] + (pos - lo as f64) * (sorted[hi] - sorted[lo])
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SampleSummary {
    pub mean: f64,
    pub std_err: f64,
    /// Minimum, quartiles and maximum.
    pub quantiles: [f64; 5],
}

impl SampleSummary {
    pub fn of(values: &[f64]) -> Self {
        let (mean, std_err) = mean_and_std_err(values);
        let mut sorted = values.to_vec();
        sorted.sort_by(f64::total_cmp);
        let quantiles = [0.0, 0.25, 0.5, 0.75, 1.0].map(|q| quantile(&sorted, q));
        Self {
            mean,
            std_err,
            quantiles,
        }
    }
}

/// Per-configuration summary of `sup_t #X_t` and of the time average of `#X_t`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SupCountSummary {
    pub label: String,
    pub potential_levels: usize,
    pub replicas: usize,
    pub sup_count: SampleSummary,
    pub time_average: SampleSummary,
}

/// Summaries for groups of replicas that share `n`, `dt`, `t_end` and the
/// replica count.
pub fn sup_count_statistic(
    groups: &[(String, &[TrajectoryRecord])],
) -> Result<Vec<SupCountSummary>> {
    let mut reference: Option<(usize, f64, f64, usize)> = None;
    let mut out = Vec::with_capacity(groups.len());
    for (label, records) in groups {
        let first = records
            .first()
            .ok_or_else(|| CfwdError::Observable(format!("group `{label}` is empty")))?;
        let c = &first.metadata.config;
        let key = (c.n, c.dt, c.t_end, records.len());
        if records.iter().any(|r| {
            let rc = &r.metadata.config;
            (rc.n, rc.dt, rc.t_end) != (c.n, c.dt, c.t_end)
        }) {
            return Err(CfwdError::Observable(format!(
                "group `{label}` mixes grid sizes or time settings"
            )));
        }
        match reference {
            None => reference = Some(key),
            Some(r) if r != key => {
                return Err(CfwdError::Observable(format!(
                    "group `{label}` has (n, dt, t_end, replicas) = {key:?}, expected {r:?}"
                )))
            }
            Some(_) => {}
        }
        let sups: Vec<f64> = records.iter().map(|r| r.sup_count() as f64).collect();
        let avgs: Vec<f64> = records.iter().map(TrajectoryRecord::mean_count).collect();
        out.push(SupCountSummary {
            label: label.clone(),
            potential_levels: c.potential.distinct_level_count(c.n),
            replicas: records.len(),
            sup_count: SampleSummary::of(&sups),
            time_average: SampleSummary::of(&avgs),
        });
    }
    Ok(out)
}

/// Quick structural summary of a state.
pub fn cluster_sizes(x: &GridFunction) -> Vec<usize> {
    cluster_decompose(x)
        .blocks()
        .iter()
        .map(|b| b.len())
        .collect()
}
