//! Explicit time stepping of the cluster-projected SDE
//!
//! ```text
//! dX = pr_X dW + (ξ - pr_X ξ) dt
//! ```
//!
//! One step draws a Gaussian per cluster with variance `dt / mass`, adds the
//! fragmentation drift `ξ - pr_X ξ`, and restores the order of the particles
//! with an isotonic projection. Pooled particles share a single value and
//! form a cluster at the next step.

mod run;

use std::fmt;
use std::str::FromStr;

use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{CfwdError, Result};
use crate::monotone::{
    cluster_decompose, isotonic_project_with_stats, materialize_potential, project_onto_partition,
    ClusterPartition, GeneralGridFunction, GridFunction, PotentialSpec,
};
use crate::rng::{replica_stream, StreamRng};

pub use run::{InvariantViolation, RunOptions, ViolationKind, CONSERVATION_TOL, POSITIVITY_TOL};

/// Initial condition `g`.
#[derive(Debug, Clone, PartialEq)]
pub enum InitialSpec {
    /// `g = c`.
    Constant(f64),
    /// `g(u) = u`.
    Identity,
    /// Same step function as the `levels:k` potential.
    Levels(usize),
    /// Explicit non-decreasing cell values.
    Explicit(Vec<f64>),
}

impl InitialSpec {
    pub fn materialize(&self, n: usize) -> Result<GridFunction> {
        if n == 0 {
            return Err(CfwdError::InvalidConfig("n must be at least 1".into()));
        }
        match self {
            InitialSpec::Constant(c) => GridFunction::constant(n, *c),
            InitialSpec::Identity => {
                GridFunction::new((0..n).map(|i| i as f64 / n as f64).collect())
            }
            InitialSpec::Levels(k) => GridFunction::new(
                materialize_potential(&PotentialSpec::levels(*k)?, n).into_values(),
            ),
            InitialSpec::Explicit(values) => {
                if values.len() != n {
                    return Err(CfwdError::InvalidConfig(format!(
                        "explicit initial condition has {} values, n = {n}",
                        values.len()
                    )));
                }
                GridFunction::new(values.clone())
            }
        }
    }
}

impl fmt::Display for InitialSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            InitialSpec::Constant(c) => write!(f, "constant:{c}"),
            InitialSpec::Identity => write!(f, "identity"),
            InitialSpec::Levels(k) => write!(f, "levels:{k}"),
            InitialSpec::Explicit(v) => write!(f, "explicit{v:?}"),
        }
    }
}

impl FromStr for InitialSpec {
    type Err = CfwdError;

    fn from_str(s: &str) -> Result<Self> {
        let bad = || CfwdError::InvalidConfig(format!("unknown initial preset `{s}`"));
        match s.split_once(':') {
            None if s == "identity" => Ok(InitialSpec::Identity),
            Some(("constant", c)) => c
                .trim()
                .parse()
                .map(InitialSpec::Constant)
                .map_err(|_| bad()),
            Some(("levels", k)) => k.trim().parse().map(InitialSpec::Levels).map_err(|_| bad()),
            _ => Err(bad()),
        }
    }
}

#[derive(Serialize, Deserialize)]
#[serde(untagged)]
enum RawInitial {
    Preset(String),
    Explicit(Vec<f64>),
}

impl Serialize for InitialSpec {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        match self {
            InitialSpec::Explicit(v) => RawInitial::Explicit(v.clone()),
            preset => RawInitial::Preset(preset.to_string()),
        }
        .serialize(s)
    }
}

impl<'de> Deserialize<'de> for InitialSpec {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        match RawInitial::deserialize(d)? {
            RawInitial::Preset(s) => s.parse().map_err(serde::de::Error::custom),
            RawInitial::Explicit(v) => Ok(InitialSpec::Explicit(v)),
        }
    }
}

/// Parameters of one simulation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimConfig {
    pub n: usize,
    pub dt: f64,
    pub t_end: f64,
    pub seed: u64,
    #[serde(default = "default_true")]
    pub noise_enabled: bool,
    pub initial: InitialSpec,
    pub potential: PotentialSpec,
    #[serde(default = "default_stride")]
    pub snapshot_stride: usize,
    /// Keep full states at every snapshot.
    #[serde(default)]
    pub store_snapshots: bool,
}

fn default_true() -> bool {
    true
}

fn default_stride() -> usize {
    1
}

impl SimConfig {
    /// A noisy run with the given size, step, horizon and seed, started from
    /// `g = 0` with `ξ = 0`.
    pub fn new(n: usize, dt: f64, t_end: f64, seed: u64) -> Self {
        Self {
            n,
            dt,
            t_end,
            seed,
            noise_enabled: true,
            initial: InitialSpec::Constant(0.0),
            potential: PotentialSpec::constant(0.0),
            snapshot_stride: 1,
            store_snapshots: false,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(CfwdError::InvalidConfig(msg));
        if self.n == 0 {
            return bad("n must be at least 1".into());
        }
        if !(self.dt > 0.0 && self.dt.is_finite()) {
            return bad(format!("dt must be positive and finite, got {}", self.dt));
        }
        if !(self.t_end >= 0.0 && self.t_end.is_finite()) {
            return bad(format!(
                "t_end must be non-negative and finite, got {}",
                self.t_end
            ));
        }
        if self.snapshot_stride == 0 {
            return bad("snapshot_stride must be at least 1".into());
        }
        self.initial.materialize(self.n)?;
        Ok(())
    }

    /// Number of steps needed to reach `t_end`.
    pub fn step_count(&self) -> u64 {
        let ratio = self.t_end / self.dt;
        let nearest = ratio.round();
        if (ratio - nearest).abs() <= 1e-9 * nearest.max(1.0) {
            nearest as u64
        } else {
            ratio.ceil() as u64
        }
    }
}

/// Current state of one replica.
#[derive(Debug, Clone)]
pub struct SimState {
    pub x: GridFunction,
    pub partition: ClusterPartition,
    pub t: f64,
    pub step_index: u64,
    rng: StreamRng,
}

/// Diagnostics of a single step.
#[derive(Debug, Clone)]
pub struct StepReport {
    /// Gaussian increment applied to each cluster, in block order.
    pub noise_increments: Vec<f64>,
    /// `dt * (ξ - pr_X ξ)` per cell.
    pub drift_increments: Vec<f64>,
    /// Pooling events in the order restoration.
    pub merges: usize,
    /// Positions before order restoration.
    pub pre_pool_proposal: GeneralGridFunction,
}

/// Fragmentation drift `ξ - pr_X ξ`.
pub fn drift_term(x: &GridFunction, xi_grid: &GeneralGridFunction) -> Result<GeneralGridFunction> {
    if x.n() != xi_grid.n() {
        return Err(CfwdError::DimensionMismatch {
            left: x.n(),
            right: xi_grid.n(),
        });
    }
    Ok(drift_on_partition(&cluster_decompose(x), xi_grid))
}

pub(crate) fn drift_on_partition(
    partition: &ClusterPartition,
    xi_grid: &GeneralGridFunction,
) -> GeneralGridFunction {
    let projected = project_onto_partition(partition, xi_grid);
    let values = xi_grid
        .values()
        .iter()
        .zip(projected.values())
        .map(|(xi, p)| xi - p)
        .collect();
    GeneralGridFunction::new(values).expect("difference of finite values")
}

/// Scales standard normal draws, one per cluster, to variance `dt / mass`.
pub fn cluster_noise_from_normals(
    partition: &ClusterPartition,
    dt: f64,
    normals: &[f64],
) -> Vec<f64> {
    assert_eq!(
        partition.len(),
        normals.len(),
        "one normal draw per cluster"
    );
    partition
        .masses()
        .iter()
        .zip(normals)
        .map(|(m, z)| z * (dt / m).sqrt())
        .collect()
}

/// One independent `N(0, dt / mass)` draw per cluster, in block order.
pub fn sample_cluster_noise(
    partition: &ClusterPartition,
    dt: f64,
    rng: &mut StreamRng,
) -> Vec<f64> {
    let normals: Vec<f64> = (0..partition.len())
        .map(|_| StandardNormal.sample(rng))
        .collect();
    cluster_noise_from_normals(partition, dt, &normals)
}

/// A validated configuration together with the materialized potential.
#[derive(Debug, Clone)]
pub struct Simulator {
    config: SimConfig,
    xi_grid: GeneralGridFunction,
    weights: Vec<f64>,
}

impl Simulator {
    pub fn new(config: SimConfig) -> Result<Self> {
        config.validate()?;
        let xi_grid = materialize_potential(&config.potential, config.n);
        let weights = vec![1.0; config.n];
        Ok(Self {
            config,
            xi_grid,
            weights,
        })
    }

    pub fn config(&self) -> &SimConfig {
        &self.config
    }

    pub fn xi_grid(&self) -> &GeneralGridFunction {
        &self.xi_grid
    }

    /// State at `t = 0` for replica 0.
    pub fn init_state(&self) -> SimState {
        self.init_replica(0)
    }

    /// State at `t = 0` with the random stream of `replica`.
    pub fn init_replica(&self, replica: u64) -> SimState {
        let x = self
            .config
            .initial
            .materialize(self.config.n)
            .expect("validated on construction");
        let partition = cluster_decompose(&x);
        SimState {
            x,
            partition,
            t: 0.0,
            step_index: 0,
            rng: replica_stream(self.config.seed, replica),
        }
    }

    /// Advances `state` by one time step.
    pub fn step(&self, state: &mut SimState) -> Result<StepReport> {
        let dt = self.config.dt;
        let partition = &state.partition;
        let noise = if self.config.noise_enabled {
            sample_cluster_noise(partition, dt, &mut state.rng)
        } else {
            vec![0.0; partition.len()]
        };
        let drift = drift_on_partition(partition, &self.xi_grid);
        let drift_increments: Vec<f64> = drift.values().iter().map(|d| dt * d).collect();

        let x = state.x.values();
        let mut proposal = Vec::with_capacity(x.len());
        for (b, block) in partition.blocks().iter().enumerate() {
            for i in block.clone() {
                proposal.push(x[i] + noise[b] + drift_increments[i]);
            }
        }
        let proposal = GeneralGridFunction::new(proposal).map_err(|e| CfwdError::Step {
            step: state.step_index,
            message: format!("non-finite proposal: {e}"),
        })?;
        let (next, stats) = isotonic_project_with_stats(&proposal, &self.weights)?;

        state.partition = cluster_decompose(&next);
        state.x = next;
        state.step_index += 1;
        state.t = state.step_index as f64 * dt;
        Ok(StepReport {
            noise_increments: noise,
            drift_increments,
            merges: stats.merges,
            pre_pool_proposal: proposal,
        })
    }
}
