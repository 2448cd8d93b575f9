//! Experiment plans: a TOML document with a base configuration, optional
//! sweep points overriding it, probes, output settings and check options.
//!
//! ```toml
//! replicas = 50
//!
//! [base]
//! n = 256
//! dt = 1e-4
//! t_end = 0.5
//! seed = 7
//! initial = "constant:0"      # "identity", "levels:k" or an explicit array
//! potential = "levels:4"      # "zero", "levels:k" or { breakpoints, values }
//!
//! [[sweep]]
//! name = "levels-16"
//! potential = "levels:16"
//!
//! [probes]
//! pairs = [[0, 0]]
//! h = [{ id = "left", u = 0.0, v = 0.25 }]
//! ```

use std::fmt;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::dynamics::{InitialSpec, SimConfig};
use crate::error::CfwdError;
use crate::monotone::{make_test_function, PotentialSpec};
use crate::observables::{HProbe, ProbeSet, SupermartingaleOptions};

/// Environment variable holding the default output directory.
pub const OUT_DIR_ENV: &str = "CFWD_OUT_DIR";
const DEFAULT_OUT_DIR: &str = "cfwd-out";

/// A plan rejected at a specific field.
#[derive(Debug, Clone, PartialEq)]
pub struct PlanError {
    pub path: String,
    pub message: String,
}

impl fmt::Display for PlanError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.path.is_empty() || self.path == "." {
            write!(f, "{}", self.message)
        } else {
            write!(f, "{}: {}", self.path, self.message)
        }
    }
}

impl std::error::Error for PlanError {}

fn plan_err(path: impl Into<String>, message: impl fmt::Display) -> PlanError {
    PlanError {
        path: path.into(),
        message: message.to_string(),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
enum RawPotential {
    Preset(String),
    Explicit {
        breakpoints: Vec<f64>,
        values: Vec<f64>,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
enum RawInitial {
    Preset(String),
    Explicit(Vec<f64>),
}

#[derive(Debug, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawConfig {
    #[serde(skip_serializing_if = "Option::is_none")]
    name: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    n: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    dt: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    t_end: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    seed: Option<u64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    noise_enabled: Option<bool>,
    #[serde(skip_serializing_if = "Option::is_none")]
    initial: Option<RawInitial>,
    #[serde(skip_serializing_if = "Option::is_none")]
    potential: Option<RawPotential>,
    #[serde(skip_serializing_if = "Option::is_none")]
    snapshot_stride: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    store_snapshots: Option<bool>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct HProbeSpec {
    pub id: String,
    pub u: f64,
    pub v: f64,
}

/// Probes as written in the plan; `pairs` are 0-based cell indices.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProbeSpec {
    #[serde(default)]
    pub pairs: Vec<[usize; 2]>,
    #[serde(default)]
    pub h: Vec<HProbeSpec>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum OutputFormat {
    Csv,
    Json,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputSpec {
    pub dir: String,
    pub formats: Vec<OutputFormat>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CheckSpec {
    pub supermartingale_k: f64,
    pub supermartingale_windows: usize,
}

impl Default for CheckSpec {
    fn default() -> Self {
        let d = SupermartingaleOptions::default();
        Self {
            supermartingale_k: d.k,
            supermartingale_windows: d.windows,
        }
    }
}

/// Test hooks.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DebugSpec {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub corrupt_at_step: Option<u64>,
}

#[derive(Debug, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
struct RawPlan {
    #[serde(skip_serializing_if = "Option::is_none")]
    replicas: Option<usize>,
    base: RawConfig,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    sweep: Vec<RawConfig>,
    #[serde(default)]
    probes: ProbeSpec,
    #[serde(skip_serializing_if = "Option::is_none")]
    output: Option<RawOutput>,
    #[serde(skip_serializing_if = "Option::is_none")]
    checks: Option<CheckSpec>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    debug: Option<DebugSpec>,
}

#[derive(Debug, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
struct RawOutput {
    #[serde(skip_serializing_if = "Option::is_none")]
    dir: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    formats: Option<Vec<OutputFormat>>,
}

/// One named configuration of a sweep.
#[derive(Debug, Clone, PartialEq)]
pub struct SweepPoint {
    pub name: String,
    pub config: SimConfig,
}

/// A validated plan with every preset resolved.
#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentPlan {
    pub base: SimConfig,
    /// Overrides of `base`; empty means a single point named `base`.
    pub sweep: Vec<SweepPoint>,
    pub replicas: usize,
    pub probes: ProbeSpec,
    pub output: OutputSpec,
    pub checks: CheckSpec,
    pub debug: DebugSpec,
}

fn resolve_potential(raw: &RawPotential, path: &str) -> Result<PotentialSpec, PlanError> {
    match raw {
        RawPotential::Preset(s) => match s.split_once(':') {
            None if s == "zero" => Ok(PotentialSpec::constant(0.0)),
            Some(("levels", k)) => {
                let k: usize = k
                    .trim()
                    .parse()
                    .map_err(|_| plan_err(path, format!("bad level count in `{s}`")))?;
                PotentialSpec::levels(k).map_err(|e| plan_err(path, e))
            }
            _ => Err(plan_err(path, format!("unknown potential preset `{s}`"))),
        },
        RawPotential::Explicit {
            breakpoints,
            values,
        } => PotentialSpec::new(breakpoints.clone(), values.clone()).map_err(|e| {
            let field = match &e {
                CfwdError::InvalidPotential(m) if m.contains("breakpoint") => "breakpoints",
                _ => "values",
            };
            plan_err(format!("{path}.{field}"), e)
        }),
    }
}

fn resolve_initial(raw: &RawInitial, path: &str) -> Result<InitialSpec, PlanError> {
    match raw {
        RawInitial::Preset(s) => s.parse().map_err(|e| plan_err(path, e)),
        RawInitial::Explicit(v) => Ok(InitialSpec::Explicit(v.clone())),
    }
}

fn apply(base: Option<&SimConfig>, raw: &RawConfig, path: &str) -> Result<SimConfig, PlanError> {
    let required = |field: &str| plan_err(format!("{path}.{field}"), "missing field");
    let mut c = match base {
        Some(b) => b.clone(),
        None => {
            let mut c = SimConfig::new(
                raw.n.ok_or_else(|| required("n"))?,
                raw.dt.ok_or_else(|| required("dt"))?,
                raw.t_end.ok_or_else(|| required("t_end"))?,
                raw.seed.ok_or_else(|| required("seed"))?,
            );
            c.noise_enabled = true;
            c
        }
    };
    if let Some(n) = raw.n {
        c.n = n;
    }
    if let Some(dt) = raw.dt {
        c.dt = dt;
    }
    if let Some(t) = raw.t_end {
        c.t_end = t;
    }
    if let Some(s) = raw.seed {
        c.seed = s;
    }
    if let Some(b) = raw.noise_enabled {
        c.noise_enabled = b;
    }
    if let Some(i) = &raw.initial {
        c.initial = resolve_initial(i, &format!("{path}.initial"))?;
    }
    if let Some(p) = &raw.potential {
        c.potential = resolve_potential(p, &format!("{path}.potential"))?;
    }
    if let Some(s) = raw.snapshot_stride {
        c.snapshot_stride = s;
    }
    if let Some(s) = raw.store_snapshots {
        c.store_snapshots = s;
    }
    c.validate().map_err(|e| {
        let field = match &e {
            CfwdError::NotMonotone { .. } | CfwdError::NonFinite { .. } => "initial",
            CfwdError::InvalidConfig(m) if m.starts_with("dt") => "dt",
            CfwdError::InvalidConfig(m) if m.starts_with("t_end") => "t_end",
            CfwdError::InvalidConfig(m) if m.starts_with("snapshot") => "snapshot_stride",
            CfwdError::InvalidConfig(m) if m.starts_with("n ") => "n",
            _ => "initial",
        };
        plan_err(format!("{path}.{field}"), e)
    })?;
    Ok(c)
}

/// Parses and validates a plan document.
pub fn parse_plan(text: &str) -> Result<ExperimentPlan, PlanError> {
    let de = toml::Deserializer::parse(text).map_err(|e| plan_err("", e.to_string().trim()))?;
    let raw: RawPlan = serde_path_to_error::deserialize(de).map_err(|e| {
        let path = e.path().to_string();
        plan_err(path, e.into_inner().to_string().trim())
    })?;

    let base = apply(None, &raw.base, "base")?;
    let mut sweep = Vec::with_capacity(raw.sweep.len());
    for (k, point) in raw.sweep.iter().enumerate() {
        let path = format!("sweep[{k}]");
        let name = point
            .name
            .clone()
            .ok_or_else(|| plan_err(format!("{path}.name"), "missing field"))?;
        if name.is_empty() || name.contains(['/', '\\']) || name == "." || name == ".." {
            return Err(plan_err(
                format!("{path}.name"),
                format!("unusable name `{name}`"),
            ));
        }
        if sweep.iter().any(|p: &SweepPoint| p.name == name) {
            return Err(plan_err(
                format!("{path}.name"),
                format!("duplicate name `{name}`"),
            ));
        }
        sweep.push(SweepPoint {
            config: apply(Some(&base), point, &path)?,
            name,
        });
    }

    let replicas = raw.replicas.unwrap_or(1);
    if replicas == 0 {
        return Err(plan_err("replicas", "must be at least 1"));
    }

    let plan = ExperimentPlan {
        base,
        sweep,
        replicas,
        probes: raw.probes,
        output: OutputSpec {
            dir: raw
                .output
                .as_ref()
                .and_then(|o| o.dir.clone())
                .or_else(|| std::env::var(OUT_DIR_ENV).ok())
                .unwrap_or_else(|| DEFAULT_OUT_DIR.to_string()),
            formats: raw
                .output
                .as_ref()
                .and_then(|o| o.formats.clone())
                .unwrap_or_else(|| vec![OutputFormat::Csv, OutputFormat::Json]),
        },
        checks: raw.checks.unwrap_or_default(),
        debug: raw.debug.unwrap_or_default(),
    };
    if plan.checks.supermartingale_windows == 0 {
        return Err(plan_err(
            "checks.supermartingale_windows",
            "must be at least 1",
        ));
    }
    for point in plan.points() {
        plan.probe_set(point.config.n).map_err(|mut e| {
            if !plan.sweep.is_empty() {
                e.message = format!("{} (sweep point `{}`)", e.message, point.name);
            }
            e
        })?;
    }
    Ok(plan)
}

impl ExperimentPlan {
    /// Sweep points, or the base configuration as a single point.
    pub fn points(&self) -> Vec<SweepPoint> {
        if self.sweep.is_empty() {
            vec![SweepPoint {
                name: "base".into(),
                config: self.base.clone(),
            }]
        } else {
            self.sweep.clone()
        }
    }

    /// Probes materialized for a grid of `n` cells.
    pub fn probe_set(&self, n: usize) -> Result<ProbeSet, PlanError> {
        let mut set = ProbeSet::default();
        for (k, [i, j]) in self.probes.pairs.iter().copied().enumerate() {
            if i.max(j) >= n {
                return Err(plan_err(
                    format!("probes.pairs[{k}]"),
                    format!("cell outside 0..{n}"),
                ));
            }
            set.pairs.push((i.min(j), i.max(j)));
        }
        for (k, p) in self.probes.h.iter().enumerate() {
            if p.id.is_empty() || p.id.contains(['/', '\\']) {
                return Err(plan_err(
                    format!("probes.h[{k}].id"),
                    format!("unusable id `{}`", p.id),
                ));
            }
            if self.probes.h[..k].iter().any(|q| q.id == p.id) {
                return Err(plan_err(
                    format!("probes.h[{k}].id"),
                    format!("duplicate id `{}`", p.id),
                ));
            }
            let h = make_test_function(p.u, p.v, n)
                .map_err(|e| plan_err(format!("probes.h[{k}]"), e))?;
            set.tests.push(HProbe {
                id: p.id.clone(),
                h,
            });
        }
        Ok(set)
    }

    pub fn supermartingale_options(&self) -> SupermartingaleOptions {
        SupermartingaleOptions {
            k: self.checks.supermartingale_k,
            windows: self.checks.supermartingale_windows,
        }
    }

    /// Canonical document: every field explicit, presets expanded.
    pub fn to_toml(&self) -> String {
        let full = |name: Option<String>, c: &SimConfig| RawConfig {
            name,
            n: Some(c.n),
            dt: Some(c.dt),
            t_end: Some(c.t_end),
            seed: Some(c.seed),
            noise_enabled: Some(c.noise_enabled),
            initial: Some(match &c.initial {
                InitialSpec::Explicit(v) => RawInitial::Explicit(v.clone()),
                other => RawInitial::Preset(other.to_string()),
            }),
            potential: Some(RawPotential::Explicit {
                breakpoints: c.potential.breakpoints().to_vec(),
                values: c.potential.level_values().to_vec(),
            }),
            snapshot_stride: Some(c.snapshot_stride),
            store_snapshots: Some(c.store_snapshots),
        };
        let raw = RawPlan {
            replicas: Some(self.replicas),
            base: full(None, &self.base),
            sweep: self
                .sweep
                .iter()
                .map(|p| full(Some(p.name.clone()), &p.config))
                .collect(),
            probes: self.probes.clone(),
            output: Some(RawOutput {
                dir: Some(self.output.dir.clone()),
                formats: Some(self.output.formats.clone()),
            }),
            checks: Some(self.checks),
            debug: (self.debug != DebugSpec::default()).then(|| self.debug.clone()),
        };
        toml::to_string(&raw).expect("plan serializes")
    }

    /// SHA-256 of the canonical document, hex encoded.
    pub fn config_hash(&self) -> String {
        let digest = Sha256::digest(self.to_toml().as_bytes());
        digest.iter().map(|b| format!("{b:02x}")).collect()
    }
}
