use serde::{Deserialize, Serialize};

use crate::error::{CfwdError, Result};

use super::GeneralGridFunction;

/// Interaction potential: a bounded non-decreasing right-continuous step
/// function on `[0, 1)`.
///
/// `level_values[0]` holds on `[0, breakpoints[0])`, `level_values[j]` on
/// `[breakpoints[j-1], breakpoints[j])`, and the last value up to 1.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawPotential", into = "RawPotential")]
pub struct PotentialSpec {
    breakpoints: Vec<f64>,
    level_values: Vec<f64>,
}

#[derive(Serialize, Deserialize)]
struct RawPotential {
    breakpoints: Vec<f64>,
    values: Vec<f64>,
}

impl TryFrom<RawPotential> for PotentialSpec {
    type Error = CfwdError;

    fn try_from(raw: RawPotential) -> Result<Self> {
        PotentialSpec::new(raw.breakpoints, raw.values)
    }
}

impl From<PotentialSpec> for RawPotential {
    fn from(p: PotentialSpec) -> Self {
        RawPotential {
            breakpoints: p.breakpoints,
            values: p.level_values,
        }
    }
}

impl PotentialSpec {
    pub fn new(breakpoints: Vec<f64>, level_values: Vec<f64>) -> Result<Self> {
        let bad = |msg: String| Err(CfwdError::InvalidPotential(msg));
        if level_values.len() != breakpoints.len() + 1 {
            return bad(format!(
                "expected {} values for {} breakpoints, got {}",
                breakpoints.len() + 1,
                breakpoints.len(),
                level_values.len()
            ));
        }
        if let Some(b) = breakpoints.iter().find(|b| !(**b > 0.0 && **b < 1.0)) {
            return bad(format!("breakpoint {b} outside (0, 1)"));
        }
        if let Some(i) = breakpoints.windows(2).position(|w| w[0] >= w[1]) {
            return bad(format!("breakpoints not strictly increasing at index {i}"));
        }
        if let Some(v) = level_values.iter().find(|v| !v.is_finite()) {
            return bad(format!("non-finite value {v}"));
        }
        if let Some(i) = level_values.windows(2).position(|w| w[0] > w[1]) {
            return bad(format!(
                "values decrease at index {}: {} > {}",
                i + 1,
                level_values[i],
                level_values[i + 1]
            ));
        }
        Ok(Self {
            breakpoints,
            level_values,
        })
    }

    /// `ξ = c` everywhere.
    pub fn constant(c: f64) -> Self {
        Self {
            breakpoints: Vec::new(),
            level_values: vec![c],
        }
    }

    /// `k` equal-width steps on `[0, 1)` taking the values `0, 1/k, ..., (k-1)/k`.
    pub fn levels(k: usize) -> Result<Self> {
        if k == 0 {
            return Err(CfwdError::InvalidPotential("levels:0 has no steps".into()));
        }
        let kf = k as f64;
        let breakpoints = (1..k).map(|j| j as f64 / kf).collect();
        let level_values = (0..k).map(|j| j as f64 / kf).collect();
        Self::new(breakpoints, level_values)
    }

    pub fn breakpoints(&self) -> &[f64] {
        &self.breakpoints
    }

    pub fn level_values(&self) -> &[f64] {
        &self.level_values
    }

    /// `max |ξ|`.
    pub fn bound(&self) -> f64 {
        self.level_values
            .iter()
            .fold(0.0_f64, |m, v| m.max(v.abs()))
    }

    /// Value of the right-continuous step function at `u`.
    pub fn eval(&self, u: f64) -> f64 {
        let level = self.breakpoints.partition_point(|b| *b <= u);
        self.level_values[level]
    }

    /// Number of distinct values the potential takes on the `n`-cell grid.
    pub fn distinct_level_count(&self, n: usize) -> usize {
        let grid = materialize_potential(self, n);
        1 + grid.values().windows(2).filter(|w| w[0] != w[1]).count()
    }
}

/// Evaluates the potential at the left endpoint `i/n` of each cell.
pub fn materialize_potential(spec: &PotentialSpec, n: usize) -> GeneralGridFunction {
    let values = (0..n).map(|i| spec.eval(i as f64 / n as f64)).collect();
    GeneralGridFunction { values }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn constant_potential() {
        let g = materialize_potential(&PotentialSpec::constant(2.5), 5);
        assert_eq!(g.values(), &[2.5; 5]);
    }

    #[test]
    fn right_continuous_left_endpoint() {
        let p = PotentialSpec::new(vec![0.5], vec![0.0, 1.0]).unwrap();
        assert_eq!(materialize_potential(&p, 4).values(), &[0.0, 0.0, 1.0, 1.0]);
        assert_eq!(materialize_potential(&p, 3).values(), &[0.0, 0.0, 1.0]);
        assert_eq!(p.eval(0.5), 1.0);
    }

    #[test]
    fn levels_preset() {
        let p = PotentialSpec::levels(4).unwrap();
        assert_eq!(p.level_values(), &[0.0, 0.25, 0.5, 0.75]);
        assert_eq!(p.distinct_level_count(64), 4);
        assert_eq!(p.distinct_level_count(2), 2);
        assert_eq!(PotentialSpec::levels(3).unwrap().distinct_level_count(9), 3);
        assert_eq!(p.bound(), 0.75);
    }

    #[test]
    fn rejects_invalid() {
        assert!(PotentialSpec::new(vec![0.5], vec![1.0, 0.0]).is_err());
        assert!(PotentialSpec::new(vec![0.5], vec![1.0]).is_err());
        assert!(PotentialSpec::new(vec![0.6, 0.4], vec![0.0, 1.0, 2.0]).is_err());
        assert!(PotentialSpec::new(vec![1.0], vec![0.0, 1.0]).is_err());
        assert!(PotentialSpec::new(vec![], vec![f64::INFINITY]).is_err());
        assert!(PotentialSpec::levels(0).is_err());
    }

    #[test]
    fn serde_uses_values_key() {
        let p: PotentialSpec =
            serde_json::from_str(r#"{"breakpoints":[0.5],"values":[0,1]}"#).unwrap();
        assert_eq!(p.level_values(), &[0.0, 1.0]);
        let bad: std::result::Result<PotentialSpec, _> =
            serde_json::from_str(r#"{"breakpoints":[0.5],"values":[1,0]}"#);
        assert!(bad.is_err());
    }
}
