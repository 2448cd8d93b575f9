//! Weighted least-squares projection onto the non-decreasing cone by
//! pool-adjacent-violators.

use crate::error::{CfwdError, Result};

use super::{check_same_len, GeneralGridFunction, GridFunction};

/// Bookkeeping from one isotonic projection.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct IsotonicStats {
    /// Maximal runs of bit-identical proposal values.
    pub runs: usize,
    /// Blocks of the output.
    pub blocks: usize,
    /// Pooling events, `runs - blocks`.
    pub merges: usize,
}

#[derive(Debug, Clone, Copy)]
struct Block {
    start: usize,
    end: usize,
    weighted_sum: f64,
    weight: f64,
    value: f64,
    lo: f64,
    hi: f64,
    pooled: bool,
}

impl Block {
    fn absorb(&mut self, other: &Block) {
        self.end = other.end;
        self.weighted_sum += other.weighted_sum;
        self.weight += other.weight;
        self.lo = self.lo.min(other.lo);
        self.hi = self.hi.max(other.hi);
        self.pooled = true;
        self.value = (self.weighted_sum / self.weight).clamp(self.lo, self.hi);
    }
}

/// Minimizes `Σ w_i (y_i - proposal_i)^2` over non-decreasing `y`.
pub fn isotonic_project(proposal: &GeneralGridFunction, weights: &[f64]) -> Result<GridFunction> {
    isotonic_project_with_stats(proposal, weights).map(|(y, _)| y)
}

/// [`isotonic_project`] that also reports how many pooling events happened.
///
/// Runs of bit-identical proposal values are collapsed before pooling, so they
/// always land in one output block. Every pooled block is written back as a
/// single shared value; unpooled runs keep their proposal value exactly.
pub fn isotonic_project_with_stats(
    proposal: &GeneralGridFunction,
    weights: &[f64],
) -> Result<(GridFunction, IsotonicStats)> {
    check_same_len(proposal.n(), weights.len())?;
    if proposal.n() == 0 {
        return Err(CfwdError::Empty);
    }
    if let Some(index) = weights.iter().position(|w| !w.is_finite() || *w <= 0.0) {
        return Err(CfwdError::NonPositiveWeight {
            index,
            value: weights[index],
        });
    }
    let p = proposal.values();

    let mut stack: Vec<Block> = Vec::new();
    let mut runs = 0;
    let mut i = 0;
    while i < p.len() {
        let value = p[i];
        let start = i;
        let mut weight = 0.0;
        while i < p.len() && p[i] == value {
            weight += weights[i];
            i += 1;
        }
        runs += 1;
        let mut block = Block {
            start,
            end: i,
            weighted_sum: weight * value,
            weight,
            value,
            lo: value,
            hi: value,
            pooled: false,
        };
        // Pooling on ties keeps equal neighbours together.
        while let Some(prev) = stack.last() {
            if prev.value < block.value {
                break;
            }
            let mut merged = *prev;
            stack.pop();
            merged.absorb(&block);
            block = merged;
        }
        stack.push(block);
    }

    let mut out = vec![0.0; p.len()];
    for b in &stack {
        let v = if b.pooled { b.value } else { p[b.start] };
        out[b.start..b.end].fill(v);
    }
    let stats = IsotonicStats {
        runs,
        blocks: stack.len(),
        merges: runs - stack.len(),
    };
    Ok((GridFunction::from_sorted_unchecked(out), stats))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn gg(v: &[f64]) -> GeneralGridFunction {
        GeneralGridFunction::new(v.to_vec()).unwrap()
    }

    #[test]
    fn pools_full_violation() {
        let (y, stats) = isotonic_project_with_stats(&gg(&[3.0, 1.0, 2.0]), &[1.0; 3]).unwrap();
        assert_eq!(y.values(), &[2.0, 2.0, 2.0]);
        assert_eq!(stats.merges, 2);
    }

    #[test]
    fn monotone_input_is_fixed() {
        let x = gg(&[1.0, 2.0, 3.0]);
        let (y, stats) = isotonic_project_with_stats(&x, &[0.2, 5.0, 1.0]).unwrap();
        assert_eq!(y.values(), x.values());
        assert_eq!(stats.merges, 0);
    }

    #[test]
    fn two_point_weighted_pool() {
        let y = isotonic_project(&gg(&[2.0, 1.0]), &[0.75, 0.25]).unwrap();
        assert_eq!(y.values(), &[1.75, 1.75]);
    }

    #[test]
    fn equal_runs_stay_together() {
        let x = gg(&[0.1, 0.1, 0.1, 0.3]);
        let (y, stats) = isotonic_project_with_stats(&x, &[1.0; 4]).unwrap();
        assert_eq!(y.values(), x.values());
        assert_eq!(stats.runs, 2);

        let (y, _) = isotonic_project_with_stats(&gg(&[1.0, 0.5, 0.5, 2.0]), &[1.0; 4]).unwrap();
        assert_eq!(y.values()[0], y.values()[2]);
    }

    #[test]
    fn rejects_bad_weights() {
        assert_eq!(
            isotonic_project(&gg(&[1.0, 2.0]), &[1.0, 0.0]),
            Err(CfwdError::NonPositiveWeight {
                index: 1,
                value: 0.0
            })
        );
        assert!(isotonic_project(&gg(&[1.0, 2.0]), &[1.0, -1.0]).is_err());
        assert!(matches!(
            isotonic_project(&gg(&[1.0, 2.0]), &[1.0]),
            Err(CfwdError::DimensionMismatch { .. })
        ));
    }
}
