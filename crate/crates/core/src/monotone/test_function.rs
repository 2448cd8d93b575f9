use serde::{Deserialize, Serialize};

use crate::error::{CfwdError, Result};

use super::{check_same_len, GeneralGridFunction, GridFunction};

const GRID_SNAP: f64 = 1e-9;

/// `h = 1_[mid, hi) - 1_[lo, mid)` on the grid, with `mid - lo == hi - mid`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct TestFunction {
    n: usize,
    lo: usize,
    mid: usize,
    hi: usize,
}

/// Builds `h_{u,v}` for grid points `u < v` whose midpoint is also a grid point.
pub fn make_test_function(u: f64, v: f64, n: usize) -> Result<TestFunction> {
    let bad = |msg: String| Err(CfwdError::InvalidTestFunction(msg));
    if n == 0 {
        return bad("grid has no cells".into());
    }
    let lo = match snap(u, n) {
        Some(c) => c,
        None => return bad(format!("u = {u} is not a multiple of 1/{n}")),
    };
    let hi = match snap(v, n) {
        Some(c) => c,
        None => return bad(format!("v = {v} is not a multiple of 1/{n}")),
    };
    if lo >= hi || hi > n {
        return bad(format!("need 0 <= u < v <= 1, got u = {u}, v = {v}"));
    }
    if (lo + hi) % 2 != 0 {
        return bad(format!(
            "midpoint {} of [{u}, {v}) is not on the 1/{n} grid",
            (u + v) / 2.0
        ));
    }
    Ok(TestFunction {
        n,
        lo,
        mid: (lo + hi) / 2,
        hi,
    })
}

fn snap(x: f64, n: usize) -> Option<usize> {
    let scaled = x * n as f64;
    let cell = scaled.round();
    if !scaled.is_finite() || cell < 0.0 || (scaled - cell).abs() > GRID_SNAP * n as f64 {
        return None;
    }
    Some(cell as usize)
}

impl TestFunction {
    pub fn n(&self) -> usize {
        self.n
    }

    /// Support as cell indices `lo..hi`.
    pub fn support(&self) -> std::ops::Range<usize> {
        self.lo..self.hi
    }

    pub fn midpoint_cell(&self) -> usize {
        self.mid
    }

    /// Endpoints `(u, v)` as fractions of the unit interval.
    pub fn endpoints(&self) -> (f64, f64) {
        (
            self.lo as f64 / self.n as f64,
            self.hi as f64 / self.n as f64,
        )
    }

    pub fn to_grid(&self) -> GeneralGridFunction {
        let mut values = vec![0.0; self.n];
        values[self.lo..self.mid].fill(-1.0);
        values[self.mid..self.hi].fill(1.0);
        GeneralGridFunction { values }
    }

    /// `(f, h)` computed as the difference of two plain sums over the two
    /// halves. Both sums see equally many terms in the same order, so `f`
    /// constant on the support gives exactly zero, and a monotone `f` never
    /// gives a negative result.
    pub fn pair(&self, f: &GridFunction) -> Result<f64> {
        check_same_len(self.n, f.n())?;
        let v = f.values();
        let left: f64 = v[self.lo..self.mid].iter().sum();
        let right: f64 = v[self.mid..self.hi].iter().sum();
        Ok((right - left) / self.n as f64)
    }
}
