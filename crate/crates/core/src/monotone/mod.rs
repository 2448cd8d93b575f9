//! Finite-dimensional model of the cone of non-decreasing square-integrable
//! functions on `(0, 1)`.
//!
//! A function is stored by its values on the `n` cells `[i/n, (i+1)/n)` of a
//! uniform grid, each cell carrying mass `1/n`. The value on a cell is the
//! value of the right-continuous version at the cell's left endpoint.
//!
//! Indices are 0-based throughout; cluster blocks are half-open ranges.

mod isotonic;
mod potential;
mod test_function;

use std::ops::Range;

use serde::{Deserialize, Serialize};

use crate::error::{CfwdError, Result};

pub use isotonic::{isotonic_project, isotonic_project_with_stats, IsotonicStats};
pub use potential::{materialize_potential, PotentialSpec};
pub use test_function::{make_test_function, TestFunction};

/// A non-decreasing vector of finite values on the uniform grid.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GridFunction {
    values: Vec<f64>,
}

impl GridFunction {
    pub fn new(values: Vec<f64>) -> Result<Self> {
        check_finite(&values)?;
        if values.is_empty() {
            return Err(CfwdError::Empty);
        }
        if let Some(index) = values.windows(2).position(|w| w[0] > w[1]) {
            return Err(CfwdError::NotMonotone {
                index,
                left: values[index],
                right: values[index + 1],
            });
        }
        Ok(Self { values })
    }

    /// Constant function `c` on `n` cells.
    pub fn constant(n: usize, c: f64) -> Result<Self> {
        Self::new(vec![c; n])
    }

    /// Caller guarantees monotonicity and finiteness.
    pub(crate) fn from_sorted_unchecked(values: Vec<f64>) -> Self {
        debug_assert!(values.windows(2).all(|w| w[0] <= w[1]));
        Self { values }
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn n(&self) -> usize {
        self.values.len()
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    pub fn as_general(&self) -> GeneralGridFunction {
        GeneralGridFunction {
            values: self.values.clone(),
        }
    }
}

impl<'de> Deserialize<'de> for GridFunction {
    fn deserialize<D: serde::Deserializer<'de>>(de: D) -> std::result::Result<Self, D::Error> {
        #[derive(Deserialize)]
        struct Raw {
            values: Vec<f64>,
        }
        let raw = Raw::deserialize(de)?;
        GridFunction::new(raw.values).map_err(serde::de::Error::custom)
    }
}

/// An arbitrary finite vector on the grid (test functions, potentials,
/// proposals before order restoration).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GeneralGridFunction {
    values: Vec<f64>,
}

impl GeneralGridFunction {
    pub fn new(values: Vec<f64>) -> Result<Self> {
        check_finite(&values)?;
        Ok(Self { values })
    }

    pub fn zeros(n: usize) -> Self {
        Self {
            values: vec![0.0; n],
        }
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn n(&self) -> usize {
        self.values.len()
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    pub fn is_non_decreasing(&self) -> bool {
        self.values.windows(2).all(|w| w[0] <= w[1])
    }
}

impl From<GridFunction> for GeneralGridFunction {
    fn from(f: GridFunction) -> Self {
        Self { values: f.values }
    }
}

fn check_finite(values: &[f64]) -> Result<()> {
    match values.iter().position(|v| !v.is_finite()) {
        Some(index) => Err(CfwdError::NonFinite {
            index,
            value: values[index],
        }),
        None => Ok(()),
    }
}

fn check_same_len(left: usize, right: usize) -> Result<()> {
    if left != right {
        return Err(CfwdError::DimensionMismatch { left, right });
    }
    Ok(())
}

/// Ordered maximal blocks of equal values: the discrete clusters.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ClusterPartition {
    n: usize,
    blocks: Vec<Range<usize>>,
}

impl ClusterPartition {
    /// Builds a partition from explicit blocks, which must be non-empty,
    /// contiguous and cover `0..n`.
    pub fn from_blocks(n: usize, blocks: Vec<Range<usize>>) -> Result<Self> {
        let mut next = 0;
        for b in &blocks {
            if b.start != next || b.end <= b.start {
                return Err(CfwdError::InvalidConfig(format!(
                    "blocks must be contiguous and non-empty, got {b:?} at offset {next}"
                )));
            }
            next = b.end;
        }
        if next != n || n == 0 {
            return Err(CfwdError::InvalidConfig(format!(
                "blocks cover 0..{next}, expected 0..{n}"
            )));
        }
        Ok(Self { n, blocks })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn blocks(&self) -> &[Range<usize>] {
        &self.blocks
    }

    pub fn len(&self) -> usize {
        self.blocks.len()
    }

    pub fn is_empty(&self) -> bool {
        self.blocks.is_empty()
    }

    /// Mass `block_length / n` of each block.
    pub fn masses(&self) -> Vec<f64> {
        self.blocks.iter().map(|b| self.block_mass(b)).collect()
    }

    fn block_mass(&self, b: &Range<usize>) -> f64 {
        b.len() as f64 / self.n as f64
    }

    /// Index of the block containing cell `i`.
    pub fn block_of(&self, i: usize) -> usize {
        assert!(i < self.n, "cell {i} out of range 0..{}", self.n);
        self.blocks.partition_point(|b| b.end <= i)
    }

    /// Mass of the cluster containing cell `i`.
    pub fn mass_of(&self, i: usize) -> f64 {
        self.block_mass(&self.blocks[self.block_of(i)])
    }
}

/// Splits `f` into maximal runs of bit-identical values.
pub fn cluster_decompose(f: &GridFunction) -> ClusterPartition {
    let v = f.values();
    let mut blocks = Vec::new();
    let mut start = 0;
    for i in 1..v.len() {
        if v[i] != v[i - 1] {
            blocks.push(start..i);
            start = i;
        }
    }
    blocks.push(start..v.len());
    ClusterPartition { n: v.len(), blocks }
}

/// Number of distinct values of `f`.
pub fn distinct_count(f: &GridFunction) -> usize {
    1 + f.values().windows(2).filter(|w| w[0] != w[1]).count()
}

/// Orthogonal projection of `h` onto the functions measurable with respect to
/// the level sets of `f`: every block is replaced by its mean.
pub fn project(f: &GridFunction, h: &GeneralGridFunction) -> Result<GeneralGridFunction> {
    check_same_len(f.n(), h.n())?;
    Ok(project_onto_partition(&cluster_decompose(f), h))
}

/// Same as [`project`] with a precomputed partition.
pub fn project_onto_partition(
    partition: &ClusterPartition,
    h: &GeneralGridFunction,
) -> GeneralGridFunction {
    assert_eq!(partition.n(), h.n(), "partition and vector sizes differ");
    let mut out = h.values().to_vec();
    for b in partition.blocks() {
        let mean = block_mean(&h.values()[b.clone()]);
        out[b.clone()].fill(mean);
    }
    GeneralGridFunction { values: out }
}

/// Mean of a non-empty slice, shifted by its first entry so that a constant
/// slice returns its value exactly. The result is clamped to the slice range.
pub(crate) fn block_mean(values: &[f64]) -> f64 {
    let first = values[0];
    if values.len() == 1 {
        return first;
    }
    let (mut lo, mut hi) = (first, first);
    let mut acc = KahanSum::default();
    for &v in &values[1..] {
        lo = lo.min(v);
        hi = hi.max(v);
        acc.add(v - first);
    }
    if lo == hi {
        return first;
    }
    (first + acc.total() / values.len() as f64).clamp(lo, hi)
}

/// Discrete `L2` pairing `(1/n) Σ a_i b_i`.
pub fn inner_product(a: &GeneralGridFunction, b: &GeneralGridFunction) -> Result<f64> {
    check_same_len(a.n(), b.n())?;
    let mut acc = KahanSum::default();
    for (x, y) in a.values().iter().zip(b.values()) {
        acc.add(x * y);
    }
    Ok(acc.total() / a.n() as f64)
}

/// Squared Hilbert-Schmidt norm of the projection onto the level sets of
/// `f`, summed over the basis `e_k = sqrt(n) 1_{cell k}`.
///
/// `pr_f e_k` equals `sqrt(n)/|B|` on the block `B` containing `k`, so its
/// squared norm is `(1/n) |B| (n/|B|^2) = 1/|B|`.
pub fn hs_norm_sq(f: &GridFunction) -> f64 {
    let partition = cluster_decompose(f);
    let n = f.n() as f64;
    let mut acc = KahanSum::default();
    for k in 0..f.n() {
        let size = partition.blocks()[partition.block_of(k)].len() as f64;
        let coord = n.sqrt() / size;
        acc.add(size * coord * coord / n);
    }
    acc.total()
}

/// Compensated summation.
#[derive(Debug, Default, Clone, Copy)]
pub(crate) struct KahanSum {
    sum: f64,
    carry: f64,
}

impl KahanSum {
    pub(crate) fn add(&mut self, x: f64) {
        let y = x - self.carry;
        let t = self.sum + y;
        self.carry = (t - self.sum) - y;
        self.sum = t;
    }

    pub(crate) fn total(&self) -> f64 {
        self.sum
    }
}
