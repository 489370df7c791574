//! Finite dyadic grids.
//!
//! A grid of depth `D` is a complete binary tree whose `2^D` leaves are the
//! atoms of a positive measure `μ`. Every node ("cube") is the union of the
//! leaves below it. Cubes are stored in heap order: the cube at `level`
//! with `index` lives at flat position `2^level - 1 + index`, so the root
//! is 0 and the children of `c` are `2c + 1` and `2c + 2`.

use std::fmt;
use std::ops::Range;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::logspace;

pub const MAX_DEPTH: u32 = 24;

/// A node of the dyadic tree.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct CubeId {
    pub level: u32,
    pub index: usize,
}

impl CubeId {
    pub const ROOT: CubeId = CubeId { level: 0, index: 0 };

    pub fn new(level: u32, index: usize) -> Self {
        CubeId { level, index }
    }

    /// Position in heap order.
    #[inline]
    pub fn flat(self) -> usize {
        (1usize << self.level) - 1 + self.index
    }

    #[inline]
    pub fn from_flat(flat: usize) -> Self {
        let level = usize::BITS - 1 - (flat + 1).leading_zeros();
        CubeId {
            level,
            index: flat + 1 - (1usize << level),
        }
    }

    pub fn parent(self) -> Option<CubeId> {
        (self.level > 0).then(|| CubeId::new(self.level - 1, self.index >> 1))
    }

    pub fn children(self) -> [CubeId; 2] {
        [
            CubeId::new(self.level + 1, 2 * self.index),
            CubeId::new(self.level + 1, 2 * self.index + 1),
        ]
    }

    /// `other ⊆ self` in the tree order.
    #[inline]
    pub fn contains(self, other: CubeId) -> bool {
        other.level >= self.level && other.index >> (other.level - self.level) == self.index
    }
}

impl fmt::Display for CubeId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}:{}", self.level, self.index)
    }
}

impl FromStr for CubeId {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let (l, i) = s
            .split_once(':')
            .ok_or_else(|| Error::Parse(format!("cube id `{s}` is not of the form level:index")))?;
        let level = l
            .trim()
            .parse()
            .map_err(|_| Error::Parse(format!("bad level in `{s}`")))?;
        let index = i
            .trim()
            .parse()
            .map_err(|_| Error::Parse(format!("bad index in `{s}`")))?;
        Ok(CubeId { level, index })
    }
}

impl Serialize for CubeId {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for CubeId {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

/// A finite dyadic grid with strictly positive leaf masses.
#[derive(Clone, Debug, PartialEq)]
pub struct Grid {
    depth: u32,
    leaf_masses: Vec<f64>,
    cube_masses: Vec<f64>,
    log_cube_masses: Vec<f64>,
}

impl Grid {
    pub fn new(depth: u32, leaf_masses: Vec<f64>) -> Result<Self> {
        if depth > MAX_DEPTH {
            return Err(Error::DepthOutOfRange(depth));
        }
        let n = 1usize << depth;
        if leaf_masses.len() != n {
            return Err(Error::LengthMismatch {
                expected: n,
                got: leaf_masses.len(),
            });
        }
        if let Some((index, &value)) = leaf_masses
            .iter()
            .enumerate()
            .find(|(_, &m)| !(m > 0.0 && m.is_finite()))
        {
            return Err(Error::NonPositiveWeight { index, value });
        }
        let cube_masses = subtree_sums(depth, &leaf_masses);
        let log_cube_masses = cube_masses.iter().map(|m| m.ln()).collect();
        Ok(Grid {
            depth,
            leaf_masses,
            cube_masses,
            log_cube_masses,
        })
    }

    /// Uniform grid with total mass 1.
    pub fn uniform(depth: u32) -> Result<Self> {
        if depth > MAX_DEPTH {
            return Err(Error::DepthOutOfRange(depth));
        }
        let n = 1usize << depth;
        Grid::new(depth, vec![1.0 / n as f64; n])
    }

    pub fn depth(&self) -> u32 {
        self.depth
    }

    pub fn num_leaves(&self) -> usize {
        1 << self.depth
    }

    pub fn num_cubes(&self) -> usize {
        (1 << (self.depth + 1)) - 1
    }

    pub fn leaf_masses(&self) -> &[f64] {
        &self.leaf_masses
    }

    /// Measures of all cubes in heap order.
    pub fn cube_masses(&self) -> &[f64] {
        &self.cube_masses
    }

    pub fn log_cube_masses(&self) -> &[f64] {
        &self.log_cube_masses
    }

    pub fn total_mass(&self) -> f64 {
        self.cube_masses[0]
    }

    pub fn check_cube(&self, q: CubeId) -> Result<()> {
        if q.level > self.depth || q.index >= 1 << q.level {
            return Err(Error::InvalidCube(q, self.depth));
        }
        Ok(())
    }

    pub fn leaf(&self, k: usize) -> CubeId {
        CubeId::new(self.depth, k)
    }

    /// All cubes, root first, level by level.
    pub fn cubes(&self) -> impl Iterator<Item = CubeId> {
        (0..self.num_cubes()).map(CubeId::from_flat)
    }

    /// Leaf indices covered by `q`.
    #[inline]
    pub fn leaf_range(&self, q: CubeId) -> Range<usize> {
        let shift = self.depth - q.level;
        (q.index << shift)..((q.index + 1) << shift)
    }

    /// The leaf-level cube containing leaf `k`, walked up to `level`.
    #[inline]
    pub fn ancestor_at(&self, leaf: usize, level: u32) -> CubeId {
        CubeId::new(level, leaf >> (self.depth - level))
    }

    pub fn cube_measure(&self, q: CubeId) -> Result<f64> {
        self.check_cube(q)?;
        Ok(self.cube_masses[q.flat()])
    }

    pub fn average(&self, f: &LeafFn, q: CubeId) -> Result<f64> {
        self.check_cube(q)?;
        self.check_fn(f)?;
        let s: f64 = self
            .leaf_range(q)
            .map(|k| f.values[k] * self.leaf_masses[k])
            .sum();
        Ok(s / self.cube_masses[q.flat()])
    }

    /// The `D + 1` cubes containing a leaf, root first.
    pub fn ancestors(&self, leaf: CubeId) -> Result<Vec<CubeId>> {
        self.check_cube(leaf)?;
        if leaf.level != self.depth {
            return Err(Error::NotLeaf(leaf));
        }
        Ok((0..=self.depth)
            .map(|l| self.ancestor_at(leaf.index, l))
            .collect())
    }

    pub fn check_fn(&self, f: &LeafFn) -> Result<()> {
        if f.len() != self.num_leaves() {
            return Err(Error::LengthMismatch {
                expected: self.num_leaves(),
                got: f.len(),
            });
        }
        Ok(())
    }

    /// `∫_Q f dμ` for every cube, heap order.
    pub fn integrals(&self, f: &LeafFn) -> Vec<f64> {
        let leaf: Vec<f64> = f
            .values
            .iter()
            .zip(&self.leaf_masses)
            .map(|(v, m)| v * m)
            .collect();
        subtree_sums(self.depth, &leaf)
    }

    /// `ln ∫_Q f dμ` for every cube, accumulated in log space.
    pub fn log_integrals(&self, f: &LeafFn) -> Vec<f64> {
        let leaf: Vec<f64> = f
            .values
            .iter()
            .zip(&self.leaf_masses)
            .map(|(v, m)| logspace::ln(*v) + m.ln())
            .collect();
        self.log_subtree_sums(&leaf)
    }

    /// `ln (f)_Q` for every cube.
    pub fn log_averages(&self, f: &LeafFn) -> Vec<f64> {
        let mut out = self.log_integrals(f);
        for (o, lm) in out.iter_mut().zip(&self.log_cube_masses) {
            *o -= lm;
        }
        out
    }

    /// Bottom-up log-sum-exp of per-leaf log values.
    pub fn log_subtree_sums(&self, leaf_logs: &[f64]) -> Vec<f64> {
        let n = self.num_leaves();
        let mut out = vec![f64::NEG_INFINITY; self.num_cubes()];
        out[n - 1..].copy_from_slice(leaf_logs);
        for c in (0..n - 1).rev() {
            out[c] = logspace::add(out[2 * c + 1], out[2 * c + 2]);
        }
        out
    }
}

/// Bottom-up sums of leaf values over every cube, heap order.
pub fn subtree_sums(depth: u32, leaf_values: &[f64]) -> Vec<f64> {
    let n = 1usize << depth;
    let mut out = vec![0.0; 2 * n - 1];
    out[n - 1..].copy_from_slice(leaf_values);
    for c in (0..n - 1).rev() {
        out[c] = out[2 * c + 1] + out[2 * c + 2];
    }
    out
}

/// A nonnegative function on the leaves.
#[derive(Clone, Debug, PartialEq)]
pub struct LeafFn {
    values: Vec<f64>,
    strictly_positive: bool,
}

impl LeafFn {
    /// A nonnegative test function; zeros are allowed.
    pub fn new(values: Vec<f64>) -> Result<Self> {
        if let Some((index, &value)) = values
            .iter()
            .enumerate()
            .find(|(_, &v)| !(v >= 0.0 && v.is_finite()))
        {
            return Err(Error::NegativeValue { index, value });
        }
        let strictly_positive = values.iter().all(|&v| v > 0.0);
        Ok(LeafFn {
            values,
            strictly_positive,
        })
    }

    /// A weight: every entry must be strictly positive.
    pub fn weight(values: Vec<f64>) -> Result<Self> {
        if let Some((index, &value)) = values
            .iter()
            .enumerate()
            .find(|(_, &v)| !(v > 0.0 && v.is_finite()))
        {
            return Err(Error::NonPositiveWeight { index, value });
        }
        Ok(LeafFn {
            values,
            strictly_positive: true,
        })
    }

    pub fn constant(len: usize, c: f64) -> Result<Self> {
        LeafFn::new(vec![c; len])
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn is_strictly_positive(&self) -> bool {
        self.strictly_positive
    }

    /// Errors unless every entry is positive.
    pub fn require_weight(&self) -> Result<()> {
        match self.values.iter().enumerate().find(|(_, &v)| v <= 0.0) {
            Some((index, &value)) => Err(Error::NonPositiveWeight { index, value }),
            None => Ok(()),
        }
    }

    pub fn scaled(&self, c: f64) -> LeafFn {
        LeafFn {
            values: self.values.iter().map(|v| v * c).collect(),
            strictly_positive: self.strictly_positive && c > 0.0,
        }
    }

    /// Pointwise product.
    pub fn product(&self, other: &LeafFn) -> LeafFn {
        let values: Vec<f64> = self
            .values
            .iter()
            .zip(&other.values)
            .map(|(a, b)| a * b)
            .collect();
        let strictly_positive = values.iter().all(|&v| v > 0.0);
        LeafFn {
            values,
            strictly_positive,
        }
    }
}

/// A nonnegative number attached to every cube, heap order.
#[derive(Clone, Debug, PartialEq)]
pub struct CubeSeq {
    values: Vec<f64>,
}

impl CubeSeq {
    pub fn new(grid: &Grid, values: Vec<f64>) -> Result<Self> {
        if values.len() != grid.num_cubes() {
            return Err(Error::LengthMismatch {
                expected: grid.num_cubes(),
                got: values.len(),
            });
        }
        if let Some((index, &value)) = values
            .iter()
            .enumerate()
            .find(|(_, &v)| !(v >= 0.0 && v.is_finite()))
        {
            return Err(Error::NegativeValue { index, value });
        }
        Ok(CubeSeq { values })
    }

    pub fn zeros(grid: &Grid) -> Self {
        CubeSeq {
            values: vec![0.0; grid.num_cubes()],
        }
    }

    pub fn constant(grid: &Grid, c: f64) -> Result<Self> {
        CubeSeq::new(grid, vec![c; grid.num_cubes()])
    }

    /// Indicator of a set of cubes.
    pub fn indicator<I: IntoIterator<Item = CubeId>>(grid: &Grid, cubes: I) -> Result<Self> {
        let mut seq = CubeSeq::zeros(grid);
        for q in cubes {
            grid.check_cube(q)?;
            seq.values[q.flat()] = 1.0;
        }
        Ok(seq)
    }

    pub fn from_fn(grid: &Grid, mut f: impl FnMut(CubeId) -> f64) -> Result<Self> {
        CubeSeq::new(grid, grid.cubes().map(&mut f).collect())
    }

    #[inline]
    pub fn get(&self, q: CubeId) -> f64 {
        self.values[q.flat()]
    }

    pub fn set(&mut self, q: CubeId, v: f64) -> Result<()> {
        if !(v >= 0.0 && v.is_finite()) {
            return Err(Error::NegativeValue {
                index: q.flat(),
                value: v,
            });
        }
        self.values[q.flat()] = v;
        Ok(())
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn check(&self, grid: &Grid) -> Result<()> {
        if self.values.len() != grid.num_cubes() {
            return Err(Error::LengthMismatch {
                expected: grid.num_cubes(),
                got: self.values.len(),
            });
        }
        Ok(())
    }

    pub fn scaled(&self, c: f64) -> CubeSeq {
        CubeSeq {
            values: self.values.iter().map(|v| v * c).collect(),
        }
    }

    pub fn plus(&self, other: &CubeSeq) -> CubeSeq {
        CubeSeq {
            values: self
                .values
                .iter()
                .zip(&other.values)
                .map(|(a, b)| a + b)
                .collect(),
        }
    }
}
