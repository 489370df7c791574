//! Stopping families.
//!
//! [`build_stopping`] grows the minimal family that contains the root and,
//! with every member `F`, each maximal proper subcube `F'` with
//! `λ_{F'} ≥ 2 λ_F`. [`strong_stopping`] runs the same scheme on the
//! product term of the multilinear maximal function with the threshold
//! factor `(2m)^{Σ rᵢ}` and returns the resulting sparse family.

use crate::error::{Error, Result};
use crate::grid::{CubeId, CubeSeq, Grid, LeafFn};
use crate::operators::{cube_log_terms, ExponentProfile};
use crate::sparse::{AllocationEntry, SparseAllocation, SparseFamily};

#[derive(Clone, Debug, PartialEq)]
pub struct StoppingFamily {
    members: Vec<bool>,
    /// π(Q) for every cube, as a flat index.
    parent: Vec<usize>,
}

impl StoppingFamily {
    /// Family grown top-down by `joins(Q, π(parent(Q)))`.
    fn grow(grid: &Grid, mut joins: impl FnMut(usize, usize) -> bool) -> Self {
        let n = grid.num_cubes();
        let mut members = vec![false; n];
        let mut parent = vec![0; n];
        members[0] = true;
        for c in 1..n {
            let f = parent[(c - 1) / 2];
            if joins(c, f) {
                members[c] = true;
                parent[c] = c;
            } else {
                parent[c] = f;
            }
        }
        StoppingFamily { members, parent }
    }

    pub fn cubes(&self) -> Vec<CubeId> {
        self.members
            .iter()
            .enumerate()
            .filter(|(_, m)| **m)
            .map(|(c, _)| CubeId::from_flat(c))
            .collect()
    }

    pub fn len(&self) -> usize {
        self.members.iter().filter(|m| **m).count()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn contains(&self, q: CubeId) -> bool {
        self.members[q.flat()]
    }

    /// The smallest family member containing `q`.
    pub fn parent(&self, q: CubeId) -> CubeId {
        CubeId::from_flat(self.parent[q.flat()])
    }

    pub fn membership(&self) -> &[bool] {
        &self.members
    }

    pub fn parent_flat(&self) -> &[usize] {
        &self.parent
    }
}

/// Minimal stopping family for the data `λ`, comparisons with `≥`.
pub fn build_stopping(grid: &Grid, lam: &CubeSeq) -> Result<StoppingFamily> {
    lam.check(grid)?;
    let v = lam.values();
    Ok(StoppingFamily::grow(grid, |c, f| v[c] >= 2.0 * v[f]))
}

/// Whether `members` contains the root and is closed under the growth rule.
pub fn is_closed(grid: &Grid, lam: &CubeSeq, members: &[bool]) -> bool {
    if !members[0] {
        return false;
    }
    let v = lam.values();
    let n = grid.num_cubes();
    for f in (0..n).filter(|&f| members[f]) {
        let threshold = 2.0 * v[f];
        let mut stack: Vec<usize> = children_flat(f, n);
        while let Some(c) = stack.pop() {
            if v[c] >= threshold {
                if !members[c] {
                    return false;
                }
            } else {
                stack.extend(children_flat(c, n));
            }
        }
    }
    true
}

fn children_flat(c: usize, n: usize) -> Vec<usize> {
    [2 * c + 1, 2 * c + 2]
        .into_iter()
        .filter(|&k| k < n)
        .collect()
}

/// Ties in the log-domain comparison are resolved in favor of joining.
const TIE_TOL: f64 = 1e-12;

/// Sparse family of the strong-type stopping construction.
#[derive(Clone, Debug)]
pub struct StrongStopping {
    pub family: SparseFamily,
    /// `Ẽ(Q)`: the leaves of `Q` outside all stopping children of `Q`.
    pub e_tilde: SparseAllocation,
    /// `ln` of the maximal-function argument on every cube.
    pub log_values: Vec<f64>,
    /// `ln (2m)^{Σ rᵢ}`.
    pub log_factor: f64,
    stopping: StoppingFamily,
}

impl StrongStopping {
    pub fn stopping(&self) -> &StoppingFamily {
        &self.stopping
    }

    /// `Σ_{Q ∈ 𝒮} V(Q) 1_{Ẽ(Q)}` at every leaf.
    pub fn dominating_sum(&self, grid: &Grid) -> Vec<f64> {
        let first = grid.num_leaves() - 1;
        (0..grid.num_leaves())
            .map(|k| self.log_values[self.stopping.parent[first + k]].exp())
            .collect()
    }

    pub fn factor(&self) -> f64 {
        self.log_factor.exp()
    }
}

/// Stopping family for `ℳ^r_ρ(f⃗w⃗)`.
///
/// Starting from the root, a maximal subcube `Q'` of a member `Q` joins when
/// `V(Q') ≥ (2m)^{Σrᵢ} V(Q)` and `V(Q') > 0`, where `V` is the product
/// term of the maximal function evaluated on `fᵢwᵢ` and `m - 1 = fs.len()`.
/// The disjoint sets `Ẽ(Q)` certify that the family is 1/2-sparse.
pub fn strong_stopping(
    grid: &Grid,
    fs: &[LeafFn],
    ws: &[LeafFn],
    prof: &ExponentProfile,
) -> Result<StrongStopping> {
    if fs.len() != ws.len() {
        return Err(Error::LengthMismatch {
            expected: fs.len(),
            got: ws.len(),
        });
    }
    for w in ws {
        grid.check_fn(w)?;
        w.require_weight()?;
    }
    let products: Vec<LeafFn> = fs.iter().zip(ws).map(|(f, w)| f.product(w)).collect();
    let log_values = cube_log_terms(grid, &products, prof)?;
    let m = fs.len() + 1;
    let log_factor = prof.r_sum() * ((2 * m) as f64).ln();
    let stopping = StoppingFamily::grow(grid, |c, f| {
        log_values[c] > f64::NEG_INFINITY && log_values[c] >= log_values[f] + log_factor - TIE_TOL
    });

    let first = grid.num_leaves() - 1;
    let cubes = stopping.cubes();
    let entries = cubes
        .iter()
        .map(|&q| {
            let density = grid
                .leaf_range(q)
                .map(|k| {
                    if stopping.parent[first + k] == q.flat() {
                        1.0
                    } else {
                        0.0
                    }
                })
                .collect();
            let mut e = AllocationEntry {
                cube: q,
                budget: 0.0,
                density,
            };
            e.budget = e.mass(grid);
            e
        })
        .collect();
    let e_tilde = SparseAllocation { entries };
    let family = SparseFamily::new(grid, cubes, 0.5, e_tilde.clone())?;
    Ok(StrongStopping {
        family,
        e_tilde,
        log_values,
        log_factor,
        stopping,
    })
}
