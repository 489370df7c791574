//! Dyadic maximal operators.
//!
//! Every supremum over the cubes containing a leaf is evaluated by one
//! root-to-leaf sweep carrying the running maximum of per-cube log terms.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::{CubeSeq, Grid, LeafFn};
use crate::logspace;

/// Exponents `rᵢ > 0` and fractional orders `0 ≤ ρᵢ < 1`, one pair per
/// function slot.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExponentProfile {
    r: Vec<f64>,
    rho: Vec<f64>,
}

impl ExponentProfile {
    pub fn new(r: Vec<f64>, rho: Vec<f64>) -> Result<Self> {
        if r.is_empty() {
            return Err(Error::Constraint(
                "at least one exponent rᵢ is required".into(),
            ));
        }
        if r.len() != rho.len() {
            return Err(Error::Constraint(format!(
                "r has {} entries but rho has {}",
                r.len(),
                rho.len()
            )));
        }
        for (i, &ri) in r.iter().enumerate() {
            if !(ri > 0.0 && ri.is_finite()) {
                return Err(Error::Constraint(format!(
                    "r[{i}] = {ri} must satisfy 0 < r < ∞"
                )));
            }
        }
        for (i, &p) in rho.iter().enumerate() {
            if !(0.0..1.0).contains(&p) {
                return Err(Error::Constraint(format!(
                    "rho[{i}] = {p} must satisfy 0 ≤ ρ < 1"
                )));
            }
        }
        Ok(ExponentProfile { r, rho })
    }

    /// `r ≡ 1`, `ρ ≡ 0` with `n` slots.
    pub fn plain(n: usize) -> Result<Self> {
        ExponentProfile::new(vec![1.0; n], vec![0.0; n])
    }

    /// Non-fractional profile with the given exponents.
    pub fn with_r(r: Vec<f64>) -> Result<Self> {
        let n = r.len();
        ExponentProfile::new(r, vec![0.0; n])
    }

    pub fn r(&self) -> &[f64] {
        &self.r
    }

    pub fn rho(&self) -> &[f64] {
        &self.rho
    }

    pub fn len(&self) -> usize {
        self.r.len()
    }

    pub fn is_empty(&self) -> bool {
        self.r.is_empty()
    }

    pub fn r_sum(&self) -> f64 {
        self.r.iter().sum()
    }
}

fn check_functions(grid: &Grid, fs: &[LeafFn], prof: &ExponentProfile) -> Result<()> {
    if fs.len() != prof.len() {
        return Err(Error::LengthMismatch {
            expected: prof.len(),
            got: fs.len(),
        });
    }
    fs.iter().try_for_each(|f| grid.check_fn(f))
}

/// `ln Πᵢ (μ(Q)^{-(1-ρᵢ)} ∫_Q fᵢ dμ)^{rᵢ}` for every cube, heap order.
pub fn cube_log_terms(grid: &Grid, fs: &[LeafFn], prof: &ExponentProfile) -> Result<Vec<f64>> {
    check_functions(grid, fs, prof)?;
    let lm = grid.log_cube_masses();
    let mut acc = vec![0.0; grid.num_cubes()];
    for ((f, &r), &rho) in fs.iter().zip(prof.r()).zip(prof.rho()) {
        let li = grid.log_integrals(f);
        for ((a, i), m) in acc.iter_mut().zip(&li).zip(lm) {
            *a += logspace::pow(i - (1.0 - rho) * m, r);
        }
    }
    Ok(acc)
}

/// Running maximum of per-cube values along every root-to-leaf path;
/// returns the leaf values.
pub(crate) fn sup_over_ancestors(grid: &Grid, per_cube: &[f64]) -> Vec<f64> {
    let mut run = per_cube.to_vec();
    for c in 1..run.len() {
        let p = run[(c - 1) / 2];
        if p > run[c] {
            run[c] = p;
        }
    }
    run.split_off(grid.num_leaves() - 1)
}

/// Sum of per-cube values over every root-to-leaf path.
pub(crate) fn sum_over_ancestors(grid: &Grid, per_cube: &[f64]) -> Vec<f64> {
    let mut run = per_cube.to_vec();
    for c in 1..run.len() {
        run[c] += run[(c - 1) / 2];
    }
    run.split_off(grid.num_leaves() - 1)
}

/// Log of the multilinear fractional maximal function at every leaf.
pub fn multilinear_maximal_log(
    grid: &Grid,
    fs: &[LeafFn],
    prof: &ExponentProfile,
) -> Result<Vec<f64>> {
    let terms = cube_log_terms(grid, fs, prof)?;
    Ok(sup_over_ancestors(grid, &terms))
}

/// `sup_{x ∈ Q} Πᵢ (μ(Q)^{-(1-ρᵢ)} ∫_Q fᵢ)^{rᵢ}` at every leaf `x`.
pub fn multilinear_maximal(grid: &Grid, fs: &[LeafFn], prof: &ExponentProfile) -> Result<LeafFn> {
    let logs = multilinear_maximal_log(grid, fs, prof)?;
    LeafFn::new(logs.into_iter().map(f64::exp).collect())
}

/// Fractional maximal function of `f` with respect to the measure that puts
/// mass `nu[k]` on leaf `k`:
/// `sup_{x ∈ Q} ν(Q)^{-(1-ρ)} ∫_Q f dν`.
pub fn fractional_maximal_wrt(grid: &Grid, f: &LeafFn, rho: f64, nu: &LeafFn) -> Result<LeafFn> {
    grid.check_fn(f)?;
    grid.check_fn(nu)?;
    nu.require_weight()?;
    if !(0.0..1.0).contains(&rho) {
        return Err(Error::Constraint(format!(
            "rho = {rho} must satisfy 0 ≤ ρ < 1"
        )));
    }
    let fnu: Vec<f64> = f
        .values()
        .iter()
        .zip(nu.values())
        .map(|(a, b)| logspace::ln(*a) + b.ln())
        .collect();
    let lnu: Vec<f64> = nu.values().iter().map(|v| v.ln()).collect();
    let li = grid.log_subtree_sums(&fnu);
    let ln = grid.log_subtree_sums(&lnu);
    let terms: Vec<f64> = li
        .iter()
        .zip(&ln)
        .map(|(i, m)| i - (1.0 - rho) * m)
        .collect();
    LeafFn::new(
        sup_over_ancestors(grid, &terms)
            .into_iter()
            .map(f64::exp)
            .collect(),
    )
}

/// `Mλ(x) = sup_{x ∈ Q} λ_Q`.
pub fn seq_maximal(grid: &Grid, lam: &CubeSeq) -> Result<LeafFn> {
    lam.check(grid)?;
    LeafFn::new(sup_over_ancestors(grid, lam.values()))
}
