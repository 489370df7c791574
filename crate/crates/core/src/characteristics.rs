//! Weight characteristics, the Carleson norm, and weighted Lebesgue and
//! Lorentz norms.

use std::cmp::Ordering;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::{CubeId, CubeSeq, Grid, LeafFn};

/// Exponent vector `q⃗` for the Muckenhoupt and Fujii–Wilson characteristics.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CharExponents {
    q: Vec<f64>,
}

impl CharExponents {
    pub fn new(q: Vec<f64>) -> Result<Self> {
        if q.is_empty() {
            return Err(Error::Constraint("exponent vector q is empty".into()));
        }
        for (i, &qi) in q.iter().enumerate() {
            if !(qi >= 0.0 && qi.is_finite()) {
                return Err(Error::Constraint(format!(
                    "q[{i}] = {qi} must satisfy 0 ≤ q < ∞"
                )));
            }
        }
        Ok(CharExponents { q })
    }

    pub fn q(&self) -> &[f64] {
        &self.q
    }

    pub fn total(&self) -> f64 {
        self.q.iter().sum()
    }

    pub fn scaled(&self, alpha: f64) -> Result<Self> {
        CharExponents::new(self.q.iter().map(|q| q * alpha).collect())
    }

    /// `(βᵢ)_{i≠j}`: `β` with entry `j` set to zero.
    pub fn without(beta: &[f64], j: usize) -> Result<Self> {
        let mut q = beta.to_vec();
        q[j] = 0.0;
        CharExponents::new(q)
    }
}

fn check_weights(grid: &Grid, ws: &[LeafFn], ce: &CharExponents) -> Result<()> {
    if ws.len() != ce.q().len() {
        return Err(Error::LengthMismatch {
            expected: ce.q().len(),
            got: ws.len(),
        });
    }
    for w in ws {
        grid.check_fn(w)?;
        w.require_weight()?;
    }
    Ok(())
}

/// `ln Πᵢ (wᵢ)_Q^{qᵢ}` for every cube.
fn log_average_products(grid: &Grid, ws: &[LeafFn], q: &[f64]) -> Vec<f64> {
    let mut acc = vec![0.0; grid.num_cubes()];
    for (w, &qi) in ws.iter().zip(q) {
        if qi == 0.0 {
            continue;
        }
        for (a, l) in acc.iter_mut().zip(grid.log_averages(w)) {
            *a += qi * l;
        }
    }
    acc
}

/// `ln [w⃗]^{q⃗}` together with a cube attaining the supremum.
pub fn muckenhoupt_log_argmax(
    grid: &Grid,
    ws: &[LeafFn],
    ce: &CharExponents,
) -> Result<(f64, CubeId)> {
    check_weights(grid, ws, ce)?;
    let per_cube = log_average_products(grid, ws, ce.q());
    let (flat, v) = per_cube
        .iter()
        .enumerate()
        .fold((0, f64::NEG_INFINITY), |best, (c, &v)| {
            if v > best.1 {
                (c, v)
            } else {
                best
            }
        });
    Ok((v, CubeId::from_flat(flat)))
}

pub fn muckenhoupt_log(grid: &Grid, ws: &[LeafFn], ce: &CharExponents) -> Result<f64> {
    muckenhoupt_log_argmax(grid, ws, ce).map(|(v, _)| v)
}

/// Multilinear Muckenhoupt characteristic `sup_Q Πᵢ (wᵢ)_Q^{qᵢ}`.
pub fn muckenhoupt(grid: &Grid, ws: &[LeafFn], ce: &CharExponents) -> Result<f64> {
    muckenhoupt_log(grid, ws, ce).map(f64::exp)
}

/// `ln [w⃗]_FW^{q⃗}`.
///
/// For a candidate cube `Q`, the maximal function of the weights truncated
/// to `Q` at a point `x ∈ Q` is the supremum over cubes `Q'` with
/// `x ∈ Q' ⊆ Q`: cubes disjoint from `Q` see zero averages, and a strict
/// ancestor `R ⊋ Q` sees `wᵢ(Q)/μ(R) < (wᵢ)_Q`. Each candidate therefore
/// costs one sweep of its own subtree.
pub fn fujii_wilson_log(grid: &Grid, ws: &[LeafFn], ce: &CharExponents) -> Result<f64> {
    check_weights(grid, ws, ce)?;
    let total = ce.total();
    if total <= 0.0 {
        return Err(Error::Constraint(
            "Fujii–Wilson characteristic needs Σqᵢ > 0".into(),
        ));
    }
    let normalized: Vec<f64> = ce.q().iter().map(|q| q / total).collect();
    let log_p = log_average_products(grid, ws, &normalized);

    let n = grid.num_leaves();
    let leaf_logs: Vec<f64> = (0..n)
        .map(|k| {
            let mut g = grid.leaf_masses()[k].ln();
            for (w, &e) in ws.iter().zip(&normalized) {
                if e != 0.0 {
                    g += e * w.values()[k].ln();
                }
            }
            g
        })
        .collect();
    let log_den = grid.log_subtree_sums(&leaf_logs);
    let depth = grid.depth();
    let masses = grid.leaf_masses();

    let best = (0..grid.num_cubes())
        .into_par_iter()
        .map(|c| {
            let q = CubeId::from_flat(c);
            let reference = log_p[c];
            let mut run = vec![reference];
            let mut next = Vec::new();
            for level in q.level + 1..=depth {
                let base = q.index << (level - q.level);
                next.clear();
                next.extend((0..run.len() * 2).map(|j| {
                    let child = CubeId::new(level, base + j).flat();
                    run[j / 2].max(log_p[child])
                }));
                std::mem::swap(&mut run, &mut next);
            }
            let first_leaf = q.index << (depth - q.level);
            let s: f64 = run
                .iter()
                .enumerate()
                .map(|(j, &v)| masses[first_leaf + j] * (v - reference).exp())
                .sum();
            total * (reference + s.ln() - log_den[c])
        })
        .reduce(|| f64::NEG_INFINITY, f64::max);
    Ok(best)
}

/// Multilinear Fujii–Wilson characteristic.
pub fn fujii_wilson(grid: &Grid, ws: &[LeafFn], ce: &CharExponents) -> Result<f64> {
    fujii_wilson_log(grid, ws, ce).map(f64::exp)
}

/// `Σ_{Q' ⊆ Q} τ_{Q'} μ(Q')` for every cube.
pub fn carleson_subtree_sums(grid: &Grid, tau: &CubeSeq) -> Result<Vec<f64>> {
    tau.check(grid)?;
    let mut s: Vec<f64> = tau
        .values()
        .iter()
        .zip(grid.cube_masses())
        .map(|(t, m)| t * m)
        .collect();
    for c in (0..grid.num_leaves() - 1).rev() {
        s[c] += s[2 * c + 1] + s[2 * c + 2];
    }
    Ok(s)
}

/// Carleson norm and the first cube (heap order) attaining it.
pub fn carleson_norm_argmax(grid: &Grid, tau: &CubeSeq) -> Result<(f64, CubeId)> {
    let s = carleson_subtree_sums(grid, tau)?;
    let mut best = (0.0, CubeId::ROOT);
    for (c, (si, m)) in s.iter().zip(grid.cube_masses()).enumerate() {
        let v = si / m;
        if v > best.0 {
            best = (v, CubeId::from_flat(c));
        }
    }
    Ok(best)
}

/// `‖τ‖_Car = sup_Q μ(Q)⁻¹ Σ_{Q' ⊆ Q} τ_{Q'} μ(Q')`.
pub fn carleson_norm(grid: &Grid, tau: &CubeSeq) -> Result<f64> {
    carleson_norm_argmax(grid, tau).map(|(v, _)| v)
}

/// `(Σ_k |f_k|^p m_k)^{1/p}` for atoms with masses `m_k`.
pub fn lebesgue_norm_masses(values: &[f64], masses: &[f64], p: f64) -> Result<f64> {
    if !(p > 0.0) {
        return Err(Error::Constraint(format!(
            "Lebesgue exponent p = {p} must be positive"
        )));
    }
    if values.len() != masses.len() {
        return Err(Error::LengthMismatch {
            expected: masses.len(),
            got: values.len(),
        });
    }
    if p.is_infinite() {
        return Ok(values.iter().copied().fold(0.0, f64::max));
    }
    let s: f64 = values.iter().zip(masses).map(|(v, m)| v.powf(p) * m).sum();
    Ok(s.powf(1.0 / p))
}

/// `‖f‖_{L^p(w dμ)}`.
pub fn lebesgue_norm(grid: &Grid, f: &LeafFn, w: &LeafFn, p: f64) -> Result<f64> {
    grid.check_fn(f)?;
    grid.check_fn(w)?;
    lebesgue_norm_masses(f.values(), &weighted_masses(grid, w), p)
}

/// Leaf masses of the measure `w dμ`.
pub fn weighted_masses(grid: &Grid, w: &LeafFn) -> Vec<f64> {
    w.values()
        .iter()
        .zip(grid.leaf_masses())
        .map(|(a, b)| a * b)
        .collect()
}

/// Lorentz quasi-norm `‖f‖_{L^{p,s}}` for atoms with masses `m_k`.
///
/// With the decreasing rearrangement `f*`, the value for finite `s` is
/// `(∫ (t^{1/p} f*(t))^s dt/t)^{1/s}`, integrated exactly over the flat
/// steps of `f*`; for `s = ∞` it is `sup_t t^{1/p} f*(t)`, attained at the
/// right end of a step. `L^{p,p}` coincides with `L^p`.
pub fn lorentz_norm_masses(values: &[f64], masses: &[f64], p: f64, s: f64) -> Result<f64> {
    if !(p > 0.0 && p.is_finite()) {
        return Err(Error::Constraint(format!(
            "Lorentz exponent p = {p} must be positive and finite"
        )));
    }
    if !(s > 0.0) {
        return Err(Error::Constraint(format!(
            "Lorentz index s = {s} must be positive"
        )));
    }
    if values.len() != masses.len() {
        return Err(Error::LengthMismatch {
            expected: masses.len(),
            got: values.len(),
        });
    }
    let mut atoms: Vec<(f64, f64)> = values
        .iter()
        .zip(masses)
        .filter(|(v, _)| **v > 0.0)
        .map(|(v, m)| (*v, *m))
        .collect();
    atoms.sort_by(|a, b| b.0.partial_cmp(&a.0).unwrap_or(Ordering::Equal));

    let mut cum = 0.0;
    if s.is_infinite() {
        let mut best: f64 = 0.0;
        for (v, m) in atoms {
            cum += m;
            best = best.max(v * cum.powf(1.0 / p));
        }
        return Ok(best);
    }
    let e = s / p;
    let mut prev = 0.0;
    let mut acc = 0.0;
    for (v, m) in atoms {
        cum += m;
        let now = cum.powf(e);
        acc += v.powf(s) * (now - prev);
        prev = now;
    }
    Ok((acc * p / s).powf(1.0 / s))
}

/// `‖f‖_{L^{p,s}(w dμ)}`; pass `s = f64::INFINITY` for the weak norm.
pub fn lorentz_norm(grid: &Grid, f: &LeafFn, w: &LeafFn, p: f64, s: f64) -> Result<f64> {
    grid.check_fn(f)?;
    grid.check_fn(w)?;
    w.require_weight()?;
    lorentz_norm_masses(f.values(), &weighted_masses(grid, w), p, s)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::operators::{multilinear_maximal, ExponentProfile};

    fn w(v: &[f64]) -> LeafFn {
        LeafFn::weight(v.to_vec()).unwrap()
    }

    /// Literal evaluation of the FW characteristic: truncate the weights to
    /// each candidate cube, run the full-grid maximal function, integrate.
    fn fw_oracle(grid: &Grid, ws: &[LeafFn], q: &[f64]) -> f64 {
        let total: f64 = q.iter().sum();
        let mut best: f64 = 0.0;
        for cube in grid.cubes() {
            let range = grid.leaf_range(cube);
            let mut fs = Vec::new();
            let mut r = Vec::new();
            for (wi, &qi) in ws.iter().zip(q) {
                if qi == 0.0 {
                    continue;
                }
                let trunc: Vec<f64> = (0..grid.num_leaves())
                    .map(|k| {
                        if range.contains(&k) {
                            wi.values()[k]
                        } else {
                            0.0
                        }
                    })
                    .collect();
                fs.push(LeafFn::new(trunc).unwrap());
                r.push(qi / total);
            }
            let m = multilinear_maximal(grid, &fs, &ExponentProfile::with_r(r).unwrap()).unwrap();
            let num: f64 = range
                .clone()
                .map(|k| m.values()[k] * grid.leaf_masses()[k])
                .sum();
            let den: f64 = range
                .map(|k| {
                    grid.leaf_masses()[k]
                        * ws.iter()
                            .zip(q)
                            .map(|(wi, qi)| wi.values()[k].powf(qi / total))
                            .product::<f64>()
                })
                .sum();
            best = best.max((num / den).powf(total));
        }
        best
    }

    #[test]
    fn muckenhoupt_examples() {
        let g = Grid::uniform(1).unwrap();
        let ones = w(&[1.0, 1.0]);
        let ce = CharExponents::new(vec![0.7, 2.0]).unwrap();
        assert!((muckenhoupt(&g, &[ones.clone(), ones.clone()], &ce).unwrap() - 1.0).abs() < 1e-12);
        let w1 = w(&[1.0, 3.0]);
        let ce = CharExponents::new(vec![1.0, 0.0]).unwrap();
        let v = muckenhoupt(&g, &[w1.clone(), ones.clone()], &ce).unwrap();
        assert!((v - 3.0).abs() < 1e-12);
        let ce = CharExponents::new(vec![2.0, 0.0]).unwrap();
        let v = muckenhoupt(&g, &[w1, ones], &ce).unwrap();
        assert!((v - 9.0).abs() < 1e-12);
    }

    #[test]
    fn muckenhoupt_rejects_zero_weight() {
        let g = Grid::uniform(1).unwrap();
        let bad = LeafFn::new(vec![0.0, 1.0]).unwrap();
        let ce = CharExponents::new(vec![1.0]).unwrap();
        assert!(matches!(
            muckenhoupt(&g, &[bad], &ce),
            Err(Error::NonPositiveWeight { .. })
        ));
    }

    #[test]
    fn fujii_wilson_examples() {
        let g = Grid::uniform(1).unwrap();
        let ones = w(&[1.0, 1.0]);
        let ce = CharExponents::new(vec![1.0, 1.0]).unwrap();
        let v = fujii_wilson(&g, &[ones.clone(), ones.clone()], &ce).unwrap();
        assert!((v - 1.0).abs() < 1e-12);

        let w1 = w(&[1.0, 3.0]);
        let v = fujii_wilson(&g, &[w1.clone(), ones.clone()], &ce).unwrap();
        let oracle = fw_oracle(&g, &[w1.clone(), ones.clone()], &[1.0, 1.0]);
        let closed = ((2f64.sqrt() + 3f64.sqrt()) / (1.0 + 3f64.sqrt())).powi(2);
        assert!((oracle - closed).abs() < 1e-12);
        assert!((v - closed).abs() < 1e-12);
        assert!((v - 1.3262).abs() < 1e-4);

        let v2 = fujii_wilson(&g, &[w1.scaled(5.0), ones.scaled(0.1)], &ce).unwrap();
        assert!((v2 - v).abs() < 1e-12);
    }

    #[test]
    fn fujii_wilson_matches_literal_oracle() {
        let g = Grid::new(3, vec![0.3, 0.1, 0.05, 0.2, 0.1, 0.05, 0.15, 0.05]).unwrap();
        let w1 = w(&[1.0, 8.0, 0.5, 2.0, 3.0, 0.1, 1.5, 4.0]);
        let w2 = w(&[2.0, 0.3, 1.0, 5.0, 0.2, 0.7, 1.1, 9.0]);
        let w3 = w(&[0.4, 1.0, 6.0, 0.2, 2.5, 1.0, 0.3, 0.8]);
        for q in [
            vec![1.0, 1.0, 0.0],
            vec![0.5, 2.0, 1.0],
            vec![0.0, 0.0, 3.0],
        ] {
            let ws = [w1.clone(), w2.clone(), w3.clone()];
            let got = fujii_wilson(&g, &ws, &CharExponents::new(q.clone()).unwrap()).unwrap();
            let want = fw_oracle(&g, &ws, &q);
            assert!((got / want - 1.0).abs() < 1e-12, "{got} vs {want}");
        }
    }

    #[test]
    fn fujii_wilson_needs_positive_total() {
        let g = Grid::uniform(1).unwrap();
        let ones = w(&[1.0, 1.0]);
        let ce = CharExponents::new(vec![0.0]).unwrap();
        assert!(fujii_wilson(&g, &[ones], &ce).is_err());
    }

    #[test]
    fn carleson_examples() {
        for d in 0..6 {
            let g = Grid::uniform(d).unwrap();
            let tau = CubeSeq::constant(&g, 1.0).unwrap();
            assert!((carleson_norm(&g, &tau).unwrap() - (d + 1) as f64).abs() < 1e-12);
        }
        let g = Grid::uniform(3).unwrap();
        let root = CubeSeq::indicator(&g, [CubeId::ROOT]).unwrap();
        assert_eq!(carleson_norm(&g, &root).unwrap(), 1.0);
        assert_eq!(carleson_norm(&g, &CubeSeq::zeros(&g)).unwrap(), 0.0);
    }

    #[test]
    fn carleson_of_half_sparse_family() {
        // Leftmost root-to-leaf chain with E(Q) = Q minus its chain child:
        // 1/2-sparse, so the Carleson norm must not exceed 2.
        let g = Grid::uniform(5).unwrap();
        let fam = g.cubes().filter(|q| q.index == 0);
        let tau = CubeSeq::indicator(&g, fam).unwrap();
        let direct = g
            .cubes()
            .map(|q| {
                g.cubes()
                    .filter(|&r| q.contains(r))
                    .map(|r| tau.get(r) * g.cube_measure(r).unwrap())
                    .sum::<f64>()
                    / g.cube_measure(q).unwrap()
            })
            .fold(0.0, f64::max);
        let norm = carleson_norm(&g, &tau).unwrap();
        assert!((norm - direct).abs() < 1e-12);
        assert!(norm <= 2.0);
    }

    #[test]
    fn weak_norm_jump_candidates() {
        let g = Grid::uniform(1).unwrap();
        let f = LeafFn::new(vec![2.0, 1.0]).unwrap();
        let ones = w(&[1.0, 1.0]);
        let v = lorentz_norm(&g, &f, &ones, 1.0, f64::INFINITY).unwrap();
        assert!((v - 1.0).abs() < 1e-15);
    }

    #[test]
    fn lorentz_on_constants_and_plain_l2() {
        let g = Grid::new(2, vec![0.1, 0.2, 0.3, 0.4]).unwrap();
        let wt = w(&[2.0, 1.0, 0.5, 3.0]);
        let total: f64 = weighted_masses(&g, &wt).iter().sum();
        for p in [0.5, 1.0, 2.0, 3.5] {
            let c = LeafFn::constant(4, 1.7).unwrap();
            let v = lorentz_norm(&g, &c, &wt, p, p).unwrap();
            assert!((v - 1.7 * total.powf(1.0 / p)).abs() < 1e-12);
        }
        let g = Grid::uniform(1).unwrap();
        let f = LeafFn::new(vec![1.0, 0.0]).unwrap();
        let v = lorentz_norm(&g, &f, &w(&[1.0, 1.0]), 2.0, 2.0).unwrap();
        assert!((v - 0.5f64.sqrt()).abs() < 1e-15);
        assert!(lorentz_norm(&g, &f, &w(&[1.0, 1.0]), 0.0, 2.0).is_err());
    }
}
