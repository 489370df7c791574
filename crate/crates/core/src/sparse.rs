//! Carleson sequences, sparse families and the sparse operator and form.
//!
//! Sparse sets `E(Q)` live in a non-atomic space, which a finite grid only
//! approximates. They are encoded as leaf densities: `E(Q)` occupies the
//! fraction `density[k]` of leaf `k`. Disjointness becomes the requirement
//! that the densities stacked on any leaf sum to at most one.

use serde::{Deserialize, Serialize};

use crate::characteristics::{carleson_norm, carleson_norm_argmax};
use crate::error::{Error, Result};
use crate::grid::{CubeId, CubeSeq, Grid, LeafFn};
use crate::operators::{cube_log_terms, sum_over_ancestors, ExponentProfile};

/// Slack allowed on the per-leaf stack and on per-cube masses.
pub const ALLOCATION_TOL: f64 = 1e-12;

/// One sub-measure `E(Q)`. `density` is indexed by the leaves of `cube`,
/// left to right.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AllocationEntry {
    pub cube: CubeId,
    pub budget: f64,
    pub density: Vec<f64>,
}

impl AllocationEntry {
    /// `μ(E(Q)) = Σ_k density[k] μ_k`.
    pub fn mass(&self, grid: &Grid) -> f64 {
        let range = grid.leaf_range(self.cube);
        self.density
            .iter()
            .zip(&grid.leaf_masses()[range])
            .map(|(d, m)| d * m)
            .sum()
    }

    /// `∫_{E(Q)} w dμ`.
    pub fn weighted_mass(&self, grid: &Grid, w: &LeafFn) -> f64 {
        let range = grid.leaf_range(self.cube);
        self.density
            .iter()
            .zip(&grid.leaf_masses()[range.clone()])
            .zip(&w.values()[range])
            .map(|((d, m), wv)| d * m * wv)
            .sum()
    }
}

/// Pairwise "disjoint" sub-measures `E(Q) ⊆ Q`.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct SparseAllocation {
    pub entries: Vec<AllocationEntry>,
}

impl SparseAllocation {
    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn get(&self, q: CubeId) -> Option<&AllocationEntry> {
        self.entries.iter().find(|e| e.cube == q)
    }

    /// Total density stacked on every leaf.
    pub fn leaf_stack(&self, grid: &Grid) -> Vec<f64> {
        let mut stack = vec![0.0; grid.num_leaves()];
        for e in &self.entries {
            for (s, d) in stack[grid.leaf_range(e.cube)].iter_mut().zip(&e.density) {
                *s += d;
            }
        }
        stack
    }

    /// Checks shapes, density bounds, the per-leaf stack and, when
    /// `check_budgets` is set, that every mass equals its budget.
    pub fn validate(&self, grid: &Grid, check_budgets: bool) -> Result<()> {
        for e in &self.entries {
            grid.check_cube(e.cube)?;
            let expected = grid.leaf_range(e.cube).len();
            if e.density.len() != expected {
                return Err(Error::LengthMismatch {
                    expected,
                    got: e.density.len(),
                });
            }
            if let Some(d) = e
                .density
                .iter()
                .find(|d| !(**d >= 0.0 && **d <= 1.0 + ALLOCATION_TOL))
            {
                return Err(Error::Constraint(format!(
                    "density {d} on cube {} is outside [0, 1]",
                    e.cube
                )));
            }
            if check_budgets {
                let mass = e.mass(grid);
                if (mass - e.budget).abs() > ALLOCATION_TOL * e.budget.max(f64::MIN_POSITIVE) {
                    return Err(Error::Constraint(format!(
                        "cube {} carries mass {mass} but its budget is {}",
                        e.cube, e.budget
                    )));
                }
            }
        }
        if let Some((k, s)) = self
            .leaf_stack(grid)
            .into_iter()
            .enumerate()
            .find(|(_, s)| *s > 1.0 + ALLOCATION_TOL)
        {
            return Err(Error::Constraint(format!(
                "densities stacked on leaf {k} sum to {s} > 1"
            )));
        }
        Ok(())
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("allocation serializes")
    }
}

/// An η-sparse family together with its witnessing sets.
#[derive(Clone, Debug, PartialEq)]
pub struct SparseFamily {
    cubes: Vec<CubeId>,
    eta: f64,
    allocation: SparseAllocation,
}

impl SparseFamily {
    /// Validates that every family cube has a witness set of mass at least
    /// `η μ(Q)` and that the witnesses are disjoint.
    pub fn new(
        grid: &Grid,
        mut cubes: Vec<CubeId>,
        eta: f64,
        allocation: SparseAllocation,
    ) -> Result<Self> {
        if !(eta > 0.0 && eta <= 1.0) {
            return Err(Error::Constraint(format!("η = {eta} must lie in (0, 1]")));
        }
        cubes.sort();
        cubes.dedup();
        allocation.validate(grid, false)?;
        for &q in &cubes {
            grid.check_cube(q)?;
            let entry = allocation
                .get(q)
                .ok_or_else(|| Error::Constraint(format!("cube {q} has no witness set")))?;
            let need = eta * grid.cube_masses()[q.flat()];
            let mass = entry.mass(grid);
            if mass < need * (1.0 - ALLOCATION_TOL) {
                return Err(Error::Constraint(format!(
                    "witness for cube {q} has mass {mass} < η μ(Q) = {need}"
                )));
            }
        }
        Ok(SparseFamily {
            cubes,
            eta,
            allocation,
        })
    }

    pub fn cubes(&self) -> &[CubeId] {
        &self.cubes
    }

    pub fn eta(&self) -> f64 {
        self.eta
    }

    pub fn allocation(&self) -> &SparseAllocation {
        &self.allocation
    }

    pub fn contains(&self, q: CubeId) -> bool {
        self.cubes.binary_search(&q).is_ok()
    }
}

/// Builds disjoint sub-measures `E(Q) ⊆ Q` with `μ(E(Q)) = τ_Q μ(Q)/Λ`.
///
/// Cubes are processed children before parents; a cube takes the capacity
/// its descendants left free, scanning its leaves left to right.
pub fn carleson_to_sparse(grid: &Grid, tau: &CubeSeq, lambda: f64) -> Result<SparseAllocation> {
    if !(lambda > 0.0 && lambda.is_finite()) {
        return Err(Error::Constraint(format!("Λ = {lambda} must be positive")));
    }
    let (norm, cube) = carleson_norm_argmax(grid, tau)?;
    if norm > lambda * (1.0 + ALLOCATION_TOL) {
        return Err(Error::CarlesonExceeded {
            norm,
            bound: lambda,
            cube,
        });
    }
    let mut used = vec![0.0; grid.num_leaves()];
    let mut entries = Vec::new();
    allocate_post_order(grid, tau, lambda, CubeId::ROOT, &mut used, &mut entries)?;
    Ok(SparseAllocation { entries })
}

fn allocate_post_order(
    grid: &Grid,
    tau: &CubeSeq,
    lambda: f64,
    q: CubeId,
    used: &mut [f64],
    out: &mut Vec<AllocationEntry>,
) -> Result<()> {
    if q.level < grid.depth() {
        for child in q.children() {
            allocate_post_order(grid, tau, lambda, child, used, out)?;
        }
    }
    let t = tau.get(q);
    if t == 0.0 {
        return Ok(());
    }
    let cube_mass = grid.cube_masses()[q.flat()];
    let budget = t * cube_mass / lambda;
    let range = grid.leaf_range(q);
    let masses = grid.leaf_masses();
    let mut density = vec![0.0; range.len()];
    let mut remaining = budget;
    for (j, k) in range.clone().enumerate() {
        if remaining <= 0.0 {
            break;
        }
        let free = 1.0 - used[k];
        if free <= 0.0 {
            continue;
        }
        let d = if free * masses[k] >= remaining {
            remaining / masses[k]
        } else {
            free
        };
        density[j] = d;
        used[k] += d;
        remaining -= d * masses[k];
    }
    if remaining > 0.0 {
        // Rounding shortfall in the equality case Λ = ‖τ‖_Car: spread it
        // evenly, overfilling each leaf by at most remaining/μ(Q).
        if remaining > 0.1 * ALLOCATION_TOL * cube_mass {
            return Err(Error::Infeasible {
                cube: q,
                budget,
                missing: remaining,
            });
        }
        let extra = remaining / cube_mass;
        for (j, k) in range.enumerate() {
            density[j] += extra;
            used[k] += extra;
        }
    }
    out.push(AllocationEntry {
        cube: q,
        budget,
        density,
    });
    Ok(())
}

/// Outcome of converting a sparse family into a Carleson sequence.
#[derive(Clone, Debug, PartialEq)]
pub struct CarlesonCheck {
    pub tau: CubeSeq,
    pub norm: f64,
    pub bound: f64,
}

/// Indicator of the family, together with the check `‖1_𝒮‖_Car ≤ 1/η`.
pub fn sparse_to_carleson(grid: &Grid, fam: &SparseFamily) -> Result<CarlesonCheck> {
    let tau = CubeSeq::indicator(grid, fam.cubes().iter().copied())?;
    let (norm, cube) = carleson_norm_argmax(grid, &tau)?;
    let bound = 1.0 / fam.eta();
    if norm > bound + 1e-9 {
        return Err(Error::CarlesonExceeded { norm, bound, cube });
    }
    Ok(CarlesonCheck { tau, norm, bound })
}

/// Witness for `{Q : τ_Q > 0}` built by [`carleson_to_sparse`] at
/// `Λ = ‖τ‖_Car`; for a `{0,1}`-valued `τ` this certifies `1/Λ`-sparseness.
pub fn indicator_witness(grid: &Grid, tau: &CubeSeq) -> Result<SparseFamily> {
    let lambda = carleson_norm(grid, tau)?;
    if lambda == 0.0 {
        return Err(Error::Degenerate("empty family".into()));
    }
    let alloc = carleson_to_sparse(grid, tau, lambda)?;
    let cubes = grid.cubes().filter(|&q| tau.get(q) > 0.0).collect();
    SparseFamily::new(grid, cubes, 1.0 / lambda, alloc)
}

fn check_tau(grid: &Grid, tau: &CubeSeq) -> Result<()> {
    tau.check(grid)
}

/// `𝒜(τ, f⃗) = Σ_Q τ_Q Πᵢ (μ(Q)^{-(1-ρᵢ)} ∫_Q fᵢ)^{rᵢ} 1_Q`.
pub fn sparse_operator_a(
    grid: &Grid,
    tau: &CubeSeq,
    fs: &[LeafFn],
    prof: &ExponentProfile,
) -> Result<LeafFn> {
    check_tau(grid, tau)?;
    let terms = cube_log_terms(grid, fs, prof)?;
    let per_cube: Vec<f64> = terms
        .iter()
        .zip(tau.values())
        .map(|(l, t)| if *t == 0.0 { 0.0 } else { t * l.exp() })
        .collect();
    LeafFn::new(sum_over_ancestors(grid, &per_cube))
}

/// `ℬ(τ, f⃗) = Σ_Q τ_Q μ(Q) Πᵢ (μ(Q)^{-(1-ρᵢ)} ∫_Q fᵢ)^{rᵢ}`.
pub fn sparse_form_b(
    grid: &Grid,
    tau: &CubeSeq,
    fs: &[LeafFn],
    prof: &ExponentProfile,
) -> Result<f64> {
    check_tau(grid, tau)?;
    let terms = cube_log_terms(grid, fs, prof)?;
    Ok(terms
        .iter()
        .zip(tau.values())
        .zip(grid.log_cube_masses())
        .filter(|((_, t), _)| **t > 0.0)
        .map(|((l, t), m)| t * (l + m).exp())
        .sum())
}

#[cfg(test)]
mod tests {
    use super::*;

    /// The two allocation invariants, checked from scratch.
    fn feasible(grid: &Grid, tau: &CubeSeq, lambda: f64, alloc: &SparseAllocation) -> bool {
        let mut stack = vec![0.0; grid.num_leaves()];
        for q in grid.cubes() {
            let budget = tau.get(q) * grid.cube_measure(q).unwrap() / lambda;
            let mass = match alloc.get(q) {
                Some(e) => {
                    for (j, k) in grid.leaf_range(q).enumerate() {
                        stack[k] += e.density[j];
                    }
                    e.mass(grid)
                }
                None => 0.0,
            };
            if (mass - budget).abs() > 1e-12 * budget.max(1e-300) {
                return false;
            }
        }
        stack.iter().all(|s| *s <= 1.0 + 1e-12)
    }

    #[test]
    fn depth_one_all_ones() {
        let g = Grid::uniform(1).unwrap();
        let tau = CubeSeq::constant(&g, 1.0).unwrap();
        let alloc = carleson_to_sparse(&g, &tau, 2.0).unwrap();
        assert!(feasible(&g, &tau, 2.0, &alloc));
        let leaf0 = alloc.get(CubeId::new(1, 0)).unwrap();
        assert_eq!(leaf0.budget, 0.25);
        assert_eq!(leaf0.density, vec![0.5]);
        let root = alloc.get(CubeId::ROOT).unwrap();
        assert_eq!(root.budget, 0.5);
        assert_eq!(root.density, vec![0.5, 0.5]);
        // children come before their parent
        assert_eq!(alloc.entries.last().unwrap().cube, CubeId::ROOT);
    }

    #[test]
    fn root_only_takes_everything() {
        let g = Grid::new(2, vec![0.1, 0.2, 0.3, 0.4]).unwrap();
        let tau = CubeSeq::from_fn(&g, |q| if q == CubeId::ROOT { 3.0 } else { 0.0 }).unwrap();
        let alloc = carleson_to_sparse(&g, &tau, 3.0).unwrap();
        assert_eq!(alloc.len(), 1);
        for d in &alloc.entries[0].density {
            assert!((d - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn zero_sequence_gives_empty_allocation() {
        let g = Grid::uniform(3).unwrap();
        let alloc = carleson_to_sparse(&g, &CubeSeq::zeros(&g), 1.0).unwrap();
        assert!(alloc.is_empty());
        assert_eq!(alloc.to_json(), "[]");
    }

    #[test]
    fn lambda_below_norm_names_the_cube() {
        let g = Grid::uniform(2).unwrap();
        let tau = CubeSeq::constant(&g, 1.0).unwrap();
        match carleson_to_sparse(&g, &tau, 2.0) {
            Err(Error::CarlesonExceeded { norm, cube, .. }) => {
                assert_eq!(norm, 3.0);
                assert_eq!(cube, CubeId::ROOT);
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn family_conversions() {
        let g = Grid::uniform(3).unwrap();
        let root = SparseFamily::new(
            &g,
            vec![CubeId::ROOT],
            1.0,
            SparseAllocation {
                entries: vec![AllocationEntry {
                    cube: CubeId::ROOT,
                    budget: 1.0,
                    density: vec![1.0; 8],
                }],
            },
        )
        .unwrap();
        assert_eq!(sparse_to_carleson(&g, &root).unwrap().norm, 1.0);

        // every cube, each owning 1/(D+1) of every leaf below it
        let all: Vec<CubeId> = g.cubes().collect();
        let eta = 1.0 / 4.0;
        let entries = all
            .iter()
            .map(|&q| AllocationEntry {
                cube: q,
                budget: eta * g.cube_measure(q).unwrap(),
                density: vec![eta; g.leaf_range(q).len()],
            })
            .collect();
        let fam = SparseFamily::new(&g, all, eta, SparseAllocation { entries }).unwrap();
        let check = sparse_to_carleson(&g, &fam).unwrap();
        assert!((check.norm - 4.0).abs() < 1e-12);

        // root-to-leaf chain, E(Q) = Q minus the next chain cube
        let chain: Vec<CubeId> = (0..=3).map(|l| CubeId::new(l, 0)).collect();
        let entries = chain
            .iter()
            .map(|&q| {
                let n = g.leaf_range(q).len();
                let mut density = vec![1.0; n];
                if q.level < 3 {
                    density[..n / 2].iter_mut().for_each(|d| *d = 0.0);
                }
                AllocationEntry {
                    cube: q,
                    budget: 0.0,
                    density,
                }
            })
            .collect();
        let fam = SparseFamily::new(&g, chain, 0.5, SparseAllocation { entries }).unwrap();
        let check = sparse_to_carleson(&g, &fam).unwrap();
        assert!((check.norm - 1.875).abs() < 1e-12);
        assert!(check.norm <= 2.0);
    }

    #[test]
    fn broken_witness_is_rejected() {
        let g = Grid::uniform(1).unwrap();
        let entries = vec![
            AllocationEntry {
                cube: CubeId::ROOT,
                budget: 0.5,
                density: vec![1.0, 0.0],
            },
            AllocationEntry {
                cube: CubeId::new(1, 0),
                budget: 0.5,
                density: vec![1.0],
            },
        ];
        let err = SparseFamily::new(
            &g,
            vec![CubeId::ROOT, CubeId::new(1, 0)],
            0.5,
            SparseAllocation { entries },
        );
        assert!(err.is_err());
    }

    #[test]
    fn sparse_operator_examples() {
        let g = Grid::uniform(1).unwrap();
        let f = LeafFn::new(vec![1.0, 0.0]).unwrap();
        let prof = ExponentProfile::plain(1).unwrap();
        let tau = CubeSeq::constant(&g, 1.0).unwrap();
        let a = sparse_operator_a(&g, &tau, std::slice::from_ref(&f), &prof).unwrap();
        assert_eq!(a.values(), &[1.5, 0.5]);

        let zero =
            sparse_operator_a(&g, &CubeSeq::zeros(&g), std::slice::from_ref(&f), &prof).unwrap();
        assert_eq!(zero.values(), &[0.0, 0.0]);

        let g3 = Grid::uniform(3).unwrap();
        let h = LeafFn::new((0..8).map(|k| k as f64).collect()).unwrap();
        let root = CubeSeq::indicator(&g3, [CubeId::ROOT]).unwrap();
        let a = sparse_operator_a(
            &g3,
            &root,
            &[h.clone(), h],
            &ExponentProfile::with_r(vec![1.0, 2.0]).unwrap(),
        )
        .unwrap();
        for v in a.values() {
            assert!((v - 3.5f64.powi(3)).abs() < 1e-10);
        }
    }

    #[test]
    fn sparse_form_examples() {
        let g = Grid::uniform(2).unwrap();
        let ones = LeafFn::constant(4, 1.0).unwrap();
        let root = CubeSeq::indicator(&g, [CubeId::ROOT]).unwrap();
        let prof = ExponentProfile::plain(2).unwrap();
        let b = sparse_form_b(&g, &root, &[ones.clone(), ones], &prof).unwrap();
        assert!((b - 1.0).abs() < 1e-14);

        let g = Grid::uniform(1).unwrap();
        let tau = CubeSeq::constant(&g, 1.0).unwrap();
        let f1 = LeafFn::new(vec![1.0, 0.0]).unwrap();
        let f2 = LeafFn::new(vec![0.0, 1.0]).unwrap();
        let b = sparse_form_b(&g, &tau, &[f1, f2], &prof).unwrap();
        assert!((b - 0.25).abs() < 1e-15);
    }
}
