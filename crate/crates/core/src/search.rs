//! Weight families, random instances and adversarial ratio search.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::checkers::{
    dependent_complete, evaluate_spec, validate, CaseId, CaseSpec, ConcaveVariant, IneqParams,
    IneqReport, Instance, InstanceDigest,
};
use crate::error::{Error, Result};
use crate::grid::{CubeId, CubeSeq, Grid, LeafFn};
use crate::sparse::{AllocationEntry, SparseAllocation};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum WeightFamily {
    /// Product of independent factors `exp(±σ)` along the root-to-leaf path.
    Cascade {
        sigma: f64,
    },
    /// `w(k) = ((k+1)/2^D)^a`.
    Power {
        a: f64,
    },
    /// `h` at leaf 0 and 1 elsewhere.
    Spike {
        height: f64,
    },
    Constant,
}

impl WeightFamily {
    pub fn name(&self) -> String {
        match self {
            WeightFamily::Cascade { sigma } => format!("cascade(σ={sigma:.3})"),
            WeightFamily::Power { a } => format!("power(a={a:.3})"),
            WeightFamily::Spike { height } => format!("spike(h={height:.3})"),
            WeightFamily::Constant => "constant".into(),
        }
    }
}

pub fn gen_weight(grid: &Grid, fam: &WeightFamily, seed: u64) -> Result<LeafFn> {
    let n = grid.num_leaves();
    match *fam {
        WeightFamily::Cascade { sigma } => {
            if !(sigma > 0.0 && sigma.is_finite()) {
                return Err(Error::Constraint(format!(
                    "cascade volatility σ = {sigma} must be positive"
                )));
            }
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let mut log = vec![0.0; grid.num_cubes()];
            for c in 0..log.len() {
                let step = if rng.gen_bool(0.5) { sigma } else { -sigma };
                log[c] = step + if c == 0 { 0.0 } else { log[(c - 1) / 2] };
            }
            LeafFn::weight(log[n - 1..].iter().map(|l| l.exp()).collect())
        }
        WeightFamily::Power { a } => {
            if !(a > -1.0 && a.is_finite()) {
                return Err(Error::Constraint(format!(
                    "power exponent a = {a} must satisfy a > −1"
                )));
            }
            let scale = n as f64;
            LeafFn::weight((0..n).map(|k| ((k + 1) as f64 / scale).powf(a)).collect())
        }
        WeightFamily::Spike { height } => {
            if !(height > 0.0 && height.is_finite()) {
                return Err(Error::Constraint(format!(
                    "spike height {height} must be positive"
                )));
            }
            let mut v = vec![1.0; n];
            v[0] = height;
            LeafFn::weight(v)
        }
        WeightFamily::Constant => LeafFn::constant(n, 1.0),
    }
}

/// One SplitMix64 step.
fn splitmix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Independent stream seed derived from the master seed and a counter path.
pub fn derive_seed(master: u64, path: &[u64]) -> u64 {
    path.iter()
        .fold(splitmix(master), |acc, &p| splitmix(acc ^ splitmix(p)))
}

fn random_family(rng: &mut ChaCha8Rng) -> WeightFamily {
    match rng.gen_range(0..20) {
        0..=9 => WeightFamily::Cascade {
            sigma: rng.gen_range(0.1..1.0),
        },
        10..=14 => WeightFamily::Power {
            a: rng.gen_range(-0.9..2.0),
        },
        15..=17 => WeightFamily::Spike {
            height: rng.gen_range(-4.0f64..4.0).exp(),
        },
        _ => WeightFamily::Constant,
    }
}

fn random_grid(rng: &mut ChaCha8Rng, depth: u32) -> Result<Grid> {
    if rng.gen_bool(0.5) {
        return Grid::uniform(depth);
    }
    let n = 1usize << depth;
    let raw: Vec<f64> = (0..n).map(|_| rng.gen_range(0.25..1.75)).collect();
    let total: f64 = raw.iter().sum();
    Grid::new(depth, raw.into_iter().map(|m| m / total).collect())
}

fn lognormal(rng: &mut ChaCha8Rng, spread: f64) -> f64 {
    (rng.gen_range(-spread..spread)).exp()
}

fn random_cube(rng: &mut ChaCha8Rng, grid: &Grid) -> CubeId {
    let level = rng.gen_range(0..=grid.depth());
    CubeId::new(level, rng.gen_range(0..1usize << level))
}

fn random_function(rng: &mut ChaCha8Rng, grid: &Grid) -> Result<LeafFn> {
    let n = grid.num_leaves();
    let v = match rng.gen_range(0..4) {
        0 => (0..n).map(|_| lognormal(rng, 2.0)).collect(),
        1 => {
            let q = random_cube(rng, grid);
            let range = grid.leaf_range(q);
            (0..n)
                .map(|k| if range.contains(&k) { 1.0 } else { 0.0 })
                .collect()
        }
        2 => {
            let mut v: Vec<f64> = (0..n)
                .map(|_| {
                    if rng.gen_bool(0.3) {
                        lognormal(rng, 2.0)
                    } else {
                        0.0
                    }
                })
                .collect();
            let k = rng.gen_range(0..n);
            v[k] = lognormal(rng, 2.0);
            v
        }
        _ => {
            let b = rng.gen_range(-0.9..2.0);
            let mut v: Vec<f64> = (0..n)
                .map(|k| ((k + 1) as f64 / n as f64).powf(b))
                .collect();
            if rng.gen_bool(0.5) {
                v.reverse();
            }
            v
        }
    };
    LeafFn::new(v)
}

fn random_tau(rng: &mut ChaCha8Rng, grid: &Grid) -> Result<CubeSeq> {
    let n = grid.num_cubes();
    let mut v: Vec<f64> = match rng.gen_range(0..3) {
        0 => {
            let p = rng.gen_range(0.05..0.6);
            (0..n)
                .map(|_| {
                    if rng.gen_bool(p) {
                        rng.gen_range(0.0..1.0)
                    } else {
                        0.0
                    }
                })
                .collect()
        }
        1 => {
            // one root-to-leaf chain
            let mut v = vec![0.0; n];
            let mut c = grid.num_leaves() - 1 + rng.gen_range(0..grid.num_leaves());
            loop {
                v[c] = 1.0;
                if c == 0 {
                    break;
                }
                c = (c - 1) / 2;
            }
            v
        }
        _ => (0..n).map(|_| rng.gen_range(0.0..1.0)).collect(),
    };
    v[0] = v[0].max(rng.gen_range(0.01..1.0));
    CubeSeq::new(grid, v)
}

fn random_sequence(rng: &mut ChaCha8Rng, grid: &Grid) -> Result<CubeSeq> {
    let n = grid.num_cubes();
    let v = match rng.gen_range(0..3) {
        0 => {
            let f = random_function(rng, grid)?;
            grid.integrals(&f)
                .iter()
                .zip(grid.cube_masses())
                .map(|(i, m)| i / m)
                .collect()
        }
        1 => (0..n).map(|_| lognormal(rng, 2.0)).collect(),
        _ => (0..n)
            .map(|_| if rng.gen_bool(0.3) { 1.0 } else { 0.0 })
            .collect(),
    };
    CubeSeq::new(grid, v)
}

/// Each leaf joins `Ẽ(Q)` for one random ancestor `Q`, or none.
fn random_subsets(rng: &mut ChaCha8Rng, grid: &Grid) -> SparseAllocation {
    let mut densities: Vec<Option<Vec<f64>>> = vec![None; grid.num_cubes()];
    for k in 0..grid.num_leaves() {
        if rng.gen_bool(0.2) {
            continue;
        }
        let q = grid.ancestor_at(k, rng.gen_range(0..=grid.depth()));
        let range = grid.leaf_range(q);
        let d = densities[q.flat()].get_or_insert_with(|| vec![0.0; range.len()]);
        d[k - range.start] = 1.0;
    }
    let entries = densities
        .into_iter()
        .enumerate()
        .filter_map(|(c, d)| d.map(|density| (CubeId::from_flat(c), density)))
        .map(|(cube, density)| {
            let mut e = AllocationEntry {
                cube,
                budget: 0.0,
                density,
            };
            e.budget = e.mass(grid);
            e
        })
        .collect();
    SparseAllocation { entries }
}

/// Exponents `q⃗` with respect to which a random instance may be made
/// dependent (`Π wᵢ^{qᵢ} ≡ 1`).
fn dependence_exponents(spec: &CaseSpec) -> Option<Vec<f64>> {
    match spec {
        CaseSpec::Max(s) => Some(s.q.q().to_vec()),
        CaseSpec::Dual(s) => Some(s.q.q().to_vec()),
        CaseSpec::FwAp(s) => Some(s.q.clone()),
        CaseSpec::Key(s) => Some(s.q.q().to_vec()),
        CaseSpec::Char(s) => Some(s.q.q().to_vec()),
        CaseSpec::Convex(s) => Some(s.q.q().to_vec()),
        CaseSpec::Concave(s) => Some(s.q.q().to_vec()),
        _ => None,
    }
}

/// Random instance carrying everything `spec` reads. Weights come from
/// mixed families; the last weight is completed to a dependent tuple
/// always for FW/A_p and with probability 1/2 otherwise.
pub fn random_instance(case: CaseId, spec: &CaseSpec, depth: u32, seed: u64) -> Result<Instance> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let grid = random_grid(&mut rng, depth)?;
    let nw = spec.num_weights();
    let mut families = Vec::with_capacity(nw);
    let mut weights = Vec::with_capacity(nw);
    for _ in 0..nw {
        let fam = random_family(&mut rng);
        let mut w = gen_weight(&grid, &fam, rng.gen())?;
        if matches!(fam, WeightFamily::Power { .. }) && rng.gen_bool(0.5) {
            w = LeafFn::weight(w.values().iter().rev().copied().collect())?;
        }
        families.push(fam.name());
        weights.push(w);
    }
    let dependent = match dependence_exponents(spec) {
        Some(q) if case == CaseId::FwAp || (nw >= 2 && rng.gen_bool(0.5)) => Some(q),
        _ => None,
    };
    if let Some(q) = dependent {
        weights[nw - 1] = dependent_complete(&weights[..nw - 1], &q)?;
        families[nw - 1] = "dependent".into();
    }
    let functions = (0..spec.num_functions())
        .map(|_| random_function(&mut rng, &grid))
        .collect::<Result<Vec<_>>>()?;
    let sequences = (0..spec.num_sequences())
        .map(|_| random_sequence(&mut rng, &grid))
        .collect::<Result<Vec<_>>>()?;
    let tau = random_tau(&mut rng, &grid)?;
    let subsets = match spec {
        CaseSpec::Concave(s) if s.variant == ConcaveVariant::Disjoint => {
            Some(random_subsets(&mut rng, &grid))
        }
        _ => None,
    };
    let digest = InstanceDigest {
        seed,
        depth,
        family: families.join("+"),
    };
    Ok(Instance {
        grid,
        weights,
        functions,
        tau,
        sequences,
        subsets,
        digest,
    })
}

/// Instance with every weight and function constant 1, `τ` and every `λᵢ`
/// the root indicator (so `Mλᵢ ≡ 1`), and `Ẽ(root) = X`.
pub fn constant_instance(spec: &CaseSpec, depth: u32) -> Result<Instance> {
    let grid = Grid::uniform(depth)?;
    let n = grid.num_leaves();
    let mut inst = Instance::new(
        grid.clone(),
        InstanceDigest {
            seed: 0,
            depth,
            family: "constant".into(),
        },
    );
    inst.weights = vec![LeafFn::constant(n, 1.0)?; spec.num_weights()];
    inst.functions = vec![LeafFn::constant(n, 1.0)?; spec.num_functions()];
    inst.tau = CubeSeq::indicator(&grid, [CubeId::ROOT])?;
    inst.sequences = vec![inst.tau.clone(); spec.num_sequences()];
    inst.subsets = Some(SparseAllocation {
        entries: vec![AllocationEntry {
            cube: CubeId::ROOT,
            budget: 1.0,
            density: vec![1.0; n],
        }],
    });
    Ok(inst)
}

/// Coordinate ascent on the log-weights of `inst`: each leaf value of each
/// free weight is multiplied by `e^{±δ}` and the move kept when the ratio
/// grows; `δ` halves from 0.5 down to 1e-3. The last weight is recomputed
/// after every move when the case needs a dependent tuple.
pub fn hill_climb(
    case: CaseId,
    spec: &CaseSpec,
    digest: &str,
    inst: Instance,
    max_evals: usize,
) -> Result<(IneqReport, Instance)> {
    let mut best_report = evaluate_spec(case, spec, digest, &inst)?;
    let mut best = inst;
    let dependent = spec.dependent_exponents().map(<[f64]>::to_vec);
    let free = best.weights.len().min(spec.num_weights()) - usize::from(dependent.is_some());
    let mut evals = 0;
    let mut delta: f64 = 0.5;
    while delta >= 1e-3 && evals < max_evals {
        for i in 0..free {
            for k in 0..best.grid.num_leaves() {
                for sign in [1.0, -1.0] {
                    if evals >= max_evals {
                        break;
                    }
                    let mut cand = best.clone();
                    let mut v = cand.weights[i].values().to_vec();
                    v[k] *= (sign * delta).exp();
                    cand.weights[i] = LeafFn::weight(v)?;
                    if let Some(q) = &dependent {
                        let m = q.len();
                        cand.weights[m - 1] = dependent_complete(&cand.weights[..m - 1], q)?;
                    }
                    evals += 1;
                    let Ok(rep) = evaluate_spec(case, spec, digest, &cand) else {
                        continue;
                    };
                    if rep.ratio.is_finite() && rep.ratio > best_report.ratio {
                        best_report = rep;
                        best = cand;
                    }
                }
            }
        }
        delta /= 2.0;
    }
    Ok((best_report, best))
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SearchBudget {
    pub trials: usize,
    /// Evaluations spent on hill-climbing the best random instance.
    pub climb_evals: usize,
}

/// Worst ratio over `budget.trials` random instances of the given depth,
/// then refined by [`hill_climb`]. Deterministic given `master_seed`.
pub fn maximize_ratio(
    case: CaseId,
    params: &IneqParams,
    depth: u32,
    budget: SearchBudget,
    master_seed: u64,
) -> Result<(IneqReport, Instance)> {
    if budget.trials == 0 {
        return Err(Error::Constraint(
            "search budget must be at least one trial".into(),
        ));
    }
    let spec = validate(case, params)?;
    let digest = params.digest();
    let mut best: Option<(IneqReport, Instance)> = None;
    for trial in 0..budget.trials {
        let seed = derive_seed(master_seed, &[case as u64, u64::from(depth), trial as u64]);
        let inst = random_instance(case, &spec, depth, seed)?;
        let rep = evaluate_spec(case, &spec, &digest, &inst)?;
        if best.as_ref().is_none_or(|(b, _)| rep.ratio > b.ratio) {
            best = Some((rep, inst));
        }
    }
    let (rep, inst) = best.expect("at least one trial");
    if budget.climb_evals == 0 {
        return Ok((rep, inst));
    }
    hill_climb(case, &spec, &digest, inst, budget.climb_evals)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct SlopeFit {
    pub slope: f64,
    pub intercept: f64,
    pub r2: f64,
    pub n: usize,
    /// Fewer than three points: the fit is exact and says little.
    pub low_information: bool,
}

/// Ordinary least squares fit of `y` against `x`.
pub fn slope_fit(points: &[(f64, f64)]) -> Result<SlopeFit> {
    let n = points.len();
    if n < 2 {
        return Err(Error::Degenerate(format!(
            "slope fit needs at least 2 points, got {n}"
        )));
    }
    let nf = n as f64;
    let mx = points.iter().map(|p| p.0).sum::<f64>() / nf;
    let my = points.iter().map(|p| p.1).sum::<f64>() / nf;
    let sxx: f64 = points.iter().map(|p| (p.0 - mx).powi(2)).sum();
    let sxy: f64 = points.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let syy: f64 = points.iter().map(|p| (p.1 - my).powi(2)).sum();
    if !(sxx > 1e-24 * (1.0 + mx * mx) * nf) {
        return Err(Error::Degenerate("all x values coincide".into()));
    }
    let slope = sxy / sxx;
    let r2 = if syy == 0.0 {
        1.0
    } else {
        sxy * sxy / (sxx * syy)
    };
    Ok(SlopeFit {
        slope,
        intercept: my - slope * mx,
        r2,
        n,
        low_information: n < 3,
    })
}

/// Strong maximal estimate with `m = 2`, `r = 1`, `t = 2`, `ρ = 0` on a
/// dependent pair: `w₂` from `family` with exponent `a`, `w₁ = w₂^{-1}`,
/// `f ≡ 1`. Returns `(ln rhs, ln lhs)` per exponent.
pub fn sharpness_points(depth: u32, family: &str, exponents: &[f64]) -> Result<Vec<(f64, f64)>> {
    let params = IneqParams {
        r: vec![1.0],
        rho: vec![0.0],
        t: vec![2.0],
        ..Default::default()
    };
    let spec = validate(CaseId::MaxStrong, &params)?;
    let digest = params.digest();
    let grid = Grid::uniform(depth)?;
    let n = grid.num_leaves();
    let mut out = Vec::with_capacity(exponents.len());
    for &a in exponents {
        let fam = match family {
            "power" => WeightFamily::Power { a },
            "constant" => WeightFamily::Constant,
            "cascade" => WeightFamily::Cascade { sigma: a },
            other => return Err(Error::Parse(format!("unknown weight family {other:?}"))),
        };
        let w2 = gen_weight(&grid, &fam, 0)?;
        let w1 = dependent_complete(std::slice::from_ref(&w2), spec_q(&spec))?;
        let mut inst = Instance::new(
            grid.clone(),
            InstanceDigest {
                seed: 0,
                depth,
                family: fam.name(),
            },
        );
        inst.weights = vec![w1, w2];
        inst.functions = vec![LeafFn::constant(n, 1.0)?];
        let rep = evaluate_spec(CaseId::MaxStrong, &spec, &digest, &inst)?;
        out.push((rep.rhs.ln(), rep.lhs.ln()));
    }
    Ok(out)
}

fn spec_q(spec: &CaseSpec) -> &[f64] {
    match spec {
        CaseSpec::Max(s) => s.q.q(),
        _ => unreachable!("sharpness probe uses the maximal case"),
    }
}
