use super::params::{
    CaseSpec, CharSpec, ConcaveSpec, ConcaveVariant, ConvexSpec, DualSpec, FracSpec, FwApSpec,
    KeySpec, MaxSpec,
};
use super::{CaseId, Instance};
use crate::characteristics::{
    carleson_norm, fujii_wilson, lebesgue_norm, lorentz_norm, lorentz_norm_masses, muckenhoupt,
    weighted_masses, CharExponents,
};
use crate::error::{Error, Result};
use crate::grid::{CubeSeq, Grid, LeafFn};
use crate::operators::{
    fractional_maximal_wrt, multilinear_maximal, seq_maximal, sum_over_ancestors,
};
use crate::sparse::{sparse_form_b, sparse_operator_a};
use crate::stopping::build_stopping;

/// Left- and right-hand side of `case` on `inst`.
pub(super) fn sides(case: CaseId, spec: &CaseSpec, inst: &Instance) -> Result<(f64, f64)> {
    match (case, spec) {
        (CaseId::MaxWeak, CaseSpec::Max(s)) => maximal(inst, s, false),
        (CaseId::MaxStrong, CaseSpec::Max(s)) => maximal(inst, s, true),
        (CaseId::ABelow, CaseSpec::Max(s)) => sparse_operator(inst, s, true),
        (CaseId::AWeakProbe, CaseSpec::Max(s)) => sparse_operator(inst, s, false),
        (CaseId::BDual, CaseSpec::Dual(s)) => sparse_form(inst, s),
        (CaseId::FwAp, CaseSpec::FwAp(s)) => fw_ap(inst, s),
        (CaseId::SumLt1, CaseSpec::SumLt1 { beta }) => sum_lt1(inst, beta),
        (CaseId::Cov, CaseSpec::Cov { s }) => cov(inst, *s),
        (CaseId::Key, CaseSpec::Key(s)) => key(inst, s),
        (CaseId::Char, CaseSpec::Char(s)) => char_sum(inst, s, false),
        (CaseId::CharAltProbe, CaseSpec::Char(s)) => char_sum(inst, s, true),
        (CaseId::Convex, CaseSpec::Convex(s)) => convex(inst, s),
        (CaseId::Concave, CaseSpec::Concave(s)) => concave(inst, s),
        (CaseId::FracMaxLorentz, CaseSpec::Frac(s)) => frac(inst, s),
        _ => Err(Error::Constraint(format!(
            "{case}: parameters were validated for another case"
        ))),
    }
}

fn products(fs: &[LeafFn], ws: &[LeafFn]) -> Vec<LeafFn> {
    fs.iter().zip(ws).map(|(f, w)| f.product(w)).collect()
}

/// `Πᵢ ‖fᵢ‖_{L^{tᵢ}(wᵢ)}^{rᵢ}`.
fn strong_norms(grid: &Grid, fs: &[LeafFn], ws: &[LeafFn], t: &[f64], r: &[f64]) -> Result<f64> {
    let mut acc = 1.0;
    for (((f, w), t), r) in fs.iter().zip(ws).zip(t).zip(r) {
        acc *= lebesgue_norm(grid, f, w, *t)?.powf(*r);
    }
    Ok(acc)
}

fn maximal(inst: &Instance, s: &MaxSpec, strong: bool) -> Result<(f64, f64)> {
    let n = s.prof.len();
    let ws = inst.weights(n + 1)?;
    let fs = inst.functions(n)?;
    let g = &inst.grid;
    let m = multilinear_maximal(g, &products(fs, &ws[..n]), &s.prof)?;
    let p = 1.0 / s.alpha;
    let norms = strong_norms(g, fs, ws, &s.t, s.prof.r())?;
    let mut rhs = muckenhoupt(g, ws, &s.q)? * norms;
    let lhs = if strong {
        rhs *= fujii_wilson(g, ws, &s.fw)?;
        lebesgue_norm(g, &m, &ws[n], p)?
    } else {
        lorentz_norm(g, &m, &ws[n], p, f64::INFINITY)?
    };
    Ok((lhs, rhs))
}

/// `‖𝒜(τ, f⃗w⃗)‖` in `L^{1/α}(w_m)`, or in `L^{1/α,∞}(w_m)` without the FW
/// factor on the right for the probe.
fn sparse_operator(inst: &Instance, s: &MaxSpec, strong: bool) -> Result<(f64, f64)> {
    let n = s.prof.len();
    let ws = inst.weights(n + 1)?;
    let fs = inst.functions(n)?;
    let g = &inst.grid;
    let a = sparse_operator_a(g, &inst.tau, &products(fs, &ws[..n]), &s.prof)?;
    let p = 1.0 / s.alpha;
    let base = carleson_norm(g, &inst.tau)?
        * muckenhoupt(g, ws, &s.q)?
        * strong_norms(g, fs, ws, &s.t, s.prof.r())?;
    if strong {
        Ok((
            lebesgue_norm(g, &a, &ws[n], p)?,
            base * fujii_wilson(g, ws, &s.fw)?,
        ))
    } else {
        Ok((lorentz_norm(g, &a, &ws[n], p, f64::INFINITY)?, base))
    }
}

fn sparse_form(inst: &Instance, s: &DualSpec) -> Result<(f64, f64)> {
    let m = s.prof.len();
    let ws = inst.weights(m)?;
    let fs = inst.functions(m)?;
    let g = &inst.grid;
    let lhs = sparse_form_b(g, &inst.tau, &products(fs, ws), &s.prof)?;
    let mut fw_sum = 0.0;
    for e in &s.fw {
        fw_sum += fujii_wilson(g, ws, e)?;
    }
    let mut norms = 1.0;
    for i in 0..m {
        let (t, r) = (s.t[i], s.prof.r()[i]);
        let v = if s.j_s.contains(&i) {
            lebesgue_norm(g, &fs[i], &ws[i], t)?
        } else {
            lorentz_norm(g, &fs[i], &ws[i], t, r)?
        };
        norms *= v.powf(r);
    }
    let rhs = carleson_norm(g, &inst.tau)? * muckenhoupt(g, ws, &s.q)? * fw_sum * norms;
    Ok((lhs, rhs))
}

fn fw_ap(inst: &Instance, s: &FwApSpec) -> Result<(f64, f64)> {
    let ws = inst.weights(s.q.len())?;
    let g = &inst.grid;
    Ok((fujii_wilson(g, ws, &s.beta)?, muckenhoupt(g, ws, &s.ap)?))
}

/// `ln Πᵢ (wᵢ)_Q^{eᵢ}` for every cube.
fn log_average_product(grid: &Grid, ws: &[LeafFn], e: &[f64]) -> Vec<f64> {
    let mut acc = vec![0.0; grid.num_cubes()];
    for (w, &ei) in ws.iter().zip(e) {
        if ei == 0.0 {
            continue;
        }
        for (a, l) in acc.iter_mut().zip(grid.log_averages(w)) {
            *a += ei * l;
        }
    }
    acc
}

/// `Σ_{Q' ⊆ Q} v_{Q'}` for every cube, heap order.
fn cube_subtree_sums(grid: &Grid, v: &[f64]) -> Vec<f64> {
    let mut s = v.to_vec();
    for c in (0..grid.num_leaves() - 1).rev() {
        s[c] += s[2 * c + 1] + s[2 * c + 2];
    }
    s
}

/// `τ_Q · exp(log_terms[Q])`, with `τ_Q = 0` terms dropped.
fn weighted_terms(tau: &CubeSeq, log_terms: &[f64]) -> Vec<f64> {
    tau.values()
        .iter()
        .zip(log_terms)
        .map(|(t, l)| if *t == 0.0 { 0.0 } else { t * l.exp() })
        .collect()
}

/// Reports the cube where `lhs(Q)/rhs(Q)` is largest.
fn sum_lt1(inst: &Instance, beta: &[f64]) -> Result<(f64, f64)> {
    let ws = inst.weights(beta.len())?;
    let g = &inst.grid;
    let car = carleson_norm(g, &inst.tau)?;
    let la = log_average_product(g, ws, beta);
    let mass_terms: Vec<f64> = la
        .iter()
        .zip(g.log_cube_masses())
        .map(|(a, m)| a + m)
        .collect();
    let left = cube_subtree_sums(g, &weighted_terms(&inst.tau, &mass_terms));
    let mut best = (0.0, 0.0, 0.0);
    for (l, t) in left.iter().zip(&mass_terms) {
        let r = car * t.exp();
        let ratio = if *l == 0.0 { 0.0 } else { l / r };
        if ratio > best.2 || best.1 == 0.0 {
            best = (*l, r, ratio);
        }
    }
    Ok((best.0, best.1))
}

fn cov(inst: &Instance, s: f64) -> Result<(f64, f64)> {
    let sigma = &inst.weights(1)?[0];
    let lam = &inst.sequences(1)?[0];
    let g = &inst.grid;
    lam.check(g)?;
    let sq = g.integrals(sigma);
    let per_cube: Vec<f64> = lam.values().iter().zip(&sq).map(|(l, m)| l / m).collect();
    let h = sum_over_ancestors(g, &per_cube);
    let lhs: f64 = h
        .iter()
        .zip(weighted_masses(g, sigma))
        .map(|(h, m)| h.powf(s) * m)
        .sum();
    let below = cube_subtree_sums(g, lam.values());
    let rhs = lam
        .values()
        .iter()
        .zip(&below)
        .zip(&sq)
        .filter(|((l, _), _)| **l > 0.0)
        .map(|((l, b), m)| l * (b / m).powf(s - 1.0))
        .sum();
    Ok((lhs, rhs))
}

fn key(inst: &Instance, s: &KeySpec) -> Result<(f64, f64)> {
    let m = s.s.len();
    let ws = inst.weights(m)?;
    let g = &inst.grid;
    let car = carleson_norm(g, &inst.tau)?;
    if car == 0.0 {
        return Ok((0.0, 0.0));
    }
    let a = s.alpha;
    let e: Vec<f64> = s.s.iter().map(|x| x * a).collect();
    let h = sum_over_ancestors(
        g,
        &weighted_terms(&inst.tau, &log_average_product(g, ws, &e)),
    );
    let lhs = h
        .iter()
        .zip(weighted_masses(g, &ws[s.j]))
        .map(|(h, m)| h.powf(1.0 / a) * m)
        .sum();
    let diff: Vec<f64> = (0..m)
        .map(|i| if i == s.j { 0.0 } else { s.s[i] - s.q.q()[i] })
        .collect();
    let mass_terms: Vec<f64> = log_average_product(g, ws, &diff)
        .iter()
        .zip(g.log_cube_masses())
        .map(|(x, m)| x + m)
        .collect();
    let sum: f64 = weighted_terms(&inst.tau, &mass_terms).iter().sum();
    let rhs = car.powf(1.0 / a - 1.0) * muckenhoupt(g, ws, &s.q)? * sum;
    Ok((lhs, rhs))
}

/// `Πᵢ ‖Mλᵢ‖_{L^{pᵢ,rᵢ}(wᵢ)}`; `index = None` selects the strong norm.
fn maximal_seq_norm(
    grid: &Grid,
    lam: &CubeSeq,
    w: &LeafFn,
    p: f64,
    lorentz: Option<f64>,
) -> Result<f64> {
    let ml = seq_maximal(grid, lam)?;
    match lorentz {
        None => lebesgue_norm(grid, &ml, w, p),
        Some(r) => lorentz_norm(grid, &ml, w, p, r),
    }
}

/// Double sum over stopping parents: cubes are grouped by the tuple
/// `(π₁(Q), …, π_{m−1}(Q))` of their stopping parents for the `λᵢ`.
fn char_sum(inst: &Instance, s: &CharSpec, alt: bool) -> Result<(f64, f64)> {
    let n = s.p.len();
    let m = n + 1;
    let ws = inst.weights(m)?;
    let lams = inst.sequences(n)?;
    let g = &inst.grid;
    let fams = lams
        .iter()
        .map(|l| build_stopping(g, l))
        .collect::<Result<Vec<_>>>()?;
    let parents: Vec<&[usize]> = fams.iter().map(|f| f.parent_flat()).collect();
    let mut e = s.s.clone();
    e[n] -= 1.0;
    let terms = weighted_terms(&inst.tau, &log_average_product(g, ws, &e));
    let inv_a = 1.0 / s.alpha;
    let group_weight = |c: usize| -> f64 {
        (0..n)
            .map(|i| lams[i].values()[parents[i][c]].powf(inv_a))
            .product()
    };
    let same_group = |a: usize, b: usize| (0..n).all(|i| parents[i][a] == parents[i][b]);

    let first = g.num_leaves() - 1;
    let wm = weighted_masses(g, &ws[n]);
    let mut total = 0.0;
    for (k, mass) in wm.iter().enumerate() {
        let mut path = Vec::with_capacity(g.depth() as usize + 1);
        let mut c = first + k;
        loop {
            path.push(c);
            if c == 0 {
                break;
            }
            c = (c - 1) / 2;
        }
        path.reverse();
        let mut leaf = 0.0;
        let mut acc = 0.0;
        for (idx, &c) in path.iter().enumerate() {
            acc += terms[c];
            let ends = idx + 1 == path.len() || !same_group(c, path[idx + 1]);
            if ends {
                if acc > 0.0 {
                    leaf += group_weight(c) * acc.powf(inv_a);
                }
                acc = 0.0;
            }
        }
        total += leaf * mass;
    }
    let lhs = total.powf(s.alpha);

    let mut norms = 1.0;
    for i in 0..n {
        norms *= maximal_seq_norm(g, &lams[i], &ws[i], s.p[i], None)?;
    }
    let fw = if alt {
        let mut acc = 1.0;
        for i in 0..n {
            let mut e = vec![0.0; m];
            e[i] = 1.0 / s.p[i];
            acc *= fujii_wilson(g, ws, &CharExponents::new(e)?)?;
        }
        acc
    } else {
        fujii_wilson(g, ws, &s.fw)?
    };
    let rhs = carleson_norm(g, &inst.tau)? * muckenhoupt(g, ws, &s.q)? * fw * norms;
    Ok((lhs, rhs))
}

/// `ln Πᵢ λ_{i,Q}` over the given sequences; `-∞` where some `λ` vanishes.
fn log_seq_product(grid: &Grid, lams: &[CubeSeq]) -> Vec<f64> {
    let mut acc = vec![0.0; grid.num_cubes()];
    for l in lams {
        for (a, v) in acc.iter_mut().zip(l.values()) {
            *a += crate::logspace::ln(*v);
        }
    }
    acc
}

fn convex(inst: &Instance, s: &ConvexSpec) -> Result<(f64, f64)> {
    let m = s.p.len();
    let ws = inst.weights(m)?;
    let lams = inst.sequences(m)?;
    let g = &inst.grid;
    let la = log_average_product(g, ws, &s.s);
    let terms: Vec<f64> = la
        .iter()
        .zip(log_seq_product(g, lams))
        .zip(g.log_cube_masses())
        .map(|((a, l), mq)| a + l + mq)
        .collect();
    let lhs: f64 = weighted_terms(&inst.tau, &terms).iter().sum();
    let mut fw_sum = 0.0;
    for e in &s.fw {
        fw_sum += fujii_wilson(g, ws, e)?;
    }
    let mut norms = 1.0;
    for i in 0..m {
        let idx = if s.j_s.contains(&i) { None } else { Some(1.0) };
        norms *= maximal_seq_norm(g, &lams[i], &ws[i], s.p[i], idx)?;
    }
    let rhs = carleson_norm(g, &inst.tau)? * muckenhoupt(g, ws, &s.q)? * fw_sum * norms;
    Ok((lhs, rhs))
}

fn concave(inst: &Instance, s: &ConcaveSpec) -> Result<(f64, f64)> {
    let n = s.p.len();
    let ws = inst.weights(n + 1)?;
    let lams = inst.sequences(n)?;
    let g = &inst.grid;
    let la = log_average_product(g, &ws[..n], &s.s);
    let terms: Vec<f64> = la
        .iter()
        .zip(log_seq_product(g, lams))
        .map(|(a, l)| a + l)
        .collect();
    let c = weighted_terms(&inst.tau, &terms);
    let p = 1.0 / s.alpha;
    let lhs = match s.variant {
        ConcaveVariant::Full => {
            let h = LeafFn::new(sum_over_ancestors(g, &c))?;
            lebesgue_norm(g, &h, &ws[n], p)?
        }
        ConcaveVariant::Disjoint => {
            let subsets = inst.subsets.as_ref().ok_or_else(|| {
                Error::Constraint("CONCAVE: the disjoint variant needs subsets Ẽ(Q)".into())
            })?;
            subsets.validate(g, false)?;
            let total: f64 = subsets
                .entries
                .iter()
                .map(|e| {
                    let v = c[e.cube.flat()];
                    if v == 0.0 {
                        0.0
                    } else {
                        v.powf(p) * e.weighted_mass(g, &ws[n])
                    }
                })
                .sum();
            total.powf(s.alpha)
        }
    };
    let mut norms = 1.0;
    for i in 0..n {
        norms *= maximal_seq_norm(g, &lams[i], &ws[i], s.p[i], None)?;
    }
    let rhs = carleson_norm(g, &inst.tau)?
        * muckenhoupt(g, ws, &s.q)?
        * fujii_wilson(g, ws, &s.fw)?
        * norms;
    Ok((lhs, rhs))
}

/// The measure `ν = w dμ` is given by the first weight.
fn frac(inst: &Instance, s: &FracSpec) -> Result<(f64, f64)> {
    let w = &inst.weights(1)?[0];
    let f = &inst.functions(1)?[0];
    let g = &inst.grid;
    let nu = LeafFn::weight(weighted_masses(g, w))?;
    let mf = fractional_maximal_wrt(g, f, s.rho, &nu)?;
    let lhs = lorentz_norm_masses(mf.values(), nu.values(), s.q, s.r)?;
    let rhs = lorentz_norm_masses(f.values(), nu.values(), s.p, s.r)?;
    Ok((lhs, rhs))
}
