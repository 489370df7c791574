//! Exponent parameters for the inequality registry and their validation.

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::CaseId;
use crate::characteristics::CharExponents;
use crate::error::{Error, Result};
use crate::operators::ExponentProfile;

/// Relative slack on exponent identities such as `Σ rᵢ(1/tᵢ − ρᵢ) = 1`.
const IDENTITY_TOL: f64 = 1e-9;

/// Flat parameter record; each case reads the fields it needs.
/// Indices (`j`, `j_s`) are zero-based.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct IneqParams {
    #[serde(skip_serializing_if = "Vec::is_empty")]
    pub r: Vec<f64>,
    #[serde(skip_serializing_if = "Vec::is_empty")]
    pub rho: Vec<f64>,
    #[serde(skip_serializing_if = "Vec::is_empty")]
    pub t: Vec<f64>,
    #[serde(skip_serializing_if = "Vec::is_empty")]
    pub p: Vec<f64>,
    #[serde(skip_serializing_if = "Vec::is_empty")]
    pub s: Vec<f64>,
    #[serde(skip_serializing_if = "Vec::is_empty")]
    pub q: Vec<f64>,
    #[serde(skip_serializing_if = "Vec::is_empty")]
    pub beta: Vec<f64>,
    /// Indices measured in strong norms; the rest use `L^{t,r}` / `L^{p,1}`.
    #[serde(skip_serializing_if = "Vec::is_empty")]
    pub j_s: Vec<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub j: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub alpha: Option<f64>,
    /// Second Lorentz index; `"inf"` in JSON for the weak space.
    #[serde(skip_serializing_if = "Option::is_none", with = "lorentz_index")]
    pub lorentz_r: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub variant: Option<ConcaveVariant>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ConcaveVariant {
    /// Indicators `1_Q`; needs `α ≥ 1`.
    Full,
    /// Indicators of disjoint subsets `Ẽ(Q) ⊆ Q`.
    Disjoint,
}

mod lorentz_index {
    use serde::{Deserialize, Deserializer, Serializer};

    #[derive(Deserialize)]
    #[serde(untagged)]
    enum Raw {
        Num(f64),
        Text(String),
    }

    pub fn serialize<S: Serializer>(v: &Option<f64>, s: S) -> Result<S::Ok, S::Error> {
        match v {
            Some(x) if x.is_infinite() => s.serialize_str("inf"),
            Some(x) => s.serialize_f64(*x),
            None => s.serialize_none(),
        }
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Option<f64>, D::Error> {
        match Option::<Raw>::deserialize(d)? {
            None => Ok(None),
            Some(Raw::Num(x)) => Ok(Some(x)),
            Some(Raw::Text(t)) if t.eq_ignore_ascii_case("inf") => Ok(Some(f64::INFINITY)),
            Some(Raw::Text(t)) => Err(serde::de::Error::custom(format!(
                "lorentz_r must be a number or \"inf\", got {t:?}"
            ))),
        }
    }
}

impl IneqParams {
    /// First 12 hex digits of the SHA-256 of the canonical JSON encoding.
    pub fn digest(&self) -> String {
        let json = serde_json::to_string(self).expect("params serialize");
        let hash = Sha256::digest(json.as_bytes());
        hash.iter().take(6).map(|b| format!("{b:02x}")).collect()
    }
}

/// Hölder conjugate `t' = t/(t−1)`.
pub fn conjugate(t: f64) -> f64 {
    t / (t - 1.0)
}

fn fail<T>(case: CaseId, msg: impl Into<String>) -> Result<T> {
    Err(Error::Constraint(format!("{case}: {}", msg.into())))
}

fn require_len(case: CaseId, name: &str, v: &[f64], n: usize) -> Result<()> {
    if v.len() != n {
        return fail(
            case,
            format!("{name} must have {n} entries, got {}", v.len()),
        );
    }
    Ok(())
}

fn positive(case: CaseId, name: &str, v: &[f64]) -> Result<()> {
    for (i, x) in v.iter().enumerate() {
        if !(*x > 0.0 && x.is_finite()) {
            return fail(
                case,
                format!("{name}[{i}] = {x} must be positive and finite"),
            );
        }
    }
    Ok(())
}

fn partition(case: CaseId, j_s: &[usize], m: usize) -> Result<Vec<usize>> {
    let mut js = j_s.to_vec();
    js.sort_unstable();
    js.dedup();
    if js.is_empty() {
        return fail(case, "J_s must be non-empty");
    }
    if js.len() != j_s.len() {
        return fail(case, "J_s has repeated indices");
    }
    if let Some(&j) = js.iter().find(|&&j| j >= m) {
        return fail(case, format!("J_s index {j} is out of range for m = {m}"));
    }
    Ok(js)
}

/// Fractional-maximal profile with integrability exponents `1 < tᵢ < 1/ρᵢ`.
fn fractional_profile(
    case: CaseId,
    p: &IneqParams,
    n: usize,
) -> Result<(ExponentProfile, Vec<f64>)> {
    if n == 0 {
        return fail(case, "r must be non-empty");
    }
    require_len(case, "rho", &p.rho, n)?;
    require_len(case, "t", &p.t, n)?;
    let prof = ExponentProfile::new(p.r.clone(), p.rho.clone())
        .map_err(|e| Error::Constraint(format!("{case}: {e}")))?;
    for (i, (&t, &rho)) in p.t.iter().zip(&p.rho).enumerate() {
        let upper = if rho == 0.0 { f64::INFINITY } else { 1.0 / rho };
        if !(t > 1.0 && t < upper) {
            return fail(
                case,
                format!("t[{i}] = {t} must satisfy 1 < t < 1/ρ = {upper}"),
            );
        }
    }
    Ok((prof, p.t.clone()))
}

/// `rᵢ(1/tᵢ − ρᵢ)` for every slot.
fn gains(prof: &ExponentProfile, t: &[f64]) -> Vec<f64> {
    prof.r()
        .iter()
        .zip(prof.rho())
        .zip(t)
        .map(|((r, rho), t)| r * (1.0 / t - rho))
        .collect()
}

#[derive(Clone, Debug)]
pub struct MaxSpec {
    pub prof: ExponentProfile,
    pub t: Vec<f64>,
    pub alpha: f64,
    /// `(r₁/t₁', …, r_{m−1}/t_{m−1}', α)`.
    pub q: CharExponents,
    /// `(rᵢ(1/tᵢ − ρᵢ))_{i≠m}`.
    pub fw: CharExponents,
}

#[derive(Clone, Debug)]
pub struct DualSpec {
    pub prof: ExponentProfile,
    pub t: Vec<f64>,
    pub q: CharExponents,
    pub j_s: Vec<usize>,
    /// One FW exponent vector per `j ∈ J_s`.
    pub fw: Vec<CharExponents>,
}

#[derive(Clone, Debug)]
pub struct FwApSpec {
    pub q: Vec<f64>,
    pub beta: CharExponents,
    pub gamma: f64,
    pub ap: CharExponents,
}

#[derive(Clone, Debug)]
pub struct KeySpec {
    pub s: Vec<f64>,
    pub q: CharExponents,
    pub j: usize,
    pub alpha: f64,
}

#[derive(Clone, Debug)]
pub struct CharSpec {
    pub p: Vec<f64>,
    pub s: Vec<f64>,
    pub alpha: f64,
    pub q: CharExponents,
    /// `(1/pᵢ)_{i≠m}`.
    pub fw: CharExponents,
}

#[derive(Clone, Debug)]
pub struct ConvexSpec {
    pub p: Vec<f64>,
    pub s: Vec<f64>,
    pub q: CharExponents,
    pub j_s: Vec<usize>,
    pub fw: Vec<CharExponents>,
}

#[derive(Clone, Debug)]
pub struct ConcaveSpec {
    pub p: Vec<f64>,
    pub s: Vec<f64>,
    pub alpha: f64,
    pub q: CharExponents,
    pub fw: CharExponents,
    pub variant: ConcaveVariant,
}

#[derive(Clone, Debug)]
pub struct FracSpec {
    pub rho: f64,
    pub p: f64,
    pub q: f64,
    pub r: f64,
}

/// Parameters after validation, one variant per case family.
#[derive(Clone, Debug)]
pub enum CaseSpec {
    Max(MaxSpec),
    Dual(DualSpec),
    FwAp(FwApSpec),
    SumLt1 { beta: Vec<f64> },
    Cov { s: f64 },
    Key(KeySpec),
    Char(CharSpec),
    Convex(ConvexSpec),
    Concave(ConcaveSpec),
    Frac(FracSpec),
}

impl CaseSpec {
    /// Number of weights the case expects.
    pub fn num_weights(&self) -> usize {
        match self {
            CaseSpec::Max(s) => s.q.q().len(),
            CaseSpec::Dual(s) => s.q.q().len(),
            CaseSpec::FwAp(s) => s.q.len(),
            CaseSpec::SumLt1 { beta } => beta.len(),
            CaseSpec::Cov { .. } => 1,
            CaseSpec::Key(s) => s.s.len(),
            CaseSpec::Char(s) => s.s.len(),
            CaseSpec::Convex(s) => s.p.len(),
            CaseSpec::Concave(s) => s.p.len() + 1,
            CaseSpec::Frac(_) => 1,
        }
    }

    /// Number of test functions the case expects.
    pub fn num_functions(&self) -> usize {
        match self {
            CaseSpec::Max(s) => s.prof.len(),
            CaseSpec::Dual(s) => s.prof.len(),
            CaseSpec::Frac(_) => 1,
            _ => 0,
        }
    }

    /// Number of cube sequences `λᵢ` the case expects.
    pub fn num_sequences(&self) -> usize {
        match self {
            CaseSpec::Cov { .. } => 1,
            CaseSpec::Char(s) => s.p.len(),
            CaseSpec::Convex(s) => s.p.len(),
            CaseSpec::Concave(s) => s.p.len(),
            _ => 0,
        }
    }

    /// Whether the weights must satisfy `Πᵢ wᵢ^{qᵢ} ≡ 1`.
    pub fn dependent_exponents(&self) -> Option<&[f64]> {
        match self {
            CaseSpec::FwAp(s) => Some(&s.q),
            _ => None,
        }
    }

    /// `m` as reported in suite output.
    pub fn m(&self) -> usize {
        self.num_weights()
    }
}

/// Checks the exponent constraints of `case` and derives the exponents that
/// appear on the right-hand side.
pub fn validate(case: CaseId, p: &IneqParams) -> Result<CaseSpec> {
    use CaseId::*;
    match case {
        MaxWeak | MaxStrong | ABelow | AWeakProbe => {
            let n = p.r.len();
            let (prof, t) = fractional_profile(case, p, n)?;
            let g = gains(&prof, &t);
            let alpha: f64 = g.iter().sum();
            if matches!(case, ABelow | AWeakProbe) && alpha < 1.0 - IDENTITY_TOL {
                return fail(case, format!("α = Σ rᵢ(1/tᵢ − ρᵢ) = {alpha} must be ≥ 1"));
            }
            let mut q: Vec<f64> = prof
                .r()
                .iter()
                .zip(&t)
                .map(|(r, t)| r / conjugate(*t))
                .collect();
            q.push(alpha);
            let mut fw = g;
            fw.push(0.0);
            Ok(CaseSpec::Max(MaxSpec {
                prof,
                t,
                alpha,
                q: CharExponents::new(q)?,
                fw: CharExponents::new(fw)?,
            }))
        }
        BDual => {
            let m = p.r.len();
            if m < 2 {
                return fail(case, format!("m = {m} must be at least 2"));
            }
            let (prof, t) = fractional_profile(case, p, m)?;
            let g = gains(&prof, &t);
            let total: f64 = g.iter().sum();
            if (total - 1.0).abs() > IDENTITY_TOL {
                return fail(case, format!("Σ rᵢ(1/tᵢ − ρᵢ) = {total} must equal 1"));
            }
            let j_s = partition(case, &p.j_s, m)?;
            let q = prof
                .r()
                .iter()
                .zip(&t)
                .map(|(r, t)| r / conjugate(*t))
                .collect();
            let fw = j_s
                .iter()
                .map(|&j| CharExponents::without(&g, j))
                .collect::<Result<_>>()?;
            Ok(CaseSpec::Dual(DualSpec {
                prof,
                t,
                q: CharExponents::new(q)?,
                j_s,
                fw,
            }))
        }
        FwAp => {
            let m = p.q.len();
            if m < 2 {
                return fail(case, format!("m = {m} must be at least 2"));
            }
            require_len(case, "beta", &p.beta, m)?;
            positive(case, "q", &p.q)?;
            let beta = CharExponents::new(p.beta.clone())
                .map_err(|e| Error::Constraint(format!("{case}: {e}")))?;
            if beta.total() <= 0.0 {
                return fail(case, "Σβᵢ must be positive");
            }
            let gamma = p
                .beta
                .iter()
                .zip(&p.q)
                .map(|(b, q)| b / q)
                .fold(0.0, f64::max);
            let ap = CharExponents::new(p.q.iter().map(|q| gamma * q).collect())?;
            Ok(CaseSpec::FwAp(FwApSpec {
                q: p.q.clone(),
                beta,
                gamma,
                ap,
            }))
        }
        SumLt1 => {
            if p.beta.is_empty() {
                return fail(case, "beta must be non-empty");
            }
            for (i, b) in p.beta.iter().enumerate() {
                if !(*b >= 0.0) {
                    return fail(case, format!("beta[{i}] = {b} must be ≥ 0"));
                }
            }
            let total: f64 = p.beta.iter().sum();
            if total >= 1.0 {
                return fail(case, format!("β = Σβᵢ = {total} must be < 1"));
            }
            Ok(CaseSpec::SumLt1 {
                beta: p.beta.clone(),
            })
        }
        Cov => {
            require_len(case, "s", &p.s, 1)?;
            let s = p.s[0];
            if !(s > 1.0 && s.is_finite()) {
                return fail(case, format!("s = {s} must satisfy 1 < s < ∞"));
            }
            Ok(CaseSpec::Cov { s })
        }
        Key => {
            let m = p.s.len();
            if m < 2 {
                return fail(case, format!("m = {m} must be at least 2"));
            }
            require_len(case, "q", &p.q, m)?;
            positive(case, "q", &p.q)?;
            let j =
                p.j.ok_or_else(|| Error::Constraint(format!("{case}: index j is required")))?;
            if j >= m {
                return fail(case, format!("j = {j} is out of range for m = {m}"));
            }
            for (i, s) in p.s.iter().enumerate() {
                if !s.is_finite() || (i != j && *s <= 0.0) {
                    return fail(case, format!("s[{i}] = {s} must be positive for i ≠ j"));
                }
            }
            if (p.q[j] - (1.0 + p.s[j])).abs() > IDENTITY_TOL * p.q[j].max(1.0) {
                return fail(
                    case,
                    format!("q[j] = {} must equal 1 + s[j] = {}", p.q[j], 1.0 + p.s[j]),
                );
            }
            let ssum: f64 = p.s.iter().sum();
            let qsum: f64 = p.q.iter().sum();
            if ssum > qsum * (1.0 + IDENTITY_TOL) {
                return fail(case, format!("Σsᵢ = {ssum} must not exceed Σqᵢ = {qsum}"));
            }
            let min_ratio = (0..m)
                .filter(|&i| i != j)
                .map(|i| p.s[i] / p.q[i])
                .fold(f64::INFINITY, f64::min);
            if !(ssum / qsum < min_ratio) {
                return fail(
                    case,
                    format!(
                        "Σsᵢ/Σqᵢ = {} must be < min_{{i≠j}} sᵢ/qᵢ = {min_ratio}",
                        ssum / qsum
                    ),
                );
            }
            let alpha = p
                .alpha
                .ok_or_else(|| Error::Constraint(format!("{case}: alpha is required")))?;
            if !(alpha > 0.0 && alpha.is_finite()) {
                return fail(case, format!("α = {alpha} must satisfy 0 < α < ∞"));
            }
            Ok(CaseSpec::Key(KeySpec {
                s: p.s.clone(),
                q: CharExponents::new(p.q.clone())?,
                j,
                alpha,
            }))
        }
        Char | CharAltProbe => {
            let n = p.p.len();
            if n == 0 {
                return fail(case, "p must be non-empty");
            }
            positive(case, "p", &p.p)?;
            require_len(case, "s", &p.s, n + 1)?;
            let alpha: f64 = p.p.iter().map(|p| 1.0 / p).sum();
            let mut q = Vec::with_capacity(n + 1);
            for i in 0..n {
                q.push(p.s[i] - 1.0 / p.p[i]);
            }
            q.push(p.s[n] - (1.0 - alpha));
            for (i, qi) in q.iter().enumerate() {
                if !(*qi > 0.0) {
                    return fail(case, format!("q[{i}] = {qi} must be positive"));
                }
            }
            let mut fw: Vec<f64> = p.p.iter().map(|p| 1.0 / p).collect();
            fw.push(0.0);
            Ok(CaseSpec::Char(CharSpec {
                p: p.p.clone(),
                s: p.s.clone(),
                alpha,
                q: CharExponents::new(q)?,
                fw: CharExponents::new(fw)?,
            }))
        }
        Convex => {
            let m = p.p.len();
            if m < 2 {
                return fail(case, format!("m = {m} must be at least 2"));
            }
            require_len(case, "s", &p.s, m)?;
            for (i, x) in p.p.iter().enumerate() {
                if !(*x > 1.0 && x.is_finite()) {
                    return fail(case, format!("p[{i}] = {x} must satisfy 1 < p < ∞"));
                }
            }
            let total: f64 = p.p.iter().map(|p| 1.0 / p).sum();
            if (total - 1.0).abs() > IDENTITY_TOL {
                return fail(case, format!("Σ 1/pᵢ = {total} must equal 1"));
            }
            let q: Vec<f64> = p.s.iter().zip(&p.p).map(|(s, p)| s - 1.0 / p).collect();
            if let Some((i, qi)) = q.iter().enumerate().find(|(_, q)| !(**q > 0.0)) {
                return fail(case, format!("q[{i}] = sᵢ − 1/pᵢ = {qi} must be positive"));
            }
            let j_s = partition(case, &p.j_s, m)?;
            let inv: Vec<f64> = p.p.iter().map(|p| 1.0 / p).collect();
            let fw = j_s
                .iter()
                .map(|&j| CharExponents::without(&inv, j))
                .collect::<Result<_>>()?;
            Ok(CaseSpec::Convex(ConvexSpec {
                p: p.p.clone(),
                s: p.s.clone(),
                q: CharExponents::new(q)?,
                j_s,
                fw,
            }))
        }
        Concave => {
            let n = p.p.len();
            if n == 0 {
                return fail(case, "p must be non-empty");
            }
            require_len(case, "s", &p.s, n)?;
            positive(case, "p", &p.p)?;
            positive(case, "s", &p.s)?;
            let alpha: f64 = p.p.iter().map(|p| 1.0 / p).sum();
            let variant = p.variant.unwrap_or(ConcaveVariant::Full);
            if variant == ConcaveVariant::Full && alpha < 1.0 - IDENTITY_TOL {
                return fail(
                    case,
                    format!("α = Σ 1/pᵢ = {alpha} must be ≥ 1 for the full variant"),
                );
            }
            let mut q: Vec<f64> = p.s.iter().zip(&p.p).map(|(s, p)| s - 1.0 / p).collect();
            if let Some((i, qi)) = q.iter().enumerate().find(|(_, q)| !(**q > 0.0)) {
                return fail(case, format!("q[{i}] = sᵢ − 1/pᵢ = {qi} must be positive"));
            }
            q.push(alpha);
            let mut fw: Vec<f64> = p.p.iter().map(|p| 1.0 / p).collect();
            fw.push(0.0);
            Ok(CaseSpec::Concave(ConcaveSpec {
                p: p.p.clone(),
                s: p.s.clone(),
                alpha,
                q: CharExponents::new(q)?,
                fw: CharExponents::new(fw)?,
                variant,
            }))
        }
        FracMaxLorentz => {
            require_len(case, "rho", &p.rho, 1)?;
            require_len(case, "p", &p.p, 1)?;
            let (rho, pp) = (p.rho[0], p.p[0]);
            if !(0.0..1.0).contains(&rho) {
                return fail(case, format!("ρ = {rho} must satisfy 0 ≤ ρ < 1"));
            }
            let upper = if rho == 0.0 { f64::INFINITY } else { 1.0 / rho };
            if !(pp > 1.0 && pp < upper) {
                return fail(case, format!("p = {pp} must satisfy 1 < p < 1/ρ = {upper}"));
            }
            let r = p.lorentz_r.unwrap_or(pp);
            if !(r >= 1.0) {
                return fail(
                    case,
                    format!("Lorentz index r = {r} must satisfy 1 ≤ r ≤ ∞"),
                );
            }
            Ok(CaseSpec::Frac(FracSpec {
                rho,
                p: pp,
                q: 1.0 / (1.0 / pp - rho),
                r,
            }))
        }
    }
}
