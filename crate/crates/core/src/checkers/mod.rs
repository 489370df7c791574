//! Evaluators for the inequality registry.
//!
//! Each case computes its left-hand side and its right-hand side without the
//! implied constant on a concrete [`Instance`]; the ratio of the two is what
//! suites track.

mod cases;
pub mod params;

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

pub use params::{validate, CaseSpec, ConcaveVariant, IneqParams};

use crate::error::{Error, Result};
use crate::grid::{CubeSeq, Grid, LeafFn};
use crate::sparse::SparseAllocation;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum CaseId {
    MaxWeak,
    MaxStrong,
    BDual,
    ABelow,
    FwAp,
    SumLt1,
    Cov,
    Key,
    Char,
    Convex,
    Concave,
    FracMaxLorentz,
    /// Weak-type bound for the sparse operator without the FW factor.
    AWeakProbe,
    /// CHAR with `Π_{i<m} [wᵢ]_FW^{1/pᵢ}` in place of the joint FW factor.
    CharAltProbe,
}

impl CaseId {
    /// Cases with a pass/fail contract.
    pub const REGISTRY: [CaseId; 12] = [
        CaseId::MaxWeak,
        CaseId::MaxStrong,
        CaseId::BDual,
        CaseId::ABelow,
        CaseId::FwAp,
        CaseId::SumLt1,
        CaseId::Cov,
        CaseId::Key,
        CaseId::Char,
        CaseId::Convex,
        CaseId::Concave,
        CaseId::FracMaxLorentz,
    ];

    /// Report-only probes of open questions.
    pub const PROBES: [CaseId; 2] = [CaseId::AWeakProbe, CaseId::CharAltProbe];

    pub fn is_probe(self) -> bool {
        Self::PROBES.contains(&self)
    }

    pub fn name(self) -> &'static str {
        match self {
            CaseId::MaxWeak => "MAX_WEAK",
            CaseId::MaxStrong => "MAX_STRONG",
            CaseId::BDual => "B_DUAL",
            CaseId::ABelow => "A_BELOW",
            CaseId::FwAp => "FW_AP",
            CaseId::SumLt1 => "SUM_LT1",
            CaseId::Cov => "COV",
            CaseId::Key => "KEY",
            CaseId::Char => "CHAR",
            CaseId::Convex => "CONVEX",
            CaseId::Concave => "CONCAVE",
            CaseId::FracMaxLorentz => "FRAC_MAX_LORENTZ",
            CaseId::AWeakProbe => "A_WEAK_PROBE",
            CaseId::CharAltProbe => "CHAR_ALT_PROBE",
        }
    }
}

impl fmt::Display for CaseId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for CaseId {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Self::REGISTRY
            .iter()
            .chain(&Self::PROBES)
            .copied()
            .find(|c| c.name().eq_ignore_ascii_case(s.trim()))
            .ok_or_else(|| Error::Parse(format!("unknown case {s:?}")))
    }
}

/// Where an instance came from.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct InstanceDigest {
    pub seed: u64,
    pub depth: u32,
    pub family: String,
}

/// Grid plus all data a case may read. Cases take the leading entries of
/// `weights`, `functions` and `sequences` they need.
#[derive(Clone, Debug)]
pub struct Instance {
    pub grid: Grid,
    pub weights: Vec<LeafFn>,
    pub functions: Vec<LeafFn>,
    pub tau: CubeSeq,
    pub sequences: Vec<CubeSeq>,
    /// Disjoint subsets `Ẽ(Q)` for the disjoint concave variant.
    pub subsets: Option<SparseAllocation>,
    pub digest: InstanceDigest,
}

/// On-disk form of an [`Instance`]; cube sequences are in heap order.
#[derive(Clone, Debug, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct InstanceFile {
    pub depth: u32,
    /// Leaf masses; uniform with total mass 1 when omitted.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub leaf_masses: Option<Vec<f64>>,
    pub weights: Vec<Vec<f64>>,
    pub functions: Vec<Vec<f64>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub tau: Option<Vec<f64>>,
    pub sequences: Vec<Vec<f64>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub subsets: Option<SparseAllocation>,
    pub seed: u64,
    pub family: String,
}

impl Instance {
    pub fn new(grid: Grid, digest: InstanceDigest) -> Self {
        let tau = CubeSeq::zeros(&grid);
        Instance {
            grid,
            weights: Vec::new(),
            functions: Vec::new(),
            tau,
            sequences: Vec::new(),
            subsets: None,
            digest,
        }
    }

    pub fn from_file(file: InstanceFile) -> Result<Self> {
        let grid = match file.leaf_masses {
            Some(m) => Grid::new(file.depth, m)?,
            None => Grid::uniform(file.depth)?,
        };
        let weights = file
            .weights
            .into_iter()
            .map(LeafFn::weight)
            .collect::<Result<Vec<_>>>()?;
        let functions = file
            .functions
            .into_iter()
            .map(LeafFn::new)
            .collect::<Result<Vec<_>>>()?;
        for f in weights.iter().chain(&functions) {
            grid.check_fn(f)?;
        }
        let tau = match file.tau {
            Some(t) => CubeSeq::new(&grid, t)?,
            None => CubeSeq::zeros(&grid),
        };
        let sequences = file
            .sequences
            .into_iter()
            .map(|s| CubeSeq::new(&grid, s))
            .collect::<Result<Vec<_>>>()?;
        if let Some(s) = &file.subsets {
            s.validate(&grid, false)?;
        }
        let digest = InstanceDigest {
            seed: file.seed,
            depth: file.depth,
            family: file.family,
        };
        Ok(Instance {
            grid,
            weights,
            functions,
            tau,
            sequences,
            subsets: file.subsets,
            digest,
        })
    }

    pub fn to_file(&self) -> InstanceFile {
        InstanceFile {
            depth: self.grid.depth(),
            leaf_masses: Some(self.grid.leaf_masses().to_vec()),
            weights: self.weights.iter().map(|w| w.values().to_vec()).collect(),
            functions: self.functions.iter().map(|f| f.values().to_vec()).collect(),
            tau: Some(self.tau.values().to_vec()),
            sequences: self.sequences.iter().map(|s| s.values().to_vec()).collect(),
            subsets: self.subsets.clone(),
            seed: self.digest.seed,
            family: self.digest.family.clone(),
        }
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let file: InstanceFile =
            serde_json::from_str(text).map_err(|e| Error::Parse(e.to_string()))?;
        Instance::from_file(file)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(&self.to_file()).expect("instance serializes")
    }

    fn take<'a, T>(items: &'a [T], n: usize, what: &str) -> Result<&'a [T]> {
        if items.len() < n {
            return Err(Error::Constraint(format!(
                "instance provides {} {what}, case needs {n}",
                items.len()
            )));
        }
        Ok(&items[..n])
    }

    pub(crate) fn weights(&self, n: usize) -> Result<&[LeafFn]> {
        Self::take(&self.weights, n, "weights")
    }

    pub(crate) fn functions(&self, n: usize) -> Result<&[LeafFn]> {
        Self::take(&self.functions, n, "functions")
    }

    pub(crate) fn sequences(&self, n: usize) -> Result<&[CubeSeq]> {
        Self::take(&self.sequences, n, "sequences")
    }

    /// Copy with the inputs each side is homogeneous in multiplied by `c`:
    /// test functions if the case has any, otherwise the sequences `λᵢ`,
    /// otherwise `τ`. For the FW/A_p comparison, whose two sides only see
    /// weights, the first weight is scaled by `c` and the last by the power
    /// that keeps `Π wᵢ^{qᵢ}` fixed.
    pub fn scaled_inputs(&self, spec: &CaseSpec, c: f64) -> Instance {
        let mut out = self.clone();
        if let CaseSpec::FwAp(s) = spec {
            let m = s.q.len();
            out.weights[0] = self.weights[0].scaled(c);
            out.weights[m - 1] = self.weights[m - 1].scaled(c.powf(-s.q[0] / s.q[m - 1]));
        } else if spec.num_functions() > 0 {
            out.functions = self.functions.iter().map(|f| f.scaled(c)).collect();
        } else if spec.num_sequences() > 0 {
            out.sequences = self.sequences.iter().map(|s| s.scaled(c)).collect();
        } else {
            out.tau = self.tau.scaled(c);
        }
        out
    }
}

/// Outcome of one evaluation.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct IneqReport {
    pub case: CaseId,
    pub m: usize,
    pub seed: u64,
    pub depth: u32,
    pub family: String,
    pub params_digest: String,
    pub lhs: f64,
    pub rhs: f64,
    /// `lhs / rhs`, and 0 when both vanish.
    pub ratio: f64,
}

impl IneqReport {
    pub fn is_finite(&self) -> bool {
        self.lhs.is_finite() && self.rhs.is_finite() && self.ratio.is_finite()
    }
}

/// Validates `params` for `case` and evaluates both sides on `instance`.
pub fn evaluate(case: CaseId, instance: &Instance, params: &IneqParams) -> Result<IneqReport> {
    let spec = validate(case, params)?;
    evaluate_spec(case, &spec, &params.digest(), instance)
}

/// [`evaluate`] with pre-validated parameters.
pub fn evaluate_spec(
    case: CaseId,
    spec: &CaseSpec,
    params_digest: &str,
    instance: &Instance,
) -> Result<IneqReport> {
    let (lhs, rhs) = cases::sides(case, spec, instance)?;
    let ratio = if rhs == 0.0 {
        if lhs > 0.0 {
            return Err(Error::HardFailure {
                case: case.to_string(),
                lhs,
            });
        }
        0.0
    } else {
        lhs / rhs
    };
    Ok(IneqReport {
        case,
        m: spec.m(),
        seed: instance.digest.seed,
        depth: instance.grid.depth(),
        family: instance.digest.family.clone(),
        params_digest: params_digest.to_string(),
        lhs,
        rhs,
        ratio,
    })
}

/// `w_m = (Π_{i<m} wᵢ^{qᵢ})^{-1/q_m}`, so that `Πᵢ wᵢ^{qᵢ} ≡ 1`.
pub fn dependent_complete(ws: &[LeafFn], q: &[f64]) -> Result<LeafFn> {
    if q.len() != ws.len() + 1 {
        return Err(Error::LengthMismatch {
            expected: ws.len() + 1,
            got: q.len(),
        });
    }
    let qm = q[ws.len()];
    if !(qm > 0.0 && qm.is_finite()) {
        return Err(Error::Constraint(format!("q_m = {qm} must be positive")));
    }
    let n = match ws.first() {
        Some(w) => w.len(),
        None => return Err(Error::Constraint("at least one weight is required".into())),
    };
    let mut log = vec![0.0; n];
    for (w, &qi) in ws.iter().zip(q) {
        if w.len() != n {
            return Err(Error::LengthMismatch {
                expected: n,
                got: w.len(),
            });
        }
        w.require_weight()?;
        for (l, v) in log.iter_mut().zip(w.values()) {
            *l += qi * v.ln();
        }
    }
    LeafFn::weight(log.into_iter().map(|l| (-l / qm).exp()).collect())
}
