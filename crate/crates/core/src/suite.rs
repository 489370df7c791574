//! Randomized suites over the inequality registry, CSV/JSON output, the
//! depth-stability check and the frozen constant ledger.

use std::collections::BTreeMap;
use std::io::Write;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::checkers::{
    evaluate_spec, validate, CaseId, CaseSpec, ConcaveVariant, IneqParams, IneqReport,
};
use crate::error::{Error, Result};
use crate::search::{constant_instance, derive_seed, random_instance};

/// Allowed growth of the per-depth maximum ratio from depth `k` to `2k`.
pub const DEPTH_GROWTH: f64 = 1.5;

/// Allowed excess over the ledger before a regression is reported.
pub const LEDGER_TOLERANCE: f64 = 0.05;

/// One exponent configuration of one case.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Cell {
    pub case: CaseId,
    pub label: String,
    pub params: IneqParams,
}

impl Cell {
    fn new(case: CaseId, label: &str, params: IneqParams) -> Self {
        Cell {
            case,
            label: label.to_string(),
            params,
        }
    }

    /// `CASE/label`, the ledger key.
    pub fn key(&self) -> String {
        format!("{}/{}", self.case, self.label)
    }

    /// Stream tag derived from the key, so that trial seeds do not depend on
    /// which other cells are selected.
    pub fn tag(&self) -> u64 {
        let hash = Sha256::digest(self.key().as_bytes());
        u64::from_le_bytes(hash[..8].try_into().expect("8 bytes"))
    }
}

fn frac_params(r: &[f64], rho: &[f64], t: &[f64]) -> IneqParams {
    IneqParams {
        r: r.to_vec(),
        rho: rho.to_vec(),
        t: t.to_vec(),
        ..Default::default()
    }
}

/// Exponent cells of the core suite: at least two per registry case, plus
/// the report-only probes.
pub fn core_cells() -> Vec<Cell> {
    use CaseId::*;
    let mut cells = Vec::new();
    for case in [MaxWeak, MaxStrong] {
        cells.push(Cell::new(
            case,
            "m2-r1-t2",
            frac_params(&[1.0], &[0.0], &[2.0]),
        ));
        cells.push(Cell::new(
            case,
            "m3-r11-t33",
            frac_params(&[1.0, 1.0], &[0.0, 0.0], &[3.0, 3.0]),
        ));
        cells.push(Cell::new(
            case,
            "m2-r2-rho25-t2",
            frac_params(&[2.0], &[0.25], &[2.0]),
        ));
    }
    let dual = |r: &[f64], rho: &[f64], t: &[f64], j_s: &[usize]| IneqParams {
        j_s: j_s.to_vec(),
        ..frac_params(r, rho, t)
    };
    cells.push(Cell::new(
        BDual,
        "m2-t22-js0",
        dual(&[1.0, 1.0], &[0.0, 0.0], &[2.0, 2.0], &[0]),
    ));
    cells.push(Cell::new(
        BDual,
        "m3-t333-jsall",
        dual(&[1.0; 3], &[0.0; 3], &[3.0; 3], &[0, 1, 2]),
    ));
    cells.push(Cell::new(
        BDual,
        "m2-frac-js1",
        dual(&[0.5, 1.0], &[0.2, 0.0], &[2.0, 1.0 / 0.85], &[1]),
    ));
    for case in [ABelow, AWeakProbe] {
        cells.push(Cell::new(
            case,
            "m2-r2-t2",
            frac_params(&[2.0], &[0.0], &[2.0]),
        ));
        cells.push(Cell::new(
            case,
            "m3-r11-t1.5",
            frac_params(&[1.0, 1.0], &[0.0, 0.0], &[1.5, 1.5]),
        ));
    }
    cells.push(Cell::new(
        ABelow,
        "m2-r3-rho10-t2",
        frac_params(&[3.0], &[0.1], &[2.0]),
    ));
    let fw = |q: &[f64], beta: &[f64]| IneqParams {
        q: q.to_vec(),
        beta: beta.to_vec(),
        ..Default::default()
    };
    cells.push(Cell::new(FwAp, "q11-b10", fw(&[1.0, 1.0], &[1.0, 0.0])));
    cells.push(Cell::new(
        FwAp,
        "q111-b.5.5.0",
        fw(&[1.0; 3], &[0.5, 0.5, 0.0]),
    ));
    cells.push(Cell::new(FwAp, "q12-b11", fw(&[1.0, 2.0], &[1.0, 1.0])));
    for (label, beta) in [
        ("b.5", vec![0.5]),
        ("b.3.4", vec![0.3, 0.4]),
        ("b.2.2.2", vec![0.2; 3]),
    ] {
        cells.push(Cell::new(
            SumLt1,
            label,
            IneqParams {
                beta,
                ..Default::default()
            },
        ));
    }
    for (label, s) in [("s2", 2.0), ("s1.5", 1.5), ("s4", 4.0)] {
        cells.push(Cell::new(
            Cov,
            label,
            IneqParams {
                s: vec![s],
                ..Default::default()
            },
        ));
    }
    let key = |s: &[f64], q: &[f64], j: usize, alpha: f64| IneqParams {
        s: s.to_vec(),
        q: q.to_vec(),
        j: Some(j),
        alpha: Some(alpha),
        ..Default::default()
    };
    cells.push(Cell::new(
        Key,
        "m2-j1-a.5",
        key(&[1.0, 0.0], &[0.5, 1.0], 1, 0.5),
    ));
    cells.push(Cell::new(
        Key,
        "m2-j0-a1",
        key(&[0.5, 1.0], &[1.5, 0.5], 0, 1.0),
    ));
    cells.push(Cell::new(
        Key,
        "m3-j2-a2",
        key(&[1.0, 1.0, 0.0], &[0.5, 0.5, 1.0], 2, 2.0),
    ));
    let ps = |p: &[f64], s: &[f64]| IneqParams {
        p: p.to_vec(),
        s: s.to_vec(),
        ..Default::default()
    };
    cells.push(Cell::new(Char, "p2-s11", ps(&[2.0], &[1.0, 1.0])));
    cells.push(Cell::new(Char, "p.5-s3.5", ps(&[0.5], &[3.0, 0.5])));
    cells.push(Cell::new(Char, "p33-s111", ps(&[3.0, 3.0], &[1.0; 3])));
    cells.push(Cell::new(CharAltProbe, "p2-s11", ps(&[2.0], &[1.0, 1.0])));
    cells.push(Cell::new(
        CharAltProbe,
        "p33-s111",
        ps(&[3.0, 3.0], &[1.0; 3]),
    ));
    let convex = |p: &[f64], s: &[f64], j_s: &[usize]| IneqParams {
        j_s: j_s.to_vec(),
        ..ps(p, s)
    };
    cells.push(Cell::new(
        Convex,
        "p22-s11-jsall",
        convex(&[2.0, 2.0], &[1.0, 1.0], &[0, 1]),
    ));
    cells.push(Cell::new(
        Convex,
        "p333-s111-js2",
        convex(&[3.0; 3], &[1.0; 3], &[2]),
    ));
    cells.push(Cell::new(
        Convex,
        "p1.5_3-s1_.5-js0",
        convex(&[1.5, 3.0], &[1.0, 0.5], &[0]),
    ));
    let concave = |p: &[f64], s: &[f64], v: ConcaveVariant| IneqParams {
        variant: Some(v),
        ..ps(p, s)
    };
    cells.push(Cell::new(
        Concave,
        "full-p1-s2",
        concave(&[1.0], &[2.0], ConcaveVariant::Full),
    ));
    cells.push(Cell::new(
        Concave,
        "full-p1.5_1.5-s11",
        concave(&[1.5, 1.5], &[1.0, 1.0], ConcaveVariant::Full),
    ));
    cells.push(Cell::new(
        Concave,
        "disjoint-p2-s1",
        concave(&[2.0], &[1.0], ConcaveVariant::Disjoint),
    ));
    cells.push(Cell::new(
        Concave,
        "disjoint-p1_2-s1.5_1",
        concave(&[1.0, 2.0], &[1.5, 1.0], ConcaveVariant::Disjoint),
    ));
    let fm = |rho: f64, p: f64, r: f64| IneqParams {
        rho: vec![rho],
        p: vec![p],
        lorentz_r: Some(r),
        ..Default::default()
    };
    cells.push(Cell::new(FracMaxLorentz, "rho0-p2-r2", fm(0.0, 2.0, 2.0)));
    cells.push(Cell::new(
        FracMaxLorentz,
        "rho.25-p2-r1",
        fm(0.25, 2.0, 1.0),
    ));
    cells.push(Cell::new(
        FracMaxLorentz,
        "rho.5-p1.5-rinf",
        fm(0.5, 1.5, f64::INFINITY),
    ));
    cells
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SuiteKind {
    /// Every cell on the all-constant instance; no randomness.
    Trivial,
    /// Every cell on seeded random instances.
    Core,
}

#[derive(Clone, Debug)]
pub struct SuiteConfig {
    pub kind: SuiteKind,
    pub cells: Vec<Cell>,
    pub depths: Vec<u32>,
    pub trials: usize,
    pub seed: u64,
}

impl SuiteConfig {
    /// Keeps only the cells of the listed cases.
    pub fn restrict(&mut self, cases: &[CaseId]) {
        self.cells.retain(|c| cases.contains(&c.case));
    }
}

/// Evaluation that raised an error, e.g. a hard failure.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct TrialFailure {
    pub cell: String,
    pub seed: u64,
    pub depth: u32,
    pub message: String,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct CellSummary {
    pub cell: String,
    pub case: CaseId,
    pub probe: bool,
    pub m: usize,
    pub params_digest: String,
    pub trials: usize,
    pub max_ratio: f64,
    pub argmax_seed: u64,
    pub argmax_depth: u32,
    pub per_depth: BTreeMap<u32, f64>,
    pub non_finite: usize,
    pub failures: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct StabilityCheck {
    pub cell: String,
    pub depth: u32,
    pub doubled: u32,
    pub max_ratio: f64,
    pub doubled_max_ratio: f64,
    pub ok: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct LedgerCheck {
    pub cell: String,
    pub observed: f64,
    pub recorded: Option<f64>,
    pub ok: bool,
}

#[derive(Clone, Debug, Serialize)]
pub struct SuiteOutcome {
    pub seed: u64,
    pub depths: Vec<u32>,
    pub trials: usize,
    #[serde(skip)]
    pub reports: Vec<(String, IneqReport)>,
    pub failures: Vec<TrialFailure>,
    pub cells: Vec<CellSummary>,
    pub stability: Vec<StabilityCheck>,
    pub ledger: Vec<LedgerCheck>,
}

/// Exact ratio on the instance built by [`constant_instance`]. Every
/// average, characteristic and maximal function is 1, leaving only the
/// count of FW terms and the Lorentz normalization `‖1‖_{L^{p,r}} = (p/r)^{1/r}`.
pub fn constant_ratio(spec: &CaseSpec) -> f64 {
    match spec {
        CaseSpec::Dual(s) => {
            let r = s.prof.r();
            let lorentz: f64 = (0..r.len())
                .filter(|i| !s.j_s.contains(i))
                .map(|i| s.t[i] / r[i])
                .product();
            1.0 / (s.j_s.len() as f64 * lorentz)
        }
        CaseSpec::Convex(s) => {
            let lorentz: f64 = (0..s.p.len())
                .filter(|i| !s.j_s.contains(i))
                .map(|i| s.p[i])
                .product();
            1.0 / (s.j_s.len() as f64 * lorentz)
        }
        CaseSpec::Frac(s) if s.r.is_finite() => (s.q / s.p).powf(1.0 / s.r),
        _ => 1.0,
    }
}

/// Relative tolerance on [`constant_ratio`].
pub const CONSTANT_TOL: f64 = 1e-12;

/// Runs every `(cell, depth, trial)` in parallel; results come back in
/// that order regardless of scheduling.
pub fn run_suite(cfg: &SuiteConfig) -> Result<SuiteOutcome> {
    if cfg.depths.is_empty() {
        return Err(Error::Constraint("no depths to run".into()));
    }
    let specs = cfg
        .cells
        .iter()
        .map(|c| validate(c.case, &c.params))
        .collect::<Result<Vec<_>>>()?;
    let digests: Vec<String> = cfg.cells.iter().map(|c| c.params.digest()).collect();
    let tags: Vec<u64> = cfg.cells.iter().map(Cell::tag).collect();
    let trials = match cfg.kind {
        SuiteKind::Trivial => 1,
        SuiteKind::Core => cfg.trials.max(1),
    };
    let jobs: Vec<(usize, u32, usize)> = (0..cfg.cells.len())
        .flat_map(|c| {
            cfg.depths
                .iter()
                .flat_map(move |&d| (0..trials).map(move |t| (c, d, t)))
        })
        .collect();
    let results: Vec<(usize, u64, u32, Result<IneqReport>)> = jobs
        .par_iter()
        .map(|&(c, depth, trial)| {
            let cell = &cfg.cells[c];
            let seed = match cfg.kind {
                SuiteKind::Trivial => 0,
                SuiteKind::Core => derive_seed(cfg.seed, &[tags[c], u64::from(depth), trial as u64]),
            };
            let inst = match cfg.kind {
                SuiteKind::Trivial => constant_instance(&specs[c], depth),
                SuiteKind::Core => random_instance(cell.case, &specs[c], depth, seed),
            };
            let rep = inst
                .and_then(|i| evaluate_spec(cell.case, &specs[c], &digests[c], &i))
                .and_then(|r| match cfg.kind {
                    SuiteKind::Trivial => {
                        let want = constant_ratio(&specs[c]);
                        if (r.ratio - want).abs() <= CONSTANT_TOL * want {
                            Ok(r)
                        } else {
                            Err(Error::Degenerate(format!(
                                "ratio {} on the constant instance differs from the exact value {want}",
                                r.ratio
                            )))
                        }
                    }
                    SuiteKind::Core => Ok(r),
                });
            (c, seed, depth, rep)
        })
        .collect();

    let mut reports = Vec::with_capacity(results.len());
    let mut failures = Vec::new();
    let mut cells: Vec<CellSummary> = cfg
        .cells
        .iter()
        .zip(&specs)
        .zip(&digests)
        .map(|((cell, spec), digest)| CellSummary {
            cell: cell.key(),
            case: cell.case,
            probe: cell.case.is_probe(),
            m: spec.m(),
            params_digest: digest.clone(),
            trials: 0,
            max_ratio: 0.0,
            argmax_seed: 0,
            argmax_depth: cfg.depths[0],
            per_depth: BTreeMap::new(),
            non_finite: 0,
            failures: 0,
        })
        .collect();
    for (c, seed, depth, rep) in results {
        let sum = &mut cells[c];
        sum.trials += 1;
        match rep {
            Ok(rep) => {
                if !rep.is_finite() {
                    sum.non_finite += 1;
                } else {
                    let entry = sum.per_depth.entry(depth).or_insert(0.0);
                    *entry = entry.max(rep.ratio);
                    if rep.ratio > sum.max_ratio {
                        sum.max_ratio = rep.ratio;
                        sum.argmax_seed = seed;
                        sum.argmax_depth = depth;
                    }
                }
                reports.push((cfg.cells[c].key(), rep));
            }
            Err(e) => {
                sum.failures += 1;
                failures.push(TrialFailure {
                    cell: cfg.cells[c].key(),
                    seed,
                    depth,
                    message: e.to_string(),
                });
            }
        }
    }
    let stability = depth_stability(&cells);
    Ok(SuiteOutcome {
        seed: cfg.seed,
        depths: cfg.depths.clone(),
        trials,
        reports,
        failures,
        cells,
        stability,
        ledger: Vec::new(),
    })
}

/// `maxratio(2k) ≤ 1.5 · maxratio(k)` for every `k` with `2k` also run.
pub fn depth_stability(cells: &[CellSummary]) -> Vec<StabilityCheck> {
    let mut out = Vec::new();
    for c in cells {
        for (&k, &low) in &c.per_depth {
            if let Some(&high) = c.per_depth.get(&(2 * k)) {
                out.push(StabilityCheck {
                    cell: c.cell.clone(),
                    depth: k,
                    doubled: 2 * k,
                    max_ratio: low,
                    doubled_max_ratio: high,
                    ok: high <= DEPTH_GROWTH * low,
                });
            }
        }
    }
    out
}

/// Frozen per-cell maximum ratios from a calibration run.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Ledger {
    pub seed: u64,
    pub trials: usize,
    pub depths: Vec<u32>,
    pub entries: BTreeMap<String, LedgerEntry>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LedgerEntry {
    pub params_digest: String,
    pub max_ratio: f64,
    pub per_depth: BTreeMap<u32, f64>,
}

impl Ledger {
    pub fn from_outcome(out: &SuiteOutcome) -> Self {
        let entries = out
            .cells
            .iter()
            .map(|c| {
                (
                    c.cell.clone(),
                    LedgerEntry {
                        params_digest: c.params_digest.clone(),
                        max_ratio: c.max_ratio,
                        per_depth: c.per_depth.clone(),
                    },
                )
            })
            .collect();
        Ledger {
            seed: out.seed,
            trials: out.trials,
            depths: out.depths.clone(),
            entries,
        }
    }

    pub fn from_json(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| Error::Parse(format!("ledger: {e}")))
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("ledger serializes")
    }

    /// The ledger shipped with the crate.
    pub fn frozen() -> Result<Self> {
        Ledger::from_json(include_str!("../data/ledger.json"))
    }

    /// Compares the non-probe cells of `out` against the ledger. Cells whose
    /// key or parameter digest is unknown are reported with `recorded: None`
    /// and fail.
    pub fn check(&self, out: &SuiteOutcome) -> Vec<LedgerCheck> {
        out.cells
            .iter()
            .filter(|c| !c.probe)
            .map(|c| {
                let recorded = self
                    .entries
                    .get(&c.cell)
                    .filter(|e| e.params_digest == c.params_digest)
                    .map(|e| e.max_ratio);
                let ok = recorded.is_some_and(|r| c.max_ratio <= r * (1.0 + LEDGER_TOLERANCE));
                LedgerCheck {
                    cell: c.cell.clone(),
                    observed: c.max_ratio,
                    recorded,
                    ok,
                }
            })
            .collect()
    }
}

/// Verdict over the gated (non-probe) cells.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Verdict {
    Pass,
    /// Non-finite ratio, evaluation error or depth instability.
    CheckFailed,
    LedgerRegression,
}

impl SuiteOutcome {
    pub fn verdict(&self) -> Verdict {
        let gated = |cell: &str| self.cells.iter().any(|c| c.cell == cell && !c.probe);
        let broken = self
            .cells
            .iter()
            .any(|c| !c.probe && (c.non_finite > 0 || c.failures > 0))
            || self.stability.iter().any(|s| !s.ok && gated(&s.cell));
        if broken {
            Verdict::CheckFailed
        } else if self.ledger.iter().any(|l| !l.ok) {
            Verdict::LedgerRegression
        } else {
            Verdict::Pass
        }
    }

    /// Columns: case, seed, depth, m, params-digest, lhs, rhs, ratio.
    pub fn write_csv<W: Write>(&self, w: W) -> Result<()> {
        let io = |e: csv::Error| Error::Parse(format!("csv: {e}"));
        let mut wr = csv::Writer::from_writer(w);
        wr.write_record([
            "case",
            "seed",
            "depth",
            "m",
            "params-digest",
            "lhs",
            "rhs",
            "ratio",
        ])
        .map_err(io)?;
        for (_, r) in &self.reports {
            wr.write_record([
                r.case.to_string(),
                r.seed.to_string(),
                r.depth.to_string(),
                r.m.to_string(),
                r.params_digest.clone(),
                format!("{:.16e}", r.lhs),
                format!("{:.16e}", r.rhs),
                format!("{:.16e}", r.ratio),
            ])
            .map_err(io)?;
        }
        wr.flush().map_err(|e| Error::Parse(format!("csv: {e}")))?;
        Ok(())
    }

    pub fn summary_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("summary serializes")
    }
}
