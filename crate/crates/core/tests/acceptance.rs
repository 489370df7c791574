//! Acceptance suite: one PASS/FAIL line per criterion, nonzero exit on any
//! failure. Tolerances are pinned as constants below.

mod common;

use std::time::{Duration, Instant};

use common::close;
use dyadic_bounds::characteristics::{
    carleson_norm, fujii_wilson, lebesgue_norm, lorentz_norm, muckenhoupt, muckenhoupt_log,
    CharExponents,
};
use dyadic_bounds::checkers::{dependent_complete, evaluate, validate, CaseId};
use dyadic_bounds::operators::{
    multilinear_maximal, multilinear_maximal_log, seq_maximal, ExponentProfile,
};
use dyadic_bounds::search::{random_instance, sharpness_points, slope_fit};
use dyadic_bounds::sparse::{
    carleson_to_sparse, indicator_witness, sparse_form_b, sparse_operator_a, sparse_to_carleson,
};
use dyadic_bounds::stopping::strong_stopping;
use dyadic_bounds::suite::{core_cells, run_suite, Ledger, SuiteConfig, SuiteKind};
use dyadic_bounds::{CubeId, CubeSeq, Grid, LeafFn};
use rand::Rng;
use rand_chacha::ChaCha8Rng;

const IDENTITY_TOL: f64 = 1e-12;
const IDENTITY_BUDGET: Duration = Duration::from_secs(1);
const LOG_TOL: f64 = 1e-12;
const POWER_TOL: f64 = 1e-9;
const FLOOR_TOL: f64 = 1e-12;
const ALLOC_TOL: f64 = 1e-12;
const CARLESON_TOL: f64 = 1e-9;
const DOMINATION_TOL: f64 = 1e-12;
const CROSS_TOL: f64 = 1e-9;
const SUITE_DEPTHS: [u32; 5] = [4, 6, 8, 10, 12];
const SUITE_TRIALS: usize = 1000;
const SUITE_SEED: u64 = 7;
const SUITE_BUDGET: Duration = Duration::from_secs(600);
const SLOPE_MAX: f64 = 1.05;
const SHARPNESS_BUDGET: Duration = Duration::from_secs(120);

type Outcome = Result<String, String>;
type Criterion = (&'static str, fn() -> Outcome);

fn rng_for(criterion: u64, i: u64) -> ChaCha8Rng {
    common::rng(criterion << 32 | i)
}

fn ensure(ok: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if ok {
        Ok(())
    } else {
        Err(msg())
    }
}

fn ones(g: &Grid) -> LeafFn {
    LeafFn::constant(g.num_leaves(), 1.0).unwrap()
}

fn identity_suite() -> Outcome {
    let start = Instant::now();
    let mut checked = 0;
    for depth in 0..=10 {
        let g = Grid::uniform(depth).unwrap();
        let one = ones(&g);
        let root = CubeSeq::indicator(&g, [CubeId::ROOT]).unwrap();
        for m in 1..=3 {
            let ws = vec![one.clone(); m];
            let ce = CharExponents::new((1..=m).map(|i| i as f64 * 0.5).collect()).unwrap();
            let prof = ExponentProfile::with_r(vec![1.0; m]).unwrap();
            let vals = [
                ("muckenhoupt", muckenhoupt(&g, &ws, &ce).unwrap(), 1.0),
                ("fujii-wilson", fujii_wilson(&g, &ws, &ce).unwrap(), 1.0),
                ("carleson(root)", carleson_norm(&g, &root).unwrap(), 1.0),
                (
                    "carleson(all)",
                    carleson_norm(&g, &CubeSeq::constant(&g, 1.0).unwrap()).unwrap(),
                    depth as f64 + 1.0,
                ),
                ("form", sparse_form_b(&g, &root, &ws, &prof).unwrap(), 1.0),
                (
                    "lorentz(2,1)",
                    lorentz_norm(&g, &one, &one, 2.0, 1.0).unwrap(),
                    2.0,
                ),
                (
                    "lebesgue(3)",
                    lebesgue_norm(&g, &one, &one, 3.0).unwrap(),
                    1.0,
                ),
            ];
            for (name, got, want) in vals {
                ensure(close(got, want, IDENTITY_TOL), || {
                    format!("{name} at depth {depth}: {got} vs {want}")
                })?;
                checked += 1;
            }
            let leafwise = [
                ("maximal", multilinear_maximal(&g, &ws, &prof).unwrap()),
                ("sequence maximal", seq_maximal(&g, &root).unwrap()),
                (
                    "operator",
                    sparse_operator_a(&g, &root, &ws, &prof).unwrap(),
                ),
            ];
            for (name, f) in leafwise {
                for &v in f.values() {
                    ensure(close(v, 1.0, IDENTITY_TOL), || {
                        format!("{name} at depth {depth}: {v}")
                    })?;
                    checked += 1;
                }
            }
        }
    }
    let out = run_suite(&SuiteConfig {
        kind: SuiteKind::Trivial,
        cells: core_cells(),
        depths: vec![2, 4, 6, 8],
        trials: 1,
        seed: 0,
    })
    .unwrap();
    ensure(out.failures.is_empty(), || {
        format!("trivial suite: {:?}", out.failures[0])
    })?;
    let elapsed = start.elapsed();
    ensure(elapsed < IDENTITY_BUDGET, || format!("took {elapsed:?}"))?;
    Ok(format!(
        "{checked} values plus {} registry ratios exact, {:.3} s",
        out.reports.len(),
        elapsed.as_secs_f64()
    ))
}

fn random_weights(rng: &mut ChaCha8Rng, g: &Grid, m: usize) -> Vec<LeafFn> {
    (0..m).map(|_| common::weight(rng, g)).collect()
}

fn random_q(rng: &mut ChaCha8Rng, m: usize) -> Vec<f64> {
    (0..m).map(|_| rng.gen_range(0.1..2.0)).collect()
}

fn definition_identity() -> Outcome {
    let mut worst: f64 = 0.0;
    for i in 0..200 {
        let mut rng = rng_for(2, i);
        let depth = rng.gen_range(0..=10);
        let g = common::grid(&mut rng, depth);
        let m = rng.gen_range(1..=3);
        let ws = random_weights(&mut rng, &g, m);
        let q = random_q(&mut rng, m);
        let sup = muckenhoupt_log(&g, &ws, &CharExponents::new(q.clone()).unwrap()).unwrap();
        let prof = ExponentProfile::with_r(q).unwrap();
        let inf_norm = multilinear_maximal_log(&g, &ws, &prof)
            .unwrap()
            .into_iter()
            .fold(f64::NEG_INFINITY, f64::max);
        let d = (sup - inf_norm).abs();
        worst = worst.max(d);
        ensure(d <= LOG_TOL, || {
            format!("instance {i}: {sup} vs {inf_norm}")
        })?;
    }
    Ok(format!("200 instances, max log gap {worst:.1e}"))
}

fn power_law_and_scale() -> Outcome {
    for i in 0..200 {
        let mut rng = rng_for(3, i);
        let depth = rng.gen_range(0..=10);
        let g = common::grid(&mut rng, depth);
        let m = rng.gen_range(1..=3);
        let ws = random_weights(&mut rng, &g, m);
        let ce = CharExponents::new(random_q(&mut rng, m)).unwrap();
        let alpha = rng.gen_range(0.1..4.0);
        let lhs = muckenhoupt(&g, &ws, &ce).unwrap().powf(alpha);
        let rhs = muckenhoupt(&g, &ws, &ce.scaled(alpha).unwrap()).unwrap();
        ensure(close(lhs, rhs, POWER_TOL), || {
            format!("power law, instance {i}: {lhs} vs {rhs}")
        })?;
    }
    for i in 0..200 {
        let mut rng = rng_for(3, 1000 + i);
        let depth = rng.gen_range(0..=10);
        let g = common::grid(&mut rng, depth);
        let m = rng.gen_range(1..=3);
        let ws = random_weights(&mut rng, &g, m);
        let ce = CharExponents::new(random_q(&mut rng, m)).unwrap();
        let scaled: Vec<LeafFn> = ws
            .iter()
            .map(|w| w.scaled(rng.gen_range(-5.0f64..5.0).exp()))
            .collect();
        let a = fujii_wilson(&g, &ws, &ce).unwrap();
        let b = fujii_wilson(&g, &scaled, &ce).unwrap();
        ensure(close(a, b, POWER_TOL), || {
            format!("FW scale, instance {i}: {a} vs {b}")
        })?;
    }
    Ok("200 power-law and 200 scale-invariance instances".into())
}

fn floors() -> Outcome {
    let mut min_fw = f64::INFINITY;
    let mut min_muck = f64::INFINITY;
    for i in 0..500 {
        let mut rng = rng_for(4, i);
        let depth = rng.gen_range(0..=10);
        let g = common::grid(&mut rng, depth);
        let m = rng.gen_range(1..=3);
        let ws = random_weights(&mut rng, &g, m);
        let fw =
            fujii_wilson(&g, &ws, &CharExponents::new(random_q(&mut rng, m)).unwrap()).unwrap();
        min_fw = min_fw.min(fw);
        ensure(fw >= 1.0 - FLOOR_TOL, || format!("FW instance {i}: {fw}"))?;

        let mut ws = random_weights(&mut rng, &g, m);
        let q = random_q(&mut rng, m + 1);
        ws.push(dependent_complete(&ws, &q).unwrap());
        let mk = muckenhoupt(&g, &ws, &CharExponents::new(q).unwrap()).unwrap();
        min_muck = min_muck.min(mk);
        ensure(mk >= 1.0 - FLOOR_TOL, || {
            format!("dependent instance {i}: {mk}")
        })?;
    }
    Ok(format!(
        "500 + 500 instances, min FW {min_fw:.6}, min dependent Muckenhoupt {min_muck:.6}"
    ))
}

fn carleson_sparse() -> Outcome {
    for i in 0..200 {
        let mut rng = rng_for(5, i);
        let depth = rng.gen_range(0..=10);
        let g = common::grid(&mut rng, depth);
        let tau = common::carleson(&mut rng, &g);
        let lambda = carleson_norm(&g, &tau).unwrap();
        let alloc = carleson_to_sparse(&g, &tau, lambda).unwrap();
        for q in g.cubes() {
            let want = tau.get(q) * g.cube_measure(q).unwrap() / lambda;
            let got = alloc.get(q).map_or(0.0, |e| e.mass(&g));
            ensure(close(got, want, ALLOC_TOL), || {
                format!("instance {i}, {q:?}: {got} vs {want}")
            })?;
        }
        let stack = alloc.leaf_stack(&g).into_iter().fold(0.0, f64::max);
        ensure(stack <= 1.0 + ALLOC_TOL, || {
            format!("instance {i}: stack {stack}")
        })?;

        let support = CubeSeq::indicator(&g, g.cubes().filter(|&q| tau.get(q) > 0.0)).unwrap();
        let fam = indicator_witness(&g, &support).map_err(|e| format!("instance {i}: {e}"))?;
        let check = sparse_to_carleson(&g, &fam).map_err(|e| format!("instance {i}: {e}"))?;
        ensure(check.norm <= 1.0 / fam.eta() + CARLESON_TOL, || {
            format!("instance {i}: {} > {}", check.norm, 1.0 / fam.eta())
        })?;
    }
    Ok("200 Carleson sequences at Λ = ‖τ‖_Car".into())
}

fn sparse_domination() -> Outcome {
    let mut worst_car: f64 = 0.0;
    for i in 0..200 {
        let mut rng = rng_for(6, i);
        let depth = rng.gen_range(0..=10);
        let g = common::grid(&mut rng, depth);
        let m: usize = rng.gen_range(2..=3);
        let fs: Vec<LeafFn> = (1..m).map(|_| common::function(&mut rng, &g)).collect();
        let ws = random_weights(&mut rng, &g, m - 1);
        let r = (1..m).map(|_| rng.gen_range(0.3..2.0)).collect();
        let rho = (1..m).map(|_| rng.gen_range(0.0..0.5)).collect();
        let prof = ExponentProfile::new(r, rho).unwrap();
        let ss = strong_stopping(&g, &fs, &ws, &prof).unwrap();
        let products: Vec<LeafFn> = fs.iter().zip(&ws).map(|(f, w)| f.product(w)).collect();
        let max = multilinear_maximal(&g, &products, &prof).unwrap();
        for (k, (v, d)) in max.values().iter().zip(ss.dominating_sum(&g)).enumerate() {
            let bound = ss.factor() * d;
            ensure(*v <= bound * (1.0 + DOMINATION_TOL), || {
                format!("instance {i}, leaf {k}: {v} > {bound}")
            })?;
        }
        let car = sparse_to_carleson(&g, &ss.family)
            .map_err(|e| format!("instance {i}: {e}"))?
            .norm;
        worst_car = worst_car.max(car);
        ensure(car <= 2.0 + CARLESON_TOL, || {
            format!("instance {i}: Carleson {car}")
        })?;
    }
    Ok(format!(
        "200 instances, max family Carleson norm {worst_car:.4}"
    ))
}

fn registry() -> Outcome {
    let start = Instant::now();
    let cells = core_cells();
    for case in CaseId::REGISTRY {
        let n = cells.iter().filter(|c| c.case == case).count();
        ensure(n >= 2, || format!("{case} has {n} cells"))?;
    }
    let out = run_suite(&SuiteConfig {
        kind: SuiteKind::Core,
        cells,
        depths: SUITE_DEPTHS.to_vec(),
        trials: SUITE_TRIALS,
        seed: SUITE_SEED,
    })
    .unwrap();
    let elapsed = start.elapsed();
    let registered = |cell: &str| !out.cells.iter().any(|c| c.cell == cell && c.probe);
    let failures: Vec<_> = out
        .failures
        .iter()
        .filter(|f| registered(&f.cell))
        .collect();
    ensure(failures.is_empty(), || {
        format!(
            "(a) {} failed trials, first {:?}",
            failures.len(),
            failures[0]
        )
    })?;
    let non_finite: usize = out
        .cells
        .iter()
        .filter(|c| !c.probe)
        .map(|c| c.non_finite)
        .sum();
    ensure(non_finite == 0, || {
        format!("(a) {non_finite} non-finite ratios")
    })?;
    let unstable: Vec<_> = out
        .stability
        .iter()
        .filter(|s| registered(&s.cell) && !s.ok)
        .collect();
    ensure(unstable.is_empty(), || {
        let s = unstable[0];
        format!(
            "(b) {} depth {}→{}: {} → {}",
            s.cell, s.depth, s.doubled, s.max_ratio, s.doubled_max_ratio
        )
    })?;
    let ledger = Ledger::frozen().map_err(|e| e.to_string())?;
    let regressions: Vec<_> = ledger.check(&out).into_iter().filter(|c| !c.ok).collect();
    ensure(regressions.is_empty(), || {
        let c = &regressions[0];
        format!(
            "(c) {} observed {} recorded {:?}",
            c.cell, c.observed, c.recorded
        )
    })?;
    ensure(elapsed < SUITE_BUDGET, || format!("took {elapsed:?}"))?;
    let worst = out
        .stability
        .iter()
        .filter(|s| registered(&s.cell))
        .map(|s| s.doubled_max_ratio / s.max_ratio)
        .fold(0.0, f64::max);
    Ok(format!(
        "{} registry cells, {} trials per depth, worst depth growth {worst:.3}, {:.1} s",
        out.cells.iter().filter(|c| !c.probe).count(),
        SUITE_TRIALS,
        elapsed.as_secs_f64()
    ))
}

fn cross_checks() -> Outcome {
    let max_cells: Vec<_> = core_cells()
        .into_iter()
        .filter(|c| c.case == CaseId::MaxWeak)
        .collect();
    for (n, cell) in max_cells.iter().enumerate() {
        let spec = validate(CaseId::MaxStrong, &cell.params).unwrap();
        for i in 0..50 {
            let inst = random_instance(
                CaseId::MaxStrong,
                &spec,
                2 + (i % 8) as u32,
                (n as u64) << 32 | i,
            )
            .unwrap();
            let weak = evaluate(CaseId::MaxWeak, &inst, &cell.params).unwrap().lhs;
            let strong = evaluate(CaseId::MaxStrong, &inst, &cell.params)
                .unwrap()
                .lhs;
            ensure(weak <= strong * (1.0 + CROSS_TOL), || {
                format!("{}: weak {weak} > strong {strong}", cell.label)
            })?;
        }
    }
    for i in 0..200 {
        let mut rng = rng_for(8, i);
        let depth = rng.gen_range(0..=10);
        let g = common::grid(&mut rng, depth);
        let tau = common::carleson(&mut rng, &g);
        let m = rng.gen_range(1..=3);
        let fs: Vec<LeafFn> = (0..m).map(|_| common::function(&mut rng, &g)).collect();
        let r = (0..m).map(|_| rng.gen_range(0.3..2.0)).collect();
        let rho = (0..m).map(|_| rng.gen_range(0.0..0.5)).collect();
        let prof = ExponentProfile::new(r, rho).unwrap();
        let a = sparse_operator_a(&g, &tau, &fs, &prof).unwrap();
        let integral: f64 = a
            .values()
            .iter()
            .zip(g.leaf_masses())
            .map(|(v, m)| v * m)
            .sum();
        let b = sparse_form_b(&g, &tau, &fs, &prof).unwrap();
        ensure(close(b, integral, CROSS_TOL), || {
            format!("Fubini instance {i}: {b} vs {integral}")
        })?;

        let (f, w) = (common::function(&mut rng, &g), common::weight(&mut rng, &g));
        let p = rng.gen_range(0.3..5.0);
        let (lz, lb) = (
            lorentz_norm(&g, &f, &w, p, p).unwrap(),
            lebesgue_norm(&g, &f, &w, p).unwrap(),
        );
        ensure(close(lz, lb, CROSS_TOL), || {
            format!("Lorentz instance {i}: {lz} vs {lb}")
        })?;
    }
    let mut audited = 0;
    for (n, cell) in core_cells().iter().enumerate() {
        let spec = validate(cell.case, &cell.params).unwrap();
        for i in 0..20u64 {
            let inst = random_instance(cell.case, &spec, 2 + (i % 7) as u32, (n as u64) << 32 | i)
                .unwrap();
            let base = evaluate(cell.case, &inst, &cell.params).unwrap();
            if !base.is_finite() {
                continue;
            }
            for c in [0.37, 5.2] {
                let scaled =
                    evaluate(cell.case, &inst.scaled_inputs(&spec, c), &cell.params).unwrap();
                ensure(close(base.ratio, scaled.ratio, CROSS_TOL), || {
                    format!(
                        "homogeneity {} c = {c}: {} vs {}",
                        cell.key(),
                        base.ratio,
                        scaled.ratio
                    )
                })?;
                audited += 1;
            }
        }
    }
    Ok(format!(
        "weak ≤ strong, Fubini and L^{{p,p}} = L^p on 200 instances; {audited} homogeneity audits"
    ))
}

fn sharpness() -> Outcome {
    let start = Instant::now();
    let exponents: Vec<f64> = (1..=9).map(|k| k as f64 / 10.0).collect();
    let points = sharpness_points(10, "power", &exponents).map_err(|e| e.to_string())?;
    let fit = slope_fit(&points).map_err(|e| e.to_string())?;
    let elapsed = start.elapsed();
    ensure(fit.slope <= SLOPE_MAX, || {
        format!("slope {} (r² {})", fit.slope, fit.r2)
    })?;
    ensure(elapsed < SHARPNESS_BUDGET, || format!("took {elapsed:?}"))?;
    Ok(format!(
        "slope {:.4}, r² {:.4}, {} points, {:.2} s",
        fit.slope,
        fit.r2,
        fit.n,
        elapsed.as_secs_f64()
    ))
}

fn reproducibility() -> Outcome {
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(1)
        .build()
        .unwrap();
    let cfg = SuiteConfig {
        kind: SuiteKind::Core,
        cells: core_cells(),
        depths: vec![4, 6, 8],
        trials: 25,
        seed: SUITE_SEED,
    };
    let csv = || {
        let mut buf = Vec::new();
        run_suite(&cfg).unwrap().write_csv(&mut buf).unwrap();
        buf
    };
    let (a, b) = pool.install(|| (csv(), csv()));
    ensure(a == b, || "sequential reruns differ".into())?;
    let parallel = csv();
    ensure(a == parallel, || {
        "parallel run differs from sequential".into()
    })?;
    Ok(format!(
        "{} bytes identical across two sequential runs and one parallel run",
        a.len()
    ))
}

fn main() {
    let criteria: [Criterion; 10] = [
        ("identity suite", identity_suite),
        ("definition identity", definition_identity),
        ("power law and FW scale invariance", power_law_and_scale),
        ("FW and dependent Muckenhoupt floors", floors),
        ("Carleson to sparse", carleson_sparse),
        ("sparse domination", sparse_domination),
        ("inequality registry", registry),
        ("cross-checks", cross_checks),
        ("sharpness probe", sharpness),
        ("reproducibility", reproducibility),
    ];
    let mut failed = 0;
    for (n, (name, run)) in criteria.iter().enumerate() {
        match run() {
            Ok(detail) => println!("PASS {:>2} {name}: {detail}", n + 1),
            Err(detail) => {
                failed += 1;
                println!("FAIL {:>2} {name}: {detail}", n + 1);
            }
        }
    }
    println!(
        "acceptance: {} passed, {failed} failed",
        criteria.len() - failed
    );
    if failed > 0 {
        std::process::exit(1);
    }
}
