use std::fmt::Display;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Deserialize;

use dyadic_bounds::characteristics::carleson_norm;
use dyadic_bounds::checkers::{evaluate, validate, CaseId, IneqParams, Instance};
use dyadic_bounds::search::{sharpness_points, slope_fit};
use dyadic_bounds::sparse::carleson_to_sparse;
use dyadic_bounds::suite::{core_cells, run_suite, Cell, Ledger, SuiteConfig, SuiteKind, Verdict};
use dyadic_bounds::Error;

const OUT_ENV: &str = "DYADIC_BOUNDS_OUT";
const DEFAULT_OUT: &str = "dyadic-bounds-out";
const DEFAULT_DEPTHS: &str = "4,6,8,10,12";
const DEFAULT_TRIALS: usize = 300;

const EXIT_CHECK: u8 = 1;
const EXIT_VALIDATION: u8 = 2;
const EXIT_LEDGER: u8 = 3;
const EXIT_IO: u8 = 4;

#[derive(Debug)]
struct Failure {
    code: u8,
    message: String,
}

impl Failure {
    fn validation(msg: impl Display) -> Self {
        Failure {
            code: EXIT_VALIDATION,
            message: msg.to_string(),
        }
    }

    fn io(path: &Path, err: impl Display) -> Self {
        Failure {
            code: EXIT_IO,
            message: format!("{}: {err}", path.display()),
        }
    }
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure::validation(e)
    }
}

type CliResult<T> = std::result::Result<T, Failure>;

#[derive(Parser)]
#[command(
    name = "dyadic-bounds",
    version,
    about = "Weighted dyadic inequality suites"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run a suite and compare it against the constant ledger.
    Check(CheckArgs),
    /// Turn a Carleson sequence into a sparse allocation.
    Convert(ConvertArgs),
    /// Fit log lhs against log rhs over a weight-family sweep.
    Sharpness(SharpnessArgs),
    /// Per-depth maximum ratios, optionally written out as a ledger.
    Sweep(SweepArgs),
    /// Evaluate one case on one instance file.
    Evaluate(EvaluateArgs),
}

#[derive(Clone, Copy, ValueEnum)]
enum SuiteArg {
    Trivial,
    Core,
}

#[derive(Args)]
struct SuiteArgs {
    /// JSON run configuration; flags override its fields.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long, value_enum)]
    suite: Option<SuiteArg>,
    /// Master seed; required for randomized suites.
    #[arg(long)]
    seed: Option<u64>,
    /// Depths as an inclusive range `4..8` or a list `4,6,8`.
    #[arg(long)]
    depth: Option<String>,
    #[arg(long)]
    trials: Option<usize>,
    /// Comma-separated case names.
    #[arg(long)]
    cases: Option<String>,
    /// Output directory (default: $DYADIC_BOUNDS_OUT or ./dyadic-bounds-out).
    #[arg(long)]
    out: Option<PathBuf>,
    /// Worker threads; 1 runs sequentially.
    #[arg(long)]
    jobs: Option<usize>,
}

#[derive(Args)]
struct CheckArgs {
    #[command(flatten)]
    suite: SuiteArgs,
    /// Ledger file to compare against instead of the built-in one.
    #[arg(long)]
    ledger: Option<PathBuf>,
    /// Skip the ledger comparison.
    #[arg(long, conflicts_with = "ledger")]
    no_ledger: bool,
}

#[derive(Args)]
struct SweepArgs {
    #[command(flatten)]
    suite: SuiteArgs,
    /// Write the observed maxima as a ledger file.
    #[arg(long)]
    write_ledger: Option<PathBuf>,
}

#[derive(Args)]
struct ConvertArgs {
    /// Instance JSON providing the depth, leaf masses and `tau`.
    #[arg(long)]
    input: PathBuf,
    /// Carleson constant Λ (default: the Carleson norm of `tau`).
    #[arg(long)]
    lambda: Option<f64>,
    /// Output file (default: standard output).
    #[arg(long)]
    output: Option<PathBuf>,
}

#[derive(Args)]
struct SharpnessArgs {
    #[arg(long, default_value_t = 10)]
    depth: u32,
    /// `power`, `cascade` or `constant`.
    #[arg(long, default_value = "power")]
    family: String,
    /// Comma-separated family parameters.
    #[arg(long, default_value = "0.1,0.2,0.3,0.4,0.5,0.6,0.7,0.8,0.9")]
    exponents: String,
    /// Slack allowed above slope 1.
    #[arg(long, default_value_t = 0.05)]
    tol: f64,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct EvaluateArgs {
    #[arg(long)]
    case: String,
    /// Parameters as inline JSON or `@path`.
    #[arg(long)]
    params: String,
    #[arg(long)]
    input: PathBuf,
}

/// Run configuration file.
#[derive(Default, Deserialize)]
#[serde(default, deny_unknown_fields)]
struct RunConfig {
    suite: Option<SuiteKind>,
    seed: Option<u64>,
    depths: Option<Vec<u32>>,
    trials: Option<usize>,
    cases: Option<Vec<CaseId>>,
    cells: Option<Vec<Cell>>,
    out: Option<PathBuf>,
}

fn parse_depths(s: &str) -> CliResult<Vec<u32>> {
    let bad = || Failure::validation(format!("depth spec {s:?} must look like 4..8 or 4,6,8"));
    let depths: Vec<u32> = if let Some((a, b)) = s.split_once("..") {
        let a: u32 = a.trim().parse().map_err(|_| bad())?;
        let b: u32 = b.trim().parse().map_err(|_| bad())?;
        if a > b {
            return Err(bad());
        }
        (a..=b).collect()
    } else {
        s.split(',')
            .map(|d| d.trim().parse().map_err(|_| bad()))
            .collect::<CliResult<_>>()?
    };
    if depths.is_empty() {
        return Err(bad());
    }
    Ok(depths)
}

fn parse_cases(s: &str) -> CliResult<Vec<CaseId>> {
    s.split(',')
        .map(|c| c.parse::<CaseId>().map_err(Failure::from))
        .collect()
}

fn parse_floats(s: &str) -> CliResult<Vec<f64>> {
    s.split(',')
        .map(|x| {
            x.trim()
                .parse()
                .map_err(|_| Failure::validation(format!("{x:?} is not a number")))
        })
        .collect()
}

fn read(path: &Path) -> CliResult<String> {
    fs::read_to_string(path).map_err(|e| Failure::io(path, e))
}

fn write(path: &Path, text: &str) -> CliResult<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(|e| Failure::io(dir, e))?;
    }
    fs::write(path, text).map_err(|e| Failure::io(path, e))
}

fn out_dir(flag: Option<PathBuf>, config: Option<PathBuf>) -> PathBuf {
    flag.or(config)
        .or_else(|| std::env::var_os(OUT_ENV).map(PathBuf::from))
        .unwrap_or_else(|| PathBuf::from(DEFAULT_OUT))
}

fn set_jobs(jobs: Option<usize>) -> CliResult<()> {
    if let Some(n) = jobs {
        if n == 0 {
            return Err(Failure::validation("--jobs must be at least 1"));
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| Failure::validation(format!("thread pool: {e}")))?;
    }
    Ok(())
}

/// Merges the config file and flags into a validated suite configuration.
fn suite_config(args: SuiteArgs, default_kind: SuiteKind) -> CliResult<(SuiteConfig, PathBuf)> {
    let file: RunConfig = match &args.config {
        Some(path) => serde_json::from_str(&read(path)?)
            .map_err(|e| Failure::validation(format!("{}: {e}", path.display())))?,
        None => RunConfig::default(),
    };
    set_jobs(args.jobs)?;
    let kind = match args.suite {
        Some(SuiteArg::Trivial) => SuiteKind::Trivial,
        Some(SuiteArg::Core) => SuiteKind::Core,
        None => file.suite.unwrap_or(default_kind),
    };
    let seed = args.seed.or(file.seed);
    if kind == SuiteKind::Core && seed.is_none() {
        return Err(Failure::validation(
            "--seed is required for randomized suites",
        ));
    }
    let depths = match (&args.depth, file.depths) {
        (Some(s), _) => parse_depths(s)?,
        (None, Some(d)) if !d.is_empty() => d,
        (None, _) => match kind {
            SuiteKind::Trivial => vec![2, 4, 6],
            SuiteKind::Core => parse_depths(DEFAULT_DEPTHS)?,
        },
    };
    let cells = file.cells.unwrap_or_else(core_cells);
    for c in &cells {
        validate(c.case, &c.params)
            .map_err(|e| Failure::validation(format!("cell {}: {e}", c.key())))?;
    }
    let mut cfg = SuiteConfig {
        kind,
        cells,
        depths,
        trials: args.trials.or(file.trials).unwrap_or(DEFAULT_TRIALS),
        seed: seed.unwrap_or(0),
    };
    let cases = match &args.cases {
        Some(s) => Some(parse_cases(s)?),
        None => file.cases,
    };
    if let Some(cases) = cases {
        cfg.restrict(&cases);
    }
    if cfg.cells.is_empty() {
        return Err(Failure::validation("no exponent cells selected"));
    }
    Ok((cfg, out_dir(args.out, file.out)))
}

fn cmd_check(args: CheckArgs) -> CliResult<u8> {
    let (cfg, out) = suite_config(args.suite, SuiteKind::Trivial)?;
    let mut outcome = run_suite(&cfg)?;
    if cfg.kind == SuiteKind::Core && !args.no_ledger {
        let ledger = match &args.ledger {
            Some(path) => Ledger::from_json(&read(path)?)?,
            None => Ledger::frozen()?,
        };
        outcome.ledger = ledger.check(&outcome);
    }
    let mut csv = Vec::new();
    outcome.write_csv(&mut csv)?;
    write(&out.join("check.csv"), &String::from_utf8_lossy(&csv))?;
    write(&out.join("summary.json"), &outcome.summary_json())?;

    for c in &outcome.cells {
        let tag = if c.probe { " (probe)" } else { "" };
        println!(
            "{:<40} max ratio {:>12.6e} over {} trials{tag}",
            c.cell, c.max_ratio, c.trials
        );
    }
    for f in &outcome.failures {
        eprintln!(
            "failure: {} depth {} seed {}: {}",
            f.cell, f.depth, f.seed, f.message
        );
    }
    for s in outcome.stability.iter().filter(|s| !s.ok) {
        eprintln!(
            "depth instability: {} max ratio {:.6e} at depth {} vs {:.6e} at depth {}",
            s.cell, s.doubled_max_ratio, s.doubled, s.max_ratio, s.depth
        );
    }
    for l in outcome.ledger.iter().filter(|l| !l.ok) {
        match l.recorded {
            Some(r) => eprintln!(
                "ledger regression: {} observed {:.6e} > recorded {:.6e}",
                l.cell, l.observed, r
            ),
            None => eprintln!("ledger regression: {} has no ledger entry", l.cell),
        }
    }
    Ok(match outcome.verdict() {
        Verdict::Pass => 0,
        Verdict::CheckFailed => EXIT_CHECK,
        Verdict::LedgerRegression => EXIT_LEDGER,
    })
}

fn cmd_sweep(args: SweepArgs) -> CliResult<u8> {
    let (mut cfg, out) = suite_config(args.suite, SuiteKind::Core)?;
    cfg.kind = SuiteKind::Core;
    let outcome = run_suite(&cfg)?;
    let mut text = String::from("cell,depth,max_ratio\n");
    for c in &outcome.cells {
        for (d, r) in &c.per_depth {
            text.push_str(&format!("{},{d},{r:.16e}\n", c.cell));
        }
    }
    write(&out.join("sweep.csv"), &text)?;
    if let Some(path) = &args.write_ledger {
        write(path, &(Ledger::from_outcome(&outcome).to_json() + "\n"))?;
    }
    print!("{text}");
    for f in &outcome.failures {
        eprintln!(
            "failure: {} depth {} seed {}: {}",
            f.cell, f.depth, f.seed, f.message
        );
    }
    Ok(if outcome.verdict() == Verdict::CheckFailed {
        EXIT_CHECK
    } else {
        0
    })
}

fn cmd_convert(args: ConvertArgs) -> CliResult<u8> {
    let inst = Instance::from_json(&read(&args.input)?)?;
    let lambda = match args.lambda {
        Some(l) => l,
        None => carleson_norm(&inst.grid, &inst.tau)?,
    };
    let alloc = if lambda == 0.0 {
        Default::default()
    } else {
        carleson_to_sparse(&inst.grid, &inst.tau, lambda)?
    };
    let text = alloc.to_json() + "\n";
    match &args.output {
        Some(path) => write(path, &text)?,
        None => print!("{text}"),
    }
    Ok(0)
}

fn cmd_sharpness(args: SharpnessArgs) -> CliResult<u8> {
    let exponents = parse_floats(&args.exponents)?;
    let points = sharpness_points(args.depth, &args.family, &exponents)?;
    let fit = slope_fit(&points).map_err(|e| {
        Failure::validation(format!("{e}; the sweep does not move the characteristic"))
    })?;
    let mut csv = String::from("param,log_rhs,log_lhs\n");
    for (a, (x, y)) in exponents.iter().zip(&points) {
        csv.push_str(&format!("{a},{x:.16e},{y:.16e}\n"));
    }
    let out = out_dir(args.out, None);
    write(&out.join("sharpness.csv"), &csv)?;
    let report = serde_json::json!({
        "family": args.family,
        "depth": args.depth,
        "points": points,
        "slope": fit.slope,
        "intercept": fit.intercept,
        "r2": fit.r2,
        "low_information": fit.low_information,
    });
    println!(
        "{}",
        serde_json::to_string_pretty(&report).expect("report serializes")
    );
    if fit.low_information {
        eprintln!("warning: fewer than three points; the fit is exact and low-information");
    }
    Ok(if fit.slope <= 1.0 + args.tol {
        0
    } else {
        EXIT_CHECK
    })
}

fn cmd_evaluate(args: EvaluateArgs) -> CliResult<u8> {
    let case: CaseId = args.case.parse()?;
    let raw = match args.params.strip_prefix('@') {
        Some(path) => read(Path::new(path))?,
        None => args.params.clone(),
    };
    let params: IneqParams =
        serde_json::from_str(&raw).map_err(|e| Failure::validation(format!("params: {e}")))?;
    let inst = Instance::from_json(&read(&args.input)?)?;
    let rep = evaluate(case, &inst, &params)?;
    println!(
        "{}",
        serde_json::to_string_pretty(&rep).expect("report serializes")
    );
    Ok(0)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Check(a) => cmd_check(a),
        Command::Convert(a) => cmd_convert(a),
        Command::Sharpness(a) => cmd_sharpness(a),
        Command::Sweep(a) => cmd_sweep(a),
        Command::Evaluate(a) => cmd_evaluate(a),
    };
    match result {
        Ok(code) => ExitCode::from(code),
        Err(f) => {
            eprintln!("error: {}", f.message);
            ExitCode::from(f.code)
        }
    }
}
