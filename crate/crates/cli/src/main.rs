use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use diagfit::dynamics::{compare_approximations, run_dynamic, ApproxMethod, CompareOptions, DynamicConfig, IluMethod};
use diagfit::fitting::FitKind;
use diagfit::matrix::{gen_heatflow, gen_poisson2d, read_matrix_market, DenseInverse, DEFAULT_ORACLE_CAP};
use diagfit::report::{fmt_sig, write_compare_csv, write_run_artifacts};
use diagfit::sampling::{SplitRule, DEFAULT_REL_THRESHOLD};
use diagfit::solver::SolverOptions;
use diagfit::{Error, SparseMatrix};

#[derive(Parser)]
#[command(
    name = "diagfit",
    version,
    about = "Trace of a sparse matrix inverse by fitting its diagonal"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the dynamic fitting loop and write trajectory.csv, summary.txt and plots.gp.
    Run(RunArgs),
    /// Compare fitted and Monte Carlo errors per approximation source (needs the dense inverse).
    Compare(CompareArgs),
}

#[derive(Args)]
#[group(required = true, multiple = false)]
struct MatrixSource {
    /// Matrix Market file.
    #[arg(long)]
    matrix: Option<PathBuf>,
    /// Generated matrix: poisson2d:N or heatflow:N[:ALPHA].
    #[arg(long = "gen", value_name = "SPEC")]
    generator: Option<String>,
}

#[derive(Clone, Copy, ValueEnum)]
enum ApproxArg {
    Ilu,
    Svd,
    Bounds,
}

#[derive(Clone, Copy, ValueEnum)]
enum IluArg {
    /// ILU(0).
    Zero,
    /// Threshold ILU with pivoting.
    Tp,
}

#[derive(Clone, Copy, ValueEnum)]
enum ModelArg {
    Linear,
    Pchip,
}

#[derive(Clone, Copy, ValueEnum)]
enum SplitArg {
    MaxArea,
    MinArea,
}

#[derive(Args)]
struct RunArgs {
    #[command(flatten)]
    source: MatrixSource,
    #[arg(long, value_enum, default_value = "ilu")]
    approx: ApproxArg,
    #[arg(long, value_enum, default_value = "tp")]
    ilu: IluArg,
    #[arg(long, default_value_t = 1e-2)]
    droptol: f64,
    #[arg(long, value_enum, default_value = "pchip")]
    model: ModelArg,
    #[arg(long, default_value_t = 20)]
    max_pts: usize,
    /// Size of the holdout probe set.
    #[arg(long, default_value_t = 10)]
    s_mc: usize,
    /// Relative residual tolerance of the column solves.
    #[arg(long, default_value_t = 1e-10)]
    tol: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Compute the dense inverse and report actual errors.
    #[arg(long)]
    oracle: bool,
    /// Stop preferring Monte Carlo once the estimated relative error is below this.
    #[arg(long)]
    target_rel_error: Option<f64>,
    #[arg(long, default_value_t = DEFAULT_REL_THRESHOLD)]
    rel_threshold: f64,
    #[arg(long, value_enum, default_value = "max-area")]
    split_rule: SplitArg,
    #[arg(long, env = "DIAGFIT_OUT_DIR", default_value = "diagfit-out")]
    out: PathBuf,
}

#[derive(Args)]
struct CompareArgs {
    #[command(flatten)]
    source: MatrixSource,
    /// Drop tolerance of the threshold ILU row.
    #[arg(long, default_value_t = 1e-2)]
    droptol: f64,
    #[arg(long, default_value_t = 20)]
    fit_points: usize,
    /// Sample budget for the Hutchinson columns.
    #[arg(long, default_value_t = 20)]
    samples: usize,
    /// Seed of the singular vector start block.
    #[arg(long, default_value_t = 0x5eed)]
    seed: u64,
    #[arg(long, env = "DIAGFIT_OUT_DIR", default_value = "diagfit-out")]
    out: PathBuf,
}

fn load(src: &MatrixSource) -> Result<SparseMatrix, Error> {
    if let Some(path) = &src.matrix {
        return read_matrix_market(path);
    }
    let spec = src.generator.as_deref().expect("clap enforces one source");
    let parts: Vec<&str> = spec.split(':').collect();
    let bad = || {
        Error::InvalidArgument(format!(
            "bad generator {spec:?}; expected poisson2d:N or heatflow:N[:ALPHA]"
        ))
    };
    let side: usize = parts.get(1).ok_or_else(bad)?.parse().map_err(|_| bad())?;
    let a = match (parts[0], parts.len()) {
        ("poisson2d", 2) => gen_poisson2d(side)?,
        ("heatflow", 2) => gen_heatflow(side, 0.25)?,
        ("heatflow", 3) => gen_heatflow(side, parts[2].parse().map_err(|_| bad())?)?,
        _ => return Err(bad()),
    };
    Ok(a)
}

fn source_label(src: &MatrixSource) -> (&'static str, String) {
    match (&src.matrix, &src.generator) {
        (Some(p), _) => ("matrix", p.display().to_string()),
        (_, Some(g)) => ("gen", g.clone()),
        _ => unreachable!("clap enforces one source"),
    }
}

fn cmd_run(args: &RunArgs) -> Result<ExitCode, Error> {
    for (name, v) in [
        ("droptol", args.droptol),
        ("tol", args.tol),
        ("rel-threshold", args.rel_threshold),
    ] {
        if !(v.is_finite() && v >= 0.0) {
            return Err(Error::InvalidArgument(format!(
                "--{name} must be a nonnegative number, got {v}"
            )));
        }
    }
    let approx = match (args.approx, args.ilu) {
        (ApproxArg::Ilu, IluArg::Zero) => ApproxMethod::Ilu(IluMethod::Zero),
        (ApproxArg::Ilu, IluArg::Tp) => ApproxMethod::Ilu(IluMethod::Threshold(args.droptol)),
        (ApproxArg::Svd, _) => ApproxMethod::Svd,
        (ApproxArg::Bounds, _) => ApproxMethod::Bounds,
    };
    let cfg = DynamicConfig {
        approx,
        model: match args.model {
            ModelArg::Linear => FitKind::Linear,
            ModelArg::Pchip => FitKind::Pchip,
        },
        max_pts: args.max_pts,
        s_mc: args.s_mc,
        solver: SolverOptions {
            tol: args.tol,
            ..SolverOptions::default()
        },
        seed: args.seed,
        rel_threshold: args.rel_threshold,
        split_rule: match args.split_rule {
            SplitArg::MaxArea => SplitRule::MaxArea,
            SplitArg::MinArea => SplitRule::MinArea,
        },
        target_rel_error: args.target_rel_error,
        ..DynamicConfig::default()
    };
    let (key, value) = source_label(&args.source);
    let echo: Vec<(String, String)> = [
        (key, value),
        ("approx", cfg.approx.to_string()),
        ("model", cfg.model.to_string()),
        ("max_pts", args.max_pts.to_string()),
        ("s_mc", args.s_mc.to_string()),
        ("tol", format!("{:e}", args.tol)),
        ("rel_threshold", format!("{:e}", args.rel_threshold)),
        (
            "split_rule",
            args.split_rule
                .to_possible_value()
                .expect("no skipped variants")
                .get_name()
                .to_string(),
        ),
        ("seed", args.seed.to_string()),
        ("oracle", args.oracle.to_string()),
        (
            "target_rel_error",
            args.target_rel_error.map_or("NA".into(), |t| format!("{t:e}")),
        ),
        ("out", args.out.display().to_string()),
    ]
    .into_iter()
    .map(|(k, v)| (k.to_string(), v))
    .collect();

    let a = load(&args.source)?;
    log::info!("matrix order {}, {} nonzeros", a.order(), a.nnz());
    let oracle = if args.oracle {
        Some(DenseInverse::compute(&a, DEFAULT_ORACLE_CAP)?.trace())
    } else {
        None
    };
    let traj = run_dynamic(&a, &cfg, oracle)?;
    write_run_artifacts(&args.out, &traj, &echo, oracle)?;

    if let Some(t) = traj.final_trace() {
        println!("trace estimate {}", fmt_sig(t));
    }
    if let Some(f) = traj.chosen_followup {
        println!("follow-up: {f}");
    }
    println!("wrote {}", args.out.display());
    if let Some(msg) = &traj.aborted {
        eprintln!("error: run aborted after {} steps: {msg}", traj.records.len());
        return Ok(ExitCode::from(2));
    }
    Ok(ExitCode::SUCCESS)
}

fn cmd_compare(args: &CompareArgs) -> Result<ExitCode, Error> {
    let a = load(&args.source)?;
    let methods = [
        ApproxMethod::Ilu(IluMethod::Zero),
        ApproxMethod::Ilu(IluMethod::Threshold(args.droptol)),
        ApproxMethod::Svd,
        ApproxMethod::Bounds,
    ];
    let mut opts = CompareOptions {
        fit_points: args.fit_points,
        samples: args.samples,
        ..CompareOptions::default()
    };
    opts.svd.seed = args.seed;
    let rows = compare_approximations(&a, &methods, &opts)?;
    let mut buf = Vec::new();
    write_compare_csv(&rows, &mut buf).expect("in-memory write");
    write_file(&args.out, "compare.csv", &buf)?;
    print!("{}", String::from_utf8_lossy(&buf));
    Ok(ExitCode::SUCCESS)
}

fn write_file(dir: &Path, name: &str, bytes: &[u8]) -> Result<(), Error> {
    fs::create_dir_all(dir).map_err(|source| Error::Io {
        path: dir.to_path_buf(),
        source,
    })?;
    let path = dir.join(name);
    fs::write(&path, bytes).map_err(|source| Error::Io { path, source })
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    let result = match &cli.command {
        Command::Run(args) => cmd_run(args),
        Command::Compare(args) => cmd_compare(args),
    };
    result.unwrap_or_else(|e| {
        eprintln!("error: {e}");
        ExitCode::FAILURE
    })
}
