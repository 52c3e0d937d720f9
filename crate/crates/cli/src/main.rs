use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use serde_json::json;

use rspde_core::harness::io::{self, prefixed};
use rspde_core::harness::{
    default_moment_order, green_table, green_table_csv, run_convergence, run_property_suite,
    ExperimentConfig, ExperimentKind, PropertyConfig,
};
use rspde_core::noise::sample_noise;
use rspde_core::obstacle::{solve_lcp, LcpProblem, PsorOptions};
use rspde_core::registry::parse_barrier;
use rspde_core::spde::{
    check_smallness, picard_solve, CoefficientPair, PicardOptions, SmallnessParams,
};
use rspde_core::{Error, GridField, GridSpec, Result};

#[derive(Parser)]
#[command(
    name = "rspde",
    version,
    about = "Lattice solver for reflected elliptic SPDEs"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Discrete obstacle problem.
    #[command(subcommand)]
    Obstacle(ObstacleCommand),
    /// Discrete reflected SPDE.
    #[command(subcommand)]
    Spde(SpdeCommand),
    /// Grid-refinement study from a JSON config.
    Convergence {
        #[arg(value_enum)]
        kind: StudyKind,
        #[arg(long)]
        config: PathBuf,
        /// Output directory (overrides the config).
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Table of the four Green kernels on a lattice of evaluation points.
    GreenTable {
        #[arg(long)]
        dim: usize,
        #[arg(long)]
        n: usize,
        /// Points per axis are i/grid, 0 < i < grid.
        #[arg(long)]
        grid: usize,
        /// CSV destination; stdout when absent.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Randomized invariant suite.
    Properties {
        #[arg(long)]
        filter: Option<String>,
        /// Experiment config of kind property-suite.
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        seed: Option<u64>,
        /// Mutation check: flips the sign-lemma inequality.
        #[arg(long)]
        invert_sign_lemma: bool,
        /// JSON report destination; stdout when absent.
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

#[derive(Clone, Copy, clap::ValueEnum)]
enum StudyKind {
    Det,
    Stoch,
}

#[derive(Subcommand)]
enum ObstacleCommand {
    Solve(ObstacleArgs),
}

#[derive(Args)]
struct ObstacleArgs {
    #[arg(long)]
    dim: Option<usize>,
    #[arg(long)]
    n: Option<usize>,
    /// Registry barrier, e.g. `sine:2` or `sine-mode:3`.
    #[arg(long, conflicts_with = "barrier_file")]
    barrier: Option<String>,
    /// Barrier samples as a GridField CSV or JSON file.
    #[arg(long)]
    barrier_file: Option<PathBuf>,
    #[arg(long, default_value_t = 1e-10)]
    tol: f64,
    #[arg(long, default_value_t = 1.5)]
    omega: f64,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Subcommand)]
enum SpdeCommand {
    Solve(SpdeArgs),
}

#[derive(Args)]
struct SpdeArgs {
    #[arg(long)]
    dim: usize,
    #[arg(long)]
    n: usize,
    /// Drift, e.g. `linear:-0.1,-1`.
    #[arg(long)]
    f: String,
    /// Diffusion, e.g. `const:0.1`.
    #[arg(long)]
    sigma: String,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = 1e-8)]
    tol: f64,
    #[arg(long, default_value_t = 200)]
    max_iters: usize,
    /// Moment order for the smallness report (default depends on dim).
    #[arg(long)]
    p: Option<f64>,
    #[arg(long, default_value_t = 0.05)]
    eps: f64,
    #[arg(long, default_value_t = 1.0)]
    c_p: f64,
    #[arg(long, default_value_t = 1.0)]
    a: f64,
    #[arg(long, default_value_t = 1.0)]
    b_holder: f64,
    /// Also write the noise increments as little-endian f64.
    #[arg(long)]
    noise_dump: bool,
    #[arg(long)]
    out: PathBuf,
}

fn obstacle_solve(args: &ObstacleArgs) -> Result<bool> {
    let v = match (&args.barrier, &args.barrier_file) {
        (_, Some(path)) => {
            let v = io::read_grid_field(path)?;
            let s = v.spec();
            if args.dim.is_some_and(|d| d != s.dim()) || args.n.is_some_and(|n| n != s.n()) {
                return Err(Error::Config(format!(
                    "barrier file is on grid {s}, not the requested one"
                )));
            }
            v
        }
        (Some(name), None) => {
            let (Some(d), Some(n)) = (args.dim, args.n) else {
                return Err(Error::Config(
                    "--dim and --n are required with --barrier".into(),
                ));
            };
            let b = parse_barrier(name)?;
            GridField::from_fn(GridSpec::new(d, n)?, b.as_fn())
        }
        (None, None) => {
            return Err(Error::Config(
                "one of --barrier or --barrier-file is required".into(),
            ))
        }
    };
    let opts = PsorOptions {
        tol: args.tol,
        omega: args.omega,
        ..PsorOptions::default()
    };
    let sol = solve_lcp(&LcpProblem::new(v)?, &opts)?;
    let r = sol.residuals;
    let ok = r.max_violation <= 1e-8
        && r.max_negative_eta <= 1e-8
        && r.complementarity_gap <= 1e-8 * r.scale.max(1.0);
    io::write_grid_csv(&prefixed(&args.out, "_z.csv"), &sol.z)?;
    io::write_grid_csv(&prefixed(&args.out, "_eta.csv"), &sol.eta)?;
    let report = json!({
        "d": sol.z.spec().dim(),
        "n": sol.z.spec().n(),
        "barrier": args.barrier.clone().unwrap_or_else(|| {
            args.barrier_file.as_deref().map(|p| p.display().to_string()).unwrap_or_default()
        }),
        "options": opts,
        "residuals": r,
        "passed": ok,
    });
    io::write_json(&prefixed(&args.out, "_report.json"), &report)?;
    Ok(ok)
}

fn spde_solve(args: &SpdeArgs) -> Result<bool> {
    let spec = GridSpec::new(args.dim, args.n)?;
    let coeffs = CoefficientPair::from_specs(&args.f, &args.sigma)?;
    let noise = sample_noise(spec, args.seed);
    let opts = PicardOptions {
        tol: args.tol,
        max_iters: args.max_iters,
        ..PicardOptions::default()
    };
    let params = SmallnessParams {
        p: args.p.unwrap_or_else(|| default_moment_order(args.dim)),
        eps: args.eps,
        c_p: args.c_p,
        a: args.a,
        b_holder: args.b_holder,
    };
    let smallness = match check_smallness(&coeffs, &spec, &params) {
        Ok(r) => serde_json::to_value(r)?,
        Err(e) => json!({ "error": e.to_string() }),
    };
    let base = json!({
        "d": args.dim,
        "n": args.n,
        "f": args.f,
        "sigma": args.sigma,
        "seed": args.seed,
        "noise_level": noise.level(),
        "tol": args.tol,
        "max_iters": args.max_iters,
        "smallness": smallness,
    });
    let manifest_path = prefixed(&args.out, "_manifest.json");
    if args.noise_dump {
        io::write_noise_dump(&prefixed(&args.out, "_noise.bin"), &noise)?;
    }
    let sol = match picard_solve(&coeffs, &noise, &opts) {
        Ok(s) => s,
        Err(e) => {
            let mut m = base;
            m["error"] = json!(e.to_string());
            if let Error::Convergence { history, .. } = &e {
                m["change_history"] = json!(history);
            }
            io::write_json(&manifest_path, &m)?;
            return Err(e);
        }
    };
    let tol = args.tol;
    let min_u = sol.u.values().iter().fold(0.0f64, |m, &v| m.min(v));
    let min_eta = sol.eta.values().iter().fold(0.0f64, |m, &v| m.min(v));
    let comp_bound = tol * sol.u.len() as f64 * (1.0 + sol.u.sup_norm() * sol.eta.sup_norm());
    let ok = min_u >= -tol
        && min_eta >= -tol
        && sol.complementarity <= comp_bound
        && sol.residual <= 10.0 * tol;
    io::write_grid_csv(&prefixed(&args.out, "_u.csv"), &sol.u)?;
    io::write_grid_csv(&prefixed(&args.out, "_eta.csv"), &sol.eta)?;
    let mut m = base;
    m["iterations"] = json!(sol.picard_iterations);
    m["final_change"] = json!(sol.final_change);
    m["change_history"] = json!(sol.change_history);
    m["residuals"] = json!({
        "equation": sol.residual,
        "complementarity": sol.complementarity,
        "complementarity_bound": comp_bound,
        "min_u": min_u,
        "min_eta": min_eta,
    });
    m["passed"] = json!(ok);
    io::write_json(&manifest_path, &m)?;
    Ok(ok)
}

fn convergence(kind: StudyKind, config: &Path, out: Option<&Path>) -> Result<bool> {
    let mut cfg = ExperimentConfig::load(config)?;
    let want = match kind {
        StudyKind::Det => ExperimentKind::DeterministicConvergence,
        StudyKind::Stoch => ExperimentKind::StochasticConvergence,
    };
    if cfg.kind != want {
        return Err(Error::Config(format!(
            "config is a {} study, not {}",
            cfg.kind.name(),
            want.name()
        )));
    }
    let dir = out
        .map(Path::to_path_buf)
        .or_else(|| cfg.output_dir.clone())
        .unwrap_or_else(|| PathBuf::from("."));
    cfg.output_dir = Some(dir.clone());
    let mut run = run_convergence(&cfg)?;
    run.write(&dir)?;
    for row in &run.report.rows {
        eprintln!(
            "n={:<5} mean sup error {:.6e}  mean error^p {:.6e} (se {:.2e})",
            row.n, row.mean_sup_error, row.mean_error_p, row.std_error_p
        );
    }
    for v in &run.report.verdicts {
        eprintln!(
            "[{}] {}: {}",
            if v.passed { "PASS" } else { "FAIL" },
            v.name,
            v.detail
        );
    }
    Ok(run.report.passed())
}

fn write_or_print(out: Option<&Path>, bytes: &[u8]) -> Result<()> {
    match out {
        Some(p) => io::write_atomic(p, bytes),
        None => {
            use std::io::Write;
            std::io::stdout().write_all(bytes).map_err(|e| Error::Io {
                context: "stdout".into(),
                source: e,
            })
        }
    }
}

fn properties(
    filter: Option<String>,
    config: Option<&Path>,
    seed: Option<u64>,
    invert: bool,
    out: Option<&Path>,
) -> Result<bool> {
    let mut pc = match config {
        Some(p) => ExperimentConfig::load(p)?.properties,
        None => PropertyConfig::default(),
    };
    if filter.is_some() {
        pc.filter = filter;
    }
    if let Some(s) = seed {
        pc.seed = s;
    }
    pc.invert_sign_lemma |= invert;
    let report = run_property_suite(&pc);
    for v in &report.verdicts {
        let tag = match (v.passed, v.asserted) {
            (true, _) => "PASS",
            (false, true) => "FAIL",
            (false, false) => "NOTE",
        };
        eprintln!("[{tag}] {}/{}: {}", v.module, v.name, v.detail);
    }
    write_or_print(out, &io::json_bytes(&report)?)?;
    Ok(report.passed)
}

fn run(cli: Cli) -> Result<bool> {
    match cli.command {
        Command::Obstacle(ObstacleCommand::Solve(a)) => obstacle_solve(&a),
        Command::Spde(SpdeCommand::Solve(a)) => spde_solve(&a),
        Command::Convergence { kind, config, out } => convergence(kind, &config, out.as_deref()),
        Command::GreenTable { dim, n, grid, out } => {
            let rows = green_table(&GridSpec::new(dim, n)?, grid)?;
            write_or_print(out.as_deref(), &green_table_csv(dim, &rows)?)?;
            Ok(true)
        }
        Command::Properties {
            filter,
            config,
            seed,
            invert_sign_lemma,
            out,
        } => properties(
            filter,
            config.as_deref(),
            seed,
            invert_sign_lemma,
            out.as_deref(),
        ),
    }
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
    }
}
