use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context};
use clap::{Args, Parser, Subcommand};
use isac_planner::orchestrator::{run_ao, BenchmarkKind, ConvergenceCriteria};
use isac_planner::report::{export_all, run_sweep, write_sweep, SweepSpec};
use isac_planner::scenario::BeamMode;
use isac_planner::{load_scenario, PlannerError, Scenario};

/// Plans cooperative ISAC multi-UAV missions.
#[derive(Parser, Debug)]
#[command(name = "isac-planner", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
    /// Worker threads for block solvers and sweep points.
    #[arg(long, global = true)]
    jobs: Option<usize>,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Optimize one scenario and write the solution files.
    Run(RunArgs),
    /// Sweep one scenario parameter across benchmarks and write sweep.csv.
    Sweep(SweepArgs),
}

#[derive(Args, Debug)]
struct Common {
    /// Scenario JSON file.
    #[arg(long)]
    scenario: PathBuf,
    /// Output directory.
    #[arg(long, default_value = "results")]
    out: PathBuf,
    #[arg(long, default_value_t = 30)]
    max_outer: usize,
    /// Relative objective tolerance of the outer loop.
    #[arg(long, default_value_t = 1e-3)]
    tol: f64,
    /// Time-split box as `lo,hi`.
    #[arg(long, value_delimiter = ',', num_args = 2)]
    delta_bounds: Option<Vec<f64>>,
    #[arg(long)]
    beam_mode: Option<BeamMode>,
}

#[derive(Args, Debug)]
struct RunArgs {
    #[command(flatten)]
    common: Common,
    #[arg(long, default_value = "proposed")]
    benchmark: String,
}

#[derive(Args, Debug)]
struct SweepArgs {
    #[command(flatten)]
    common: Common,
    /// p_comm_max or mi_threshold.
    #[arg(long)]
    param: String,
    #[arg(long, value_delimiter = ',', required = true)]
    values: Vec<f64>,
    /// Benchmarks to include; all by default.
    #[arg(long = "benchmark", value_delimiter = ',')]
    benchmarks: Vec<String>,
}

/// Failure carrying the process exit code.
struct Failure {
    code: u8,
    error: anyhow::Error,
}

impl From<anyhow::Error> for Failure {
    fn from(error: anyhow::Error) -> Self {
        let code = match error.downcast_ref::<PlannerError>() {
            Some(e) if e.is_infeasibility() => 2,
            _ => 1,
        };
        Failure { code, error }
    }
}

fn load(common: &Common) -> anyhow::Result<(Scenario, ConvergenceCriteria)> {
    let mut s = load_scenario(&common.scenario)?;
    if let Some(b) = &common.delta_bounds {
        s = s.with_delta_bounds(b[0], b[1]);
    }
    if let Some(mode) = common.beam_mode {
        s = s.with_beam_mode(mode);
    }
    let criteria = ConvergenceCriteria {
        max_outer: common.max_outer,
        rel_tol: common.tol,
    };
    Ok((s, criteria))
}

fn run(args: &RunArgs) -> anyhow::Result<()> {
    let (s, criteria) = load(&args.common)?;
    let kind: BenchmarkKind = args.benchmark.parse()?;
    let state = run_ao(&s, &criteria, kind)?;
    let files = export_all(&state, &s, &args.common.out)?;
    println!(
        "{kind}: sum rate {:.6} bits/s/Hz, MI {:.6} bits after {} iterations",
        state.objective,
        state.mi,
        state.history.len()
    );
    for f in files {
        println!("wrote {}", f.display());
    }
    Ok(())
}

fn sweep(args: &SweepArgs) -> anyhow::Result<()> {
    let (s, criteria) = load(&args.common)?;
    let kinds = if args.benchmarks.is_empty() {
        BenchmarkKind::ALL.to_vec()
    } else {
        args.benchmarks
            .iter()
            .map(|k| k.parse())
            .collect::<Result<Vec<BenchmarkKind>, _>>()?
    };
    let spec = SweepSpec {
        param: args.param.parse()?,
        values: args.values.clone(),
        kinds,
    };
    spec.check()?;
    let rows = run_sweep(&s, &spec, &criteria)?;
    let path = write_sweep(&args.common.out, spec.param, &rows)?;
    for r in &rows {
        match r.sum_rate {
            Some(v) => println!("{}={} {}: {v:.6}", spec.param.as_str(), r.value, r.kind),
            None => println!("{}={} {}: infeasible ({})", spec.param.as_str(), r.value, r.kind, r.note),
        }
    }
    println!("wrote {}", path.display());
    Ok(())
}

fn check_out_dir(dir: &Path) -> anyhow::Result<()> {
    if dir.exists() && !dir.is_dir() {
        bail!("output path {} exists and is not a directory", dir.display());
    }
    Ok(())
}

fn dispatch(cli: &Cli) -> Result<(), Failure> {
    if let Some(j) = cli.jobs {
        rayon::ThreadPoolBuilder::new()
            .num_threads(j.max(1))
            .build_global()
            .context("cannot configure worker threads")?;
    }
    match &cli.command {
        Command::Run(a) => {
            check_out_dir(&a.common.out)?;
            run(a)?
        }
        Command::Sweep(a) => {
            check_out_dir(&a.common.out)?;
            sweep(a)?
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::new().filter_or("ISAC_PLANNER_LOG", "warn")).init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match dispatch(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {:#}", f.error);
            ExitCode::from(f.code)
        }
    }
}
