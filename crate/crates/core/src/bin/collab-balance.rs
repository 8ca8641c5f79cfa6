use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand, ValueEnum};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use collab_balance::scenario::load_scenario;
use collab_balance::sim::{format_sig, run, write_output, Verdict};
use collab_balance::tactile::{run_needle, write_pressure_log, DetectorConfig, FingertipModel, ForceProfile};
use collab_balance::wrist::{optimize_wrist, write_trace, OptimizeOptions, SearchMethod, WorkspaceGrid, WristBounds};

#[derive(Parser)]
#[command(name = "collab-balance", version, about = "Balance, step adjustment and collaboration simulations")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run a scenario file and write timeseries.csv and summary.txt.
    Run {
        #[arg(long)]
        scenario: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Override the control period of the scenario.
        #[arg(long)]
        dt: Option<f64>,
    },
    /// Optimise the wrist horn and limb lengths for the global condition number.
    WristOpt {
        #[arg(long, value_enum, default_value_t = Method::Hybrid)]
        method: Method,
        /// Workspace samples per axis.
        #[arg(long, default_value_t = 9)]
        grid: usize,
        #[arg(long)]
        out: PathBuf,
        /// Design lattice points per axis for grid and hybrid searches.
        #[arg(long, default_value_t = 5)]
        lattice: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Use the bounds as printed (horn < 0.15, limb in [0.4, 0.8]) instead of the millimetre-scale ones.
        #[arg(long = "paper-bounds")]
        literal_bounds: bool,
    },
    /// Feed a needle force profile through one fingertip and apply the stop policy.
    Needle {
        #[arg(long)]
        profile: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum Method {
    #[value(alias = "grid_search")]
    Grid,
    #[value(alias = "nelder_mead")]
    NelderMead,
    Hybrid,
}

fn main() -> ExitCode {
    match execute(Cli::parse()) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}

fn execute(cli: Cli) -> Result<ExitCode> {
    match cli.command {
        Command::Run { scenario, out, seed, dt } => run_scenario(&scenario, &out, seed, dt),
        Command::WristOpt { method, grid, out, lattice, seed, literal_bounds } => {
            wrist_opt(method, grid, lattice, &out, seed, literal_bounds)
        }
        Command::Needle { profile, out, seed } => needle(&profile, &out, seed),
    }
}

fn run_scenario(path: &Path, out: &Path, seed: u64, dt: Option<f64>) -> Result<ExitCode> {
    let mut scenario = load_scenario(path).with_context(|| format!("loading {}", path.display()))?;
    if let Some(dt) = dt {
        scenario.dt = dt;
        scenario.validate().context("scenario with --dt override")?;
    }
    let output = run(&scenario, seed)?;
    write_output(&output, out)?;
    let s = &output.summary;
    println!(
        "{}: {} ticks, max DCM error {} m, {} steps, {} adjusted",
        s.scenario,
        output.rows.len(),
        format_sig(s.max_dcm_error),
        s.steps_taken,
        s.adjusted_steps.len()
    );
    if s.verdict == Verdict::Fall {
        eprintln!("verdict: FALL");
        return Ok(ExitCode::from(2));
    }
    Ok(ExitCode::SUCCESS)
}

fn wrist_opt(method: Method, grid: usize, lattice: usize, out: &Path, seed: u64, literal_bounds: bool) -> Result<ExitCode> {
    if lattice < 2 {
        bail!("--lattice must be at least 2");
    }
    let bounds = if literal_bounds { WristBounds::literal() } else { WristBounds::rescaled() };
    let method = match method {
        Method::Grid => SearchMethod::GridSearch { points_per_axis: lattice },
        Method::NelderMead => SearchMethod::NelderMead,
        Method::Hybrid => SearchMethod::Hybrid { points_per_axis: lattice },
    };
    let grid = WorkspaceGrid::uniform(grid)?;
    let result = optimize_wrist(&bounds, &grid, method, seed, &OptimizeOptions::default())?;
    fs::create_dir_all(out).with_context(|| format!("creating {}", out.display()))?;
    write_trace(&out.join("trace.csv"), &result.trace)?;
    let g = &result.geometry;
    let text = format!(
        "method: {method}\nseed: {seed}\nhorn1: {}\nhorn2: {}\nlimb1: {}\nlimb2: {}\ngcn: {}\nevaluations: {}\n",
        format_sig(g.horn[0]),
        format_sig(g.horn[1]),
        format_sig(g.limb[0]),
        format_sig(g.limb[1]),
        format_sig(result.gcn),
        result.evaluations
    );
    let path = out.join("result.txt");
    fs::write(&path, &text).with_context(|| format!("writing {}", path.display()))?;
    print!("{text}");
    Ok(ExitCode::SUCCESS)
}

fn needle(profile: &Path, out: &Path, seed: u64) -> Result<ExitCode> {
    let profile = ForceProfile::load(profile)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let result = run_needle(&profile, &FingertipModel::default(), DetectorConfig::conservative(), &mut rng)?;
    fs::create_dir_all(out).with_context(|| format!("creating {}", out.display()))?;
    write_pressure_log(&out.join("pressure_log.csv"), &result.rows)?;
    let stop = result.stop_time.map(format_sig).unwrap_or_else(|| "none".into());
    let text = format!("samples: {}\nevents: {}\nstop_time: {stop}\n", result.rows.len(), result.events.len());
    let path = out.join("summary.txt");
    fs::write(&path, &text).with_context(|| format!("writing {}", path.display()))?;
    print!("{text}");
    Ok(ExitCode::SUCCESS)
}
