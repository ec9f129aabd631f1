//! Command-line harness for the estimator sweeps.

use std::collections::HashMap;
use std::io::Write;
use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};

use krytrace::error::{Error, Result};
use krytrace::experiments::{
    k_range, parse_config_file, resolve_setting as pick, run_dense_file, run_hutch, run_small,
    run_table1, write_csv, write_gnuplot, write_hutch_csv, ExperimentConfig, FamilyConfig,
};

#[derive(Parser)]
#[command(
    name = "krytrace",
    about = "Randomized block Krylov trace and log-determinant estimation",
    version
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Print the bound-comparison table of gap factors (q = 3, 4, 5).
    Table1 {
        /// Failure probability entering the concentration constant.
        #[arg(long, default_value_t = 0.01)]
        delta: f64,
    },
    /// Sweep the geometric-decay family (diagonal test operator).
    Small(SweepArgs),
    /// Sweep the sparse low-rank family.
    Medium(SweepArgs),
    /// Sweep a dense symmetric PSD matrix read from a text file.
    Dense(SweepArgs),
    /// Hutchinson Monte Carlo trace baseline on the small family.
    Hutch(HutchArgs),
}

#[derive(Args)]
struct SweepArgs {
    /// key=value config file; explicit flags override its entries.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Eigenvalue decay ratio (small family).
    #[arg(long)]
    tau: Option<f64>,
    /// Leading eigenvalue (small family).
    #[arg(long)]
    lambda1: Option<f64>,
    /// Operator order.
    #[arg(long)]
    n: Option<usize>,
    /// High coefficient (medium family).
    #[arg(long)]
    h: Option<f64>,
    /// Low coefficient (medium family).
    #[arg(long)]
    lcoef: Option<f64>,
    /// Sparse-column density (medium family).
    #[arg(long)]
    density: Option<f64>,
    /// Matrix file (dense subcommand).
    #[arg(long)]
    file: Option<PathBuf>,
    /// Oversampling; the probe has l = k + p columns.
    #[arg(long)]
    p: Option<usize>,
    /// Comma-separated list of iteration depths.
    #[arg(long, value_delimiter = ',')]
    q: Option<Vec<usize>>,
    #[arg(long)]
    kmin: Option<usize>,
    #[arg(long)]
    kmax: Option<usize>,
    #[arg(long)]
    kstep: Option<usize>,
    #[arg(long)]
    trials: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    /// Failure probability for the concentration bounds.
    #[arg(long)]
    delta: Option<f64>,
    /// Also evaluate and emit the bound columns.
    #[arg(long)]
    bounds: bool,
    /// Additionally emit a gnuplot-ready data layout.
    #[arg(long)]
    gnuplot: bool,
    /// Output CSV path (stdout when absent).
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct HutchArgs {
    #[arg(long, default_value_t = 0.9)]
    tau: f64,
    #[arg(long, default_value_t = 100.0)]
    lambda1: f64,
    #[arg(long, default_value_t = 1280)]
    n: usize,
    /// Monte Carlo samples per trial.
    #[arg(long, default_value_t = 100)]
    samples: usize,
    #[arg(long, default_value_t = 20)]
    trials: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    out: Option<PathBuf>,
}

fn pick_q(
    cli: Option<Vec<usize>>,
    cfg: &HashMap<String, String>,
    default: Vec<usize>,
) -> Result<Vec<usize>> {
    if let Some(v) = cli {
        return Ok(v);
    }
    match cfg.get("q") {
        Some(raw) => raw
            .split(',')
            .map(|t| {
                t.trim()
                    .parse()
                    .map_err(|e| Error::Parse(format!("config key q: {e}")))
            })
            .collect(),
        None => Ok(default),
    }
}

struct SweepDefaults {
    n: usize,
    p: usize,
    q: Vec<usize>,
    kmin: usize,
    kmax: usize,
    kstep: usize,
    trials: usize,
}

fn build_config(
    args: &SweepArgs,
    family_kind: &str,
    defaults: SweepDefaults,
) -> Result<(ExperimentConfig, bool)> {
    let cfg_map = match &args.config {
        Some(path) => parse_config_file(path)?,
        None => HashMap::new(),
    };
    let n = pick(args.n, &cfg_map, "n", defaults.n)?;
    let family = match family_kind {
        "small" => FamilyConfig::Small {
            tau: pick(args.tau, &cfg_map, "tau", 0.9)?,
            lambda1: pick(args.lambda1, &cfg_map, "lambda1", 100.0)?,
            n,
        },
        "medium" => FamilyConfig::Medium {
            h: pick(args.h, &cfg_map, "h", 10.0)?,
            lcoef: pick(args.lcoef, &cfg_map, "lcoef", 1.0)?,
            n,
            density: pick(args.density, &cfg_map, "density", 0.025)?,
        },
        _ => {
            let file = match (&args.file, cfg_map.get("file")) {
                (Some(f), _) => f.clone(),
                (None, Some(f)) => PathBuf::from(f),
                (None, None) => {
                    return Err(Error::InvalidParameter(
                        "dense sweep requires --file".into(),
                    ))
                }
            };
            FamilyConfig::DenseFile { path: file }
        }
    };
    let kmin = pick(args.kmin, &cfg_map, "kmin", defaults.kmin)?;
    let kmax = pick(args.kmax, &cfg_map, "kmax", defaults.kmax)?;
    let kstep = pick(args.kstep, &cfg_map, "kstep", defaults.kstep)?;
    let emit_bounds = args.bounds
        || cfg_map
            .get("bounds")
            .map(|v| v == "true" || v == "1")
            .unwrap_or(false);
    let config = ExperimentConfig {
        family,
        k_grid: k_range(kmin, kmax, kstep),
        p: pick(args.p, &cfg_map, "p", defaults.p)?,
        q_list: pick_q(args.q.clone(), &cfg_map, defaults.q)?,
        trials: pick(args.trials, &cfg_map, "trials", defaults.trials)?,
        base_seed: pick(args.seed, &cfg_map, "seed", 0)?,
        delta: pick(args.delta, &cfg_map, "delta", 0.01)?,
        emit_bounds,
    };
    Ok((config, emit_bounds))
}

fn open_out(path: &Option<PathBuf>) -> Result<Box<dyn Write>> {
    Ok(match path {
        Some(p) => Box::new(std::io::BufWriter::new(std::fs::File::create(p)?)),
        None => Box::new(std::io::stdout().lock()),
    })
}

fn timestamp_line() -> String {
    let secs = std::time::SystemTime::now()
        .duration_since(std::time::UNIX_EPOCH)
        .map(|d| d.as_secs())
        .unwrap_or(0);
    format!("# generated_unix_seconds={secs}")
}

fn run_sweep_command(args: &SweepArgs, family_kind: &str, defaults: SweepDefaults) -> Result<()> {
    let (config, emit_bounds) = build_config(args, family_kind, defaults)?;
    let records = match &config.family {
        FamilyConfig::DenseFile { path } => {
            let path = path.clone();
            run_dense_file(&path, &config)?
        }
        _ => run_small_or_medium(&config)?,
    };
    let mut out = open_out(&args.out)?;
    writeln!(out, "{}", timestamp_line())?;
    write_csv(&records, emit_bounds, &mut out)?;
    out.flush()?;
    if args.gnuplot {
        match &args.out {
            Some(p) => {
                let gp = p.with_extension("gp");
                let mut gout = std::io::BufWriter::new(std::fs::File::create(&gp)?);
                write_gnuplot(&records, &mut gout)?;
                eprintln!("gnuplot layout written to {}", gp.display());
            }
            None => {
                let mut stdout = std::io::stdout().lock();
                write_gnuplot(&records, &mut stdout)?;
            }
        }
    }
    Ok(())
}

fn run_small_or_medium(
    config: &ExperimentConfig,
) -> Result<Vec<krytrace::experiments::RunRecord>> {
    match config.family {
        FamilyConfig::Small { .. } => run_small(config),
        FamilyConfig::Medium { .. } => krytrace::experiments::run_medium(config),
        _ => unreachable!(),
    }
}

fn run() -> Result<()> {
    let cli = Cli::parse();
    match cli.command {
        Command::Table1 { delta } => {
            let table = run_table1(delta)?;
            print!("{table}");
            Ok(())
        }
        Command::Small(args) => run_sweep_command(
            &args,
            "small",
            SweepDefaults {
                n: 1280,
                p: 20,
                q: vec![3],
                kmin: 10,
                kmax: 120,
                kstep: 10,
                trials: 20,
            },
        ),
        Command::Medium(args) => run_sweep_command(
            &args,
            "medium",
            SweepDefaults {
                n: 20000,
                p: 20,
                q: vec![3],
                kmin: 10,
                kmax: 100,
                kstep: 10,
                trials: 20,
            },
        ),
        Command::Dense(args) => run_sweep_command(
            &args,
            "dense",
            SweepDefaults {
                n: 0, // taken from the file
                p: 2,
                q: vec![2],
                kmin: 2,
                kmax: 2,
                kstep: 10,
                trials: 5,
            },
        ),
        Command::Hutch(args) => {
            let records = run_hutch(
                args.tau,
                args.lambda1,
                args.n,
                args.samples,
                args.trials,
                args.seed,
            )?;
            let mut out = open_out(&args.out)?;
            writeln!(out, "{}", timestamp_line())?;
            write_hutch_csv(&records, &mut out)?;
            out.flush()?;
            Ok(())
        }
    }
}

fn main() {
    if let Err(err) = run() {
        eprintln!("error: {err}");
        std::process::exit(1);
    }
}
