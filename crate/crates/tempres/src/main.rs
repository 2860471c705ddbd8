use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use tempres::config::{matrix_rows, EvaluatorName, Format, Horizon, Mode, StepSource, SweepConfig, SystemSpec};
use tempres::error::{CliError, Result};
use tempres::output::{emit, fmt_float};
use tempres::plan::{plan_report, read_pilot, render_plan, PlanRequest};
use tempres::sweep::{default_workers, run_sweep};
use tempres_core::linalg;
use tempres_core::process;
use tempres_core::random_system::sample_stable_matrix;
use tempres_core::system::{HorizonMode, ScalarSystem};

#[derive(Parser, Debug)]
#[command(name = "tempres", version, about = "Temporal resolution of Monte-Carlo policy evaluation on linear SDEs")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Evaluate a grid of budgets and step sizes from a JSON manifest.
    Sweep {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long, value_enum)]
        format: Option<Format>,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long, env = "TEMPRES_WORKERS")]
        workers: Option<usize>,
    },
    /// Report the optimal step size from every applicable method.
    Plan {
        #[arg(long, allow_hyphen_values = true)]
        a: f64,
        #[arg(long, default_value_t = 1.0)]
        sigma: f64,
        #[arg(long = "T")]
        horizon: Option<f64>,
        #[arg(long = "B")]
        budget: u64,
        #[arg(long)]
        gamma: Option<f64>,
        #[arg(long, value_enum, default_value = "finite-undiscounted")]
        mode: Mode,
        /// `B,h_star` pairs or a sweep CSV.
        #[arg(long)]
        pilot: Option<PathBuf>,
        #[arg(long)]
        m_max: Option<u64>,
    },
    /// Print a random stable system as a sweep `system` entry.
    SampleSystem {
        #[arg(long, default_value_t = 3)]
        n: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = 1.0)]
        sigma: f64,
    },
    /// MSE at a single (h, B) point, written as one CSV record.
    Mse {
        #[arg(long, allow_hyphen_values = true)]
        a: f64,
        #[arg(long, default_value_t = 1.0)]
        sigma: f64,
        #[arg(long, default_value_t = 1.0)]
        q: f64,
        #[arg(long = "T")]
        horizon: Option<f64>,
        #[arg(long)]
        h: f64,
        #[arg(long = "B")]
        budget: u64,
        #[arg(long)]
        gamma: Option<f64>,
        #[arg(long, value_enum, default_value = "finite-undiscounted")]
        mode: Mode,
        #[arg(long, value_enum, value_delimiter = ',', default_value = "closed,oracle")]
        evaluators: Vec<EvaluatorName>,
        #[arg(long, default_value_t = 1)]
        replicates: u64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, value_enum, default_value = "csv")]
        format: Format,
    },
    /// Scalar moments of the state at times s and t.
    Moments {
        #[arg(long, allow_hyphen_values = true)]
        a: f64,
        #[arg(long, default_value_t = 1.0)]
        sigma: f64,
        #[arg(long)]
        s: f64,
        #[arg(long)]
        t: f64,
    },
}

fn open_out(path: Option<&PathBuf>) -> Result<Box<dyn Write>> {
    Ok(match path {
        Some(p) => Box::new(BufWriter::new(File::create(p)?)),
        None => Box::new(BufWriter::new(io::stdout().lock())),
    })
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Sweep { config, out, format, seed, workers } => {
            let mut cfg = SweepConfig::load(&config)?;
            if let Some(seed) = seed {
                cfg.seed = seed;
            }
            if let Some(format) = format {
                cfg.output.format = format;
            }
            if out.is_some() {
                cfg.output.path = out;
            }
            let output = cfg.output.clone();
            let records = run_sweep(cfg, workers.filter(|&w| w > 0).unwrap_or_else(default_workers))?;
            emit(&records, output.format, open_out(output.path.as_ref())?)
        }
        Command::Plan { a, sigma, horizon, budget, gamma, mode, pilot, m_max } => {
            let mode = HorizonMode::from(mode);
            let gamma = match (mode, gamma) {
                (HorizonMode::FiniteUndiscounted, g) => g.unwrap_or(1.0),
                (_, Some(g)) => g,
                (_, None) => return Err(CliError::config("--gamma is required in discounted modes")),
            };
            let horizon = match (horizon, mode) {
                (Some(t), _) => t,
                (None, HorizonMode::InfiniteDiscounted) if gamma < 1.0 => 1.0 / (1.0 - gamma),
                _ => return Err(CliError::config("--T is required")),
            };
            let pilot = match pilot {
                Some(p) => Some(read_pilot(File::open(&p).map_err(|e| CliError::config(format!("cannot read {}: {e}", p.display())))?)?),
                None => None,
            };
            let rows = plan_report(&PlanRequest { a, sigma, horizon, budget, gamma, mode, m_max, pilot })?;
            print!("{}", render_plan(&rows));
            Ok(())
        }
        Command::SampleSystem { n, seed, sigma } => {
            if n == 0 {
                return Err(CliError::config("--n must be positive"));
            }
            let a = sample_stable_matrix(n, seed);
            let mut eigs: Vec<f64> = linalg::eigenvalues(&a).iter().map(|z| z.re).collect();
            eigs.sort_by(f64::total_cmp);
            let spec = SystemSpec::Vector { a: matrix_rows(&a), sigma, q: None };
            println!("{}", serde_json::to_string(&spec)?);
            let eigs: Vec<String> = eigs.into_iter().map(fmt_float).collect();
            eprintln!("eigenvalues: {}", eigs.join(";"));
            Ok(())
        }
        Command::Mse { a, sigma, q, horizon, h, budget, gamma, mode, evaluators, replicates, seed, format } => {
            let cfg = SweepConfig {
                system: SystemSpec::Scalar { a, sigma, q },
                mode,
                horizon: horizon.map(Horizon::Fixed),
                gamma,
                budgets: vec![budget],
                h: StepSource::Explicit(vec![h]),
                replicates,
                seed,
                evaluators,
                output: Default::default(),
            };
            let records = run_sweep(cfg, 1)?;
            if let Some(err) = records.first().and_then(|r| r.error.clone()) {
                emit(&records, format, open_out(None)?)?;
                return Err(CliError::Point(err));
            }
            emit(&records, format, open_out(None)?)
        }
        Command::Moments { a, sigma, s, t } => {
            if !(s >= 0.0 && t >= 0.0) {
                return Err(CliError::config("--s and --t must be non-negative"));
            }
            let sys = ScalarSystem::new_unchecked(a, sigma, 1.0);
            println!("second_moment_s {}", fmt_float(process::second_moment(&sys, s)));
            println!("second_moment_t {}", fmt_float(process::second_moment(&sys, t)));
            println!("fourth_moment_s {}", fmt_float(process::fourth_moment(&sys, s)));
            println!("cross_moment {}", fmt_float(process::cross_moment(&sys, s, t)));
            println!("cov_pair {}", fmt_float(process::cov_pair(&sys, s, t)));
            Ok(())
        }
    }
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("tempres: {e}");
            e.exit_code()
        }
    }
}
