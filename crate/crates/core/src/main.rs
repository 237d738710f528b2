use std::fmt::Display;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use subdiff::cq::cq_weights;
use subdiff::expr::parse;
use subdiff::harness::{
    load_config, run_convergence, run_single, HarnessError, Reference, DEFAULT_TAUS,
};
use subdiff::oracle::{linear_exact_1d, mittag_leffler, scalar_fode_exact, OracleError};

#[derive(Parser)]
#[command(name = "subdiff", version, about = "Corrected BDF2 convolution quadrature for quasilinear subdiffusion")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the configured problem to T and write optional snapshots.
    Run {
        config: PathBuf,
        /// Comma-separated snapshot times; each must be a multiple of tau.
        #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
        snapshots: Vec<f64>,
        /// Output directory for snapshot CSVs.
        #[arg(long)]
        out: Option<PathBuf>,
        /// Also solve the stationary problem at t = T.
        #[arg(long)]
        stationary: bool,
        /// Overrides scheme.n_steps.
        #[arg(long)]
        n_steps: Option<usize>,
    },
    /// Temporal convergence study over a halving step ladder.
    Convergence {
        config: PathBuf,
        #[arg(long, value_delimiter = ',', default_values_t = DEFAULT_TAUS.to_vec())]
        taus: Vec<f64>,
        #[command(flatten)]
        reference: ReferenceArgs,
        /// CSV destination; stdout when omitted.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Print CQ weights b_0..b_n as `index,weight` CSV.
    Weights {
        #[arg(long, allow_hyphen_values = true)]
        alpha: f64,
        #[arg(long, default_value_t = 2)]
        order: u32,
        #[arg(long)]
        n: usize,
    },
    /// Evaluate closed-form reference solutions.
    Oracle {
        #[command(subcommand)]
        op: OracleCommand,
    },
}

#[derive(Args)]
#[group(required = true, multiple = false)]
struct ReferenceArgs {
    /// Self-reference computed with this finer step.
    #[arg(long)]
    reference_tau: Option<f64>,
    /// `oracle` for the exact semi-discrete solution (linear 1-D only).
    #[arg(long, value_parser = ["oracle"])]
    reference: Option<String>,
}

#[derive(Subcommand)]
enum OracleCommand {
    /// Mittag-Leffler function E_{alpha,beta}(z) for real z.
    Ml {
        #[arg(long, allow_hyphen_values = true)]
        alpha: f64,
        #[arg(long, allow_hyphen_values = true, default_value_t = 1.0)]
        beta: f64,
        #[arg(long, allow_hyphen_values = true)]
        z: f64,
    },
    /// Solution of D^alpha y = -lambda y, y(0) = y0.
    Fode {
        #[arg(long, allow_hyphen_values = true)]
        alpha: f64,
        #[arg(long, allow_hyphen_values = true)]
        lambda: f64,
        #[arg(long, allow_hyphen_values = true, default_value_t = 1.0)]
        y0: f64,
        #[arg(long, allow_hyphen_values = true)]
        t: f64,
    },
    /// Sine-series solution of the linear problem on (0, 1).
    Linear1d {
        #[arg(long, allow_hyphen_values = true)]
        alpha: f64,
        #[arg(long, allow_hyphen_values = true, default_value_t = 1.0)]
        a: f64,
        #[arg(long, allow_hyphen_values = true)]
        initial: String,
        #[arg(long, allow_hyphen_values = true, default_value = "0")]
        source: String,
        #[arg(long, default_value_t = 64)]
        modes: usize,
        #[arg(long, allow_hyphen_values = true)]
        x: f64,
        #[arg(long, allow_hyphen_values = true)]
        t: f64,
    },
}

struct Failure {
    code: u8,
    message: String,
}

impl Failure {
    fn new(code: u8, message: impl Display) -> Self {
        Self {
            code,
            message: message.to_string(),
        }
    }
}

impl From<HarnessError> for Failure {
    fn from(e: HarnessError) -> Self {
        Self::new(e.exit_code() as u8, e)
    }
}

impl From<OracleError> for Failure {
    fn from(e: OracleError) -> Self {
        let code = match e {
            OracleError::UnsupportedDomain { .. } => 3,
            _ => 2,
        };
        Self::new(code, e)
    }
}

fn run(cli: Cli) -> Result<(), Failure> {
    match cli.command {
        Command::Run {
            config,
            snapshots,
            out,
            stationary,
            n_steps,
        } => {
            let mut spec = load_config(&config).map_err(HarnessError::from)?;
            if n_steps.is_some() {
                spec.n_steps = n_steps;
            }
            let result = run_single(&spec, &snapshots, stationary, out.as_deref())?;
            let tr = &result.trajectory;
            let iters = tr.newton_iterations.iter().copied().max().unwrap_or(0);
            println!("steps {} T {:.16e} max_newton_iterations {iters}", tr.n_steps(), spec.t_final);
            if let Some(d) = result.distances_to_stationary() {
                println!("distance_to_stationary {:.16e}", d.last().copied().unwrap_or(0.0));
            }
            for f in &result.files {
                println!("wrote {}", f.display());
            }
        }
        Command::Convergence {
            config,
            taus,
            reference,
            out,
        } => {
            let spec = load_config(&config).map_err(HarnessError::from)?;
            let reference = match reference.reference_tau {
                Some(tau) => Reference::FineTau(tau),
                None => Reference::Oracle,
            };
            let report = run_convergence(&spec, &taus, reference)?;
            match &out {
                Some(path) => report.write_csv(path)?,
                None => print!("{}", report.to_csv()),
            }
            if let Some(reason) = &report.failure {
                return Err(Failure::new(3, format!("study incomplete: {reason}")));
            }
            if let Some(rate) = report.final_rate() {
                eprintln!("final rate {rate:.4}");
            }
        }
        Command::Weights { alpha, order, n } => {
            let w = cq_weights(alpha, order, n).map_err(|e| Failure::new(2, e))?;
            println!("index,weight");
            for (j, b) in w.weights().iter().enumerate() {
                println!("{j},{b:.16e}");
            }
        }
        Command::Oracle { op } => {
            let value = match op {
                OracleCommand::Ml { alpha, beta, z } => mittag_leffler(alpha, beta, z)?,
                OracleCommand::Fode { alpha, lambda, y0, t } => scalar_fode_exact(alpha, lambda, y0, t)?,
                OracleCommand::Linear1d {
                    alpha,
                    a,
                    initial,
                    source,
                    modes,
                    x,
                    t,
                } => {
                    let u0 = parse(&initial).map_err(|e| Failure::new(2, format!("initial: {e}")))?;
                    let f = parse(&source).map_err(|e| Failure::new(2, format!("source: {e}")))?;
                    linear_exact_1d(alpha, a, &u0, &f, modes, x, t)?
                }
            };
            println!("{value:.16e}");
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {}", f.message);
            ExitCode::from(f.code)
        }
    }
}
