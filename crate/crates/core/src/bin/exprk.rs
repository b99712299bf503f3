use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use exprk::harness::{self, Execution};
use exprk::problems::{self, ProblemOverrides};
use exprk::tableau::{self, OrderMode};
use exprk::{Error, Norm};

/// Explicit exponential Runge–Kutta integrators for delay equations.
#[derive(Parser)]
#[command(name = "exprk", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Error table and fitted orders against an exact solution.
    Converge(ConvergeArgs),
    /// Trajectory CSV of one run.
    Simulate(SimulateArgs),
    /// Stiff order-condition report for a built-in method.
    Check(CheckArgs),
}

#[derive(Args)]
struct ProblemArgs {
    #[arg(long)]
    problem: String,
    #[arg(long)]
    lambda: Option<f64>,
    #[arg(long)]
    gamma: Option<f64>,
    #[arg(long)]
    beta: Option<f64>,
}

impl ProblemArgs {
    fn overrides(&self) -> ProblemOverrides {
        ProblemOverrides { lambda: self.lambda, gamma: self.gamma, beta: self.beta }
    }
}

#[derive(Args)]
struct ConvergeArgs {
    #[command(flatten)]
    problem: ProblemArgs,
    /// Method name; repeat for several.
    #[arg(long = "method", default_values_t = tableau::BUILTIN_NAMES.map(String::from))]
    methods: Vec<String>,
    /// Step size; repeat for several.
    #[arg(long = "h")]
    hs: Vec<f64>,
    #[arg(long = "T")]
    t_end: Option<f64>,
    #[arg(long)]
    norm: Option<Norm>,
    /// Run the integrations one after another.
    #[arg(long)]
    sequential: bool,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct SimulateArgs {
    #[command(flatten)]
    problem: ProblemArgs,
    #[arg(long, default_value = "expo3")]
    method: String,
    #[arg(long = "h")]
    h: Option<f64>,
    #[arg(long = "T")]
    t_end: Option<f64>,
    #[arg(long, default_value_t = 1)]
    sample_every: usize,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct CheckArgs {
    #[arg(long)]
    method: String,
    #[arg(long)]
    order: u32,
    #[arg(long, default_value = "strong")]
    mode: OrderMode,
}

enum Failure {
    Exprk(Error),
    Io(io::Error),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure::Exprk(e)
    }
}

impl From<io::Error> for Failure {
    fn from(e: io::Error) -> Self {
        Failure::Io(e)
    }
}

fn sink(out: &Option<PathBuf>) -> io::Result<Box<dyn Write>> {
    Ok(match out {
        Some(path) => Box::new(BufWriter::new(File::create(path)?)),
        None => Box::new(BufWriter::new(io::stdout().lock())),
    })
}

fn converge(args: ConvergeArgs) -> Result<ExitCode, Failure> {
    let problem = problems::by_name(&args.problem.problem, args.problem.overrides())?;
    let (t_default, h_default, norm_default) = harness::defaults(&problem.name);
    let hs = if args.hs.is_empty() { h_default } else { args.hs };
    let methods = args.methods.iter().map(|m| tableau::builtin(m)).collect::<Result<Vec<_>, _>>()?;
    let exec = if args.sequential { Execution::Sequential } else { Execution::default() };
    let rows = harness::converge(
        &problem,
        &methods,
        &hs,
        args.t_end.unwrap_or(t_default),
        args.norm.unwrap_or(norm_default),
        exec,
    )?;
    let report = harness::slope_report(&harness::fit_slopes(&rows));
    let mut out = sink(&args.out)?;
    harness::write_converge_csv(&mut out, &rows)?;
    out.flush()?;
    if args.out.is_some() {
        print!("{report}");
    } else {
        eprint!("{report}");
    }
    Ok(ExitCode::SUCCESS)
}

fn simulate(args: SimulateArgs) -> Result<ExitCode, Failure> {
    let problem = problems::by_name(&args.problem.problem, args.problem.overrides())?;
    let (t_default, h_default, _) = harness::defaults(&problem.name);
    let method = tableau::builtin(&args.method)?;
    let h = args.h.unwrap_or(*h_default.last().expect("defaults list a step size"));
    let mut out = sink(&args.out)?;
    harness::simulate(&mut out, &problem, &method, h, args.t_end.unwrap_or(t_default), args.sample_every)?;
    out.flush()?;
    Ok(ExitCode::SUCCESS)
}

fn check(args: CheckArgs) -> Result<ExitCode, Failure> {
    let report = harness::check(&args.method, args.order, args.mode)?;
    println!("{report}");
    Ok(if report.pass { ExitCode::SUCCESS } else { ExitCode::from(1) })
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Converge(a) => converge(a),
        Command::Simulate(a) => simulate(a),
        Command::Check(a) => check(a),
    };
    match result {
        Ok(code) => code,
        Err(Failure::Exprk(e)) => {
            eprintln!("error: {e}");
            match e {
                Error::NonFinite { .. } => ExitCode::from(3),
                _ => ExitCode::from(2),
            }
        }
        Err(Failure::Io(e)) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
    }
}
