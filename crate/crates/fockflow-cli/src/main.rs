//! `fockflow`: batch front end for gains, trajectories, Monte Carlo checks,
//! operator algebra and coupling series.
//!
//! Exit codes: 0 ok, 2 bad input, 3 resource limit or unwritable output,
//! 4 a check ran and failed.

mod ecs_cmd;
mod flow;
mod manifest;
mod op_cmd;

use std::fmt::Display;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;

#[derive(Parser, Debug)]
#[command(name = "fockflow", version, about = "Exact moment dynamics of polynomial ODEs in truncated Fock space")]
struct Cli {
    /// Worker threads for sample loops; results do not depend on it.
    #[arg(long, global = true)]
    threads: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Build a representation's gain, materialize it and report its structure.
    Gain(GainArgs),
    /// Integrate a representation from an initial ensemble or file.
    Evolve(EvolveArgs),
    /// Monte Carlo moment estimates of the same quantities.
    Oracle(OracleArgs),
    /// Analytic trajectory against Monte Carlo estimates; exit 4 on failure.
    Compare(CompareArgs),
    /// Operator algebra on ladder expressions.
    Op(op_cmd::OpArgs),
    /// Coupling-constant series for the one-mode quadratic oscillator.
    Ecs(ecs_cmd::EcsArgs),
    /// Repeat a run recorded in a manifest.
    Rerun(RerunArgs),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum LayoutArg {
    Plain,
    RealPairs,
    ConjugatePairs,
}

impl From<LayoutArg> for fockflow::fock::Layout {
    fn from(l: LayoutArg) -> Self {
        match l {
            LayoutArg::Plain => fockflow::fock::Layout::Plain,
            LayoutArg::RealPairs => fockflow::fock::Layout::RealPairs,
            LayoutArg::ConjugatePairs => fockflow::fock::Layout::ConjugatePairs,
        }
    }
}

/// System, representation and truncation.
#[derive(Args, Debug, Clone, Serialize)]
pub struct RepArgs {
    #[arg(long)]
    pub system: PathBuf,
    /// One of u v w z bu bv bw Su Sv Sw Sz.
    #[arg(long)]
    pub rep: String,
    #[arg(long)]
    pub cutoff: usize,
    /// Slot layout; defaults to the representation's natural one.
    #[arg(long, value_enum)]
    pub layout: Option<LayoutArg>,
    /// For b kinds: evolve the log-density instead of the density dual.
    #[arg(long)]
    pub entropy: bool,
}

/// Time grid of a trajectory.
#[derive(Args, Debug, Clone, Serialize)]
pub struct GridArgs {
    #[arg(long, default_value_t = 0.0)]
    pub t0: f64,
    #[arg(long)]
    pub t1: Option<f64>,
    #[arg(long)]
    pub dt: f64,
    /// Explicit snapshot times on the grid (overrides --t1/--snapshots).
    #[arg(long, value_delimiter = ',')]
    pub times: Vec<f64>,
    /// Evenly spaced snapshots after t0.
    #[arg(long, default_value_t = 10)]
    pub snapshots: usize,
}

/// Initial ensemble.
#[derive(Args, Debug, Clone, Serialize)]
pub struct EnsembleArgs {
    /// Distribution as inline JSON or a path, e.g.
    /// {"family":"gaussian","mean":[0.5],"stddev":[0.1]}.
    #[arg(long)]
    pub dist: Option<String>,
    #[arg(long, default_value_t = 10_000)]
    pub samples: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
}

#[derive(Args, Debug, Clone, Serialize)]
pub struct GainArgs {
    #[command(flatten)]
    pub rep: RepArgs,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Args, Debug, Clone, Serialize)]
pub struct EvolveArgs {
    #[command(flatten)]
    pub rep: RepArgs,
    #[command(flatten)]
    pub grid: GridArgs,
    #[command(flatten)]
    pub ensemble: EnsembleArgs,
    /// Initial vector or matrix JSON; required for z, b and S kinds.
    #[arg(long)]
    pub init: Option<PathBuf>,
    /// Moment degrees to tabulate for u and v trajectories.
    #[arg(long, value_delimiter = ',', default_values_t = [1usize, 2])]
    pub degrees: Vec<usize>,
    /// Flip the sign of the gain (negative control).
    #[arg(long)]
    pub negate_gain: bool,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Args, Debug, Clone, Serialize)]
pub struct OracleArgs {
    #[command(flatten)]
    pub rep: RepArgs,
    #[command(flatten)]
    pub grid: GridArgs,
    #[command(flatten)]
    pub ensemble: EnsembleArgs,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Args, Debug, Clone, Serialize)]
pub struct CompareArgs {
    /// Trajectory JSON written by `evolve`; with --empirical, skips both runs.
    #[arg(long, requires = "empirical")]
    pub analytic: Option<PathBuf>,
    /// Estimates JSON written by `oracle`.
    #[arg(long, requires = "analytic")]
    pub empirical: Option<PathBuf>,
    #[arg(long)]
    pub system: Option<PathBuf>,
    #[arg(long)]
    pub rep: Option<String>,
    #[arg(long)]
    pub cutoff: Option<usize>,
    #[arg(long, value_enum)]
    pub layout: Option<LayoutArg>,
    #[arg(long, default_value_t = 0.0)]
    pub t0: f64,
    #[arg(long)]
    pub t1: Option<f64>,
    #[arg(long)]
    pub dt: Option<f64>,
    #[arg(long, value_delimiter = ',')]
    pub times: Vec<f64>,
    #[arg(long, default_value_t = 10)]
    pub snapshots: usize,
    #[command(flatten)]
    pub ensemble: EnsembleArgs,
    /// Flip the sign of the gain (negative control).
    #[arg(long)]
    pub negate_gain: bool,
    #[arg(long, value_delimiter = ',', default_values_t = [1usize, 2])]
    pub degrees: Vec<usize>,
    /// Model tolerance relative to the empirical value.
    #[arg(long, default_value_t = 0.01)]
    pub rel_tol: f64,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Args, Debug, Clone)]
pub struct RerunArgs {
    #[arg(long)]
    pub manifest: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    /// Exit 4 unless every output matches the recorded digest.
    #[arg(long)]
    pub check: bool,
}

/// Why a command stopped, mapped onto the exit-code contract.
#[derive(Debug)]
pub enum Failure {
    Input(String),
    Resource(String),
    Verdict(String),
}

impl Failure {
    fn code(&self) -> u8 {
        match self {
            Failure::Input(_) => 2,
            Failure::Resource(_) => 3,
            Failure::Verdict(_) => 4,
        }
    }

    fn message(&self) -> &str {
        match self {
            Failure::Input(m) | Failure::Resource(m) | Failure::Verdict(m) => m,
        }
    }
}

impl From<fockflow::Error> for Failure {
    fn from(e: fockflow::Error) -> Self {
        if e.is_resource() {
            Failure::Resource(e.to_string())
        } else {
            Failure::Input(e.to_string())
        }
    }
}

pub fn input_err(e: impl Display) -> Failure {
    Failure::Input(e.to_string())
}

pub type CmdResult<T = ()> = Result<T, Failure>;

fn dispatch(command: Command, argv: &[String]) -> CmdResult {
    match command {
        Command::Gain(a) => flow::gain(&a, argv),
        Command::Evolve(a) => flow::evolve(&a, argv),
        Command::Oracle(a) => flow::oracle(&a, argv),
        Command::Compare(a) => flow::compare(&a, argv),
        Command::Op(a) => op_cmd::run(&a),
        Command::Ecs(a) => ecs_cmd::run(&a, argv),
        Command::Rerun(a) => rerun(&a),
    }
}

/// Parses `argv` (without the program name) and runs it on a pool sized by
/// `--threads`.
fn run_argv(argv: &[String]) -> CmdResult {
    let cli = Cli::try_parse_from(std::iter::once("fockflow".to_string()).chain(argv.iter().cloned()))
        .map_err(|e| Failure::Input(e.to_string()))?;
    let mut pool = rayon::ThreadPoolBuilder::new();
    if let Some(t) = cli.threads {
        if t == 0 {
            return Err(Failure::Input("--threads must be positive".into()));
        }
        pool = pool.num_threads(t);
    }
    let pool = pool.build().map_err(|e| Failure::Resource(e.to_string()))?;
    pool.install(|| dispatch(cli.command, argv))
}

fn rerun(a: &RerunArgs) -> CmdResult {
    let recorded = manifest::RunManifest::load(&a.manifest)?;
    for f in &recorded.inputs {
        let now = manifest::sha256_file(std::path::Path::new(&f.path))?;
        if now != f.sha256 {
            return Err(Failure::Input(format!("input {} changed since the recorded run", f.path)));
        }
    }
    let argv = manifest::replace_out(&recorded.argv, &a.out);
    match run_argv(&argv) {
        Ok(()) | Err(Failure::Verdict(_)) => {}
        Err(e) => return Err(e),
    }
    if a.check {
        let fresh = manifest::RunManifest::load(&a.out.join(manifest::MANIFEST_NAME))?;
        let differ: Vec<&str> = recorded
            .outputs
            .iter()
            .filter(|f| !fresh.outputs.iter().any(|g| g.path == f.path && g.sha256 == f.sha256))
            .map(|f| f.path.as_str())
            .collect();
        if !differ.is_empty() || fresh.outputs.len() != recorded.outputs.len() {
            return Err(Failure::Verdict(format!("outputs differ from the recorded run: {differ:?}")));
        }
        println!("rerun reproduced {} outputs bitwise", recorded.outputs.len());
    }
    Ok(())
}

fn main() -> ExitCode {
    let argv: Vec<String> = std::env::args().skip(1).collect();
    // Let clap print help and version itself.
    if let Err(e) = Cli::try_parse_from(std::iter::once("fockflow".to_string()).chain(argv.iter().cloned())) {
        let code = if e.use_stderr() { 2 } else { 0 };
        let _ = e.print();
        return ExitCode::from(code);
    }
    match run_argv(&argv) {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {}", f.message());
            ExitCode::from(f.code())
        }
    }
}
