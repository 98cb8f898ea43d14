mod commands;
mod output;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use drlqr::Error;
use serde::Serialize;

#[derive(Parser)]
#[command(name = "drlqr", version, about = "Distributionally robust LQR synthesis, approximation and simulation")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Synthesize the worst-case optimal controller on a frequency grid.
    Synth(SynthArgs),
    /// Fit a rational factor to a synthesized spectrum and realize the controller.
    Approx(ApproxArgs),
    /// Worst-case expected cost of a controller at one radius.
    Eval(EvalArgs),
    /// Worst-case cost against radius for the DR, H2 and H-infinity controllers.
    Sweep(SweepArgs),
    /// Monte Carlo running-average cost of a realized controller.
    Sim(SimArgs),
}

#[derive(clap::Args, Serialize)]
pub struct SynthArgs {
    /// System JSON file.
    #[arg(long)]
    pub system: PathBuf,
    /// Wasserstein radius.
    #[arg(long)]
    pub radius: f64,
    /// Frequency grid size (power of two).
    #[arg(long, default_value_t = 1024)]
    pub grid: usize,
    /// Fixed-point tolerance.
    #[arg(long, default_value_t = 1e-9)]
    pub tol: f64,
    /// Tolerance on the radius identity, relative to r².
    #[arg(long, default_value_t = 1e-6)]
    pub gamma_tol: f64,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(clap::Args, Serialize)]
pub struct ApproxArgs {
    /// Spectrum CSV written by `synth`.
    #[arg(long)]
    pub nspec: PathBuf,
    /// System JSON file the spectrum was synthesized for.
    #[arg(long)]
    pub system: PathBuf,
    /// Rational order.
    #[arg(long)]
    pub order: usize,
    /// Bisection tolerance on the approximation error (relative).
    #[arg(long, default_value_t = 1e-6)]
    pub eps_tol: f64,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(clap::Args, Serialize)]
pub struct EvalArgs {
    #[arg(long)]
    pub system: PathBuf,
    /// One of `h2`, `hinf`, `dr:PATH` (controller CSV from `synth`) or
    /// `ss:PATH` (state-space controller JSON from `approx`).
    #[arg(long)]
    pub controller: String,
    #[arg(long)]
    pub radius: f64,
    /// Grid size for `h2`, `hinf` and `ss:` controllers.
    #[arg(long, default_value_t = 1024)]
    pub grid: usize,
    /// Optional directory for `eval.json` and a manifest.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(clap::Args, Serialize)]
pub struct SweepArgs {
    #[arg(long)]
    pub system: PathBuf,
    /// Comma-separated radii.
    #[arg(long, value_delimiter = ',', default_value = "0.01,0.1,0.5,1,1.5,2,5,10")]
    pub radii: Vec<f64>,
    /// Rational orders whose realized controllers are added as columns.
    #[arg(long, value_delimiter = ',')]
    pub orders: Vec<usize>,
    #[arg(long, default_value_t = 1024)]
    pub grid: usize,
    #[arg(long, default_value_t = 1e-9)]
    pub tol: f64,
    #[arg(long, default_value_t = 1e-6)]
    pub gamma_tol: f64,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Clone, Copy, ValueEnum, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Kind {
    White,
    Worst,
}

#[derive(clap::Args, Serialize)]
pub struct SimArgs {
    #[arg(long)]
    pub system: PathBuf,
    /// State-space controller JSON from `approx`.
    #[arg(long)]
    pub controller: PathBuf,
    #[arg(long, value_enum)]
    pub kind: Kind,
    /// Radius of the worst-case disturbance (required for `--kind worst`).
    #[arg(long)]
    pub radius: Option<f64>,
    #[arg(long, default_value_t = 210)]
    pub horizon: usize,
    #[arg(long, default_value_t = 100)]
    pub trials: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// FIR length of the disturbance shaping filter.
    #[arg(long, default_value_t = 256)]
    pub taps: usize,
    #[arg(long, default_value_t = 1024)]
    pub grid: usize,
    #[arg(long)]
    pub out: PathBuf,
}

/// Failure carrying the process exit code.
#[derive(Debug)]
pub struct CliError {
    pub code: u8,
    pub message: String,
}

impl CliError {
    pub fn input(message: impl Into<String>) -> Self {
        Self { code: 2, message: message.into() }
    }
}

impl From<Error> for CliError {
    fn from(e: Error) -> Self {
        let code = match &e {
            Error::Io { .. }
            | Error::Parse(_)
            | Error::Dimension(_)
            | Error::Asymmetric { .. }
            | Error::SingularWeight(_)
            | Error::InvalidInput(_)
            | Error::Unsupported(_)
            | Error::NotStabilizable(_) => 2,
            Error::Infeasible(_) => 4,
            _ => 3,
        };
        Self { code, message: e.to_string() }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Synth(a) => commands::synth(&a),
        Command::Approx(a) => commands::approx(&a),
        Command::Eval(a) => commands::eval(&a),
        Command::Sweep(a) => commands::sweep(&a),
        Command::Sim(a) => commands::sim(&a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {}", e.message);
            ExitCode::from(e.code)
        }
    }
}
