//! Command-line front end: certify counts files, sweep radius curves, run
//! coverage experiments, compute product upper bounds and self-check.
//!
//! Every command writes a CSV whose first line is a `#`-prefixed JSON manifest.

pub mod certify;
pub mod coverage;
pub mod curves;
pub mod error;
pub mod manifest;
pub mod pub_report;
pub mod selfcheck;
pub mod synth;

use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};

pub use error::CliError;
pub use manifest::RunManifest;

#[derive(Debug, Parser)]
#[command(name = "smoothcert", version, about = "Randomized smoothing certification toolkit")]
pub struct Cli {
    /// Write output here instead of stdout.
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,

    #[command(flatten)]
    pub common: CommonArgs,

    #[command(subcommand)]
    pub command: Command,
}

/// Settings shared by every command and echoed in each manifest.
#[derive(Debug, Clone, Args)]
pub struct CommonArgs {
    /// Total risk level.
    #[arg(long, global = true, default_value_t = smoothcert::cpm::DEFAULT_ALPHA)]
    pub alpha: f64,

    /// Smoothing noise level; each command has its own default.
    #[arg(long, global = true)]
    pub sigma: Option<f64>,

    /// Selection-round size.
    #[arg(long, global = true, default_value_t = smoothcert::cpm::DEFAULT_N0)]
    pub n0: u64,

    /// Estimation-round size.
    #[arg(long, global = true, default_value_t = smoothcert::cpm::DEFAULT_N)]
    pub n: u64,

    #[arg(long, global = true, default_value_t = 0)]
    pub seed: u64,

    /// Fail with exit code 3 instead of reverting to baseline radii when a solver fails.
    #[arg(long, global = true)]
    pub no_fallback: bool,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Certify every input of a counts file.
    Certify(certify::CertifyArgs),
    /// Radius-versus-p1 curves for the baseline and Lipschitz-adjusted radii.
    Curves(curves::CurvesArgs),
    /// Monte Carlo coverage of a certification procedure.
    Coverage(coverage::CoverageArgs),
    /// Product upper bound of a layer file.
    Pub(pub_report::PubArgs),
    /// Compare core routines against independent reference computations.
    Selfcheck,
    /// Write a synthetic two-phase counts file.
    Synth(synth::SynthArgs),
}

/// Runs a parsed command line and returns the text to emit.
pub fn run(cli: &Cli) -> Result<String, CliError> {
    match &cli.command {
        Command::Certify(args) => certify::run(args, &cli.common),
        Command::Curves(args) => curves::run(args, &cli.common),
        Command::Coverage(args) => coverage::run(args, &cli.common),
        Command::Pub(args) => pub_report::run(args, &cli.common),
        Command::Selfcheck => selfcheck::run(&cli.common),
        Command::Synth(args) => synth::run(args, &cli.common),
    }
}

/// Shortest round-trip decimal, switching to exponent form for very small or large magnitudes.
pub fn fmt_f64(x: f64) -> String {
    let a = x.abs();
    if a != 0.0 && a.is_finite() && !(1e-4..1e15).contains(&a) {
        format!("{x:e}")
    } else {
        format!("{x}")
    }
}

pub(crate) fn sigma_or(common: &CommonArgs, default: f64) -> Result<smoothcert::Sigma, CliError> {
    Ok(smoothcert::Sigma::new(common.sigma.unwrap_or(default))?)
}

pub(crate) fn risk(common: &CommonArgs) -> Result<smoothcert::RiskLevel, CliError> {
    Ok(smoothcert::RiskLevel::new(common.alpha)?)
}
