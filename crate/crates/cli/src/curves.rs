use std::fmt::Write as _;

use clap::Args;
use smoothcert::lipschitz::{radius_mono_lip, radius_mult_lip, try_radius_mono_lip, try_radius_mult_lip};
use smoothcert::radii::{radius_mono, radius_mult};
use smoothcert::{CertifiedRadius, LipschitzSpec, Sigma, TopTwoProbabilities};

use crate::error::CliError;
use crate::manifest::RunManifest;
use crate::{fmt_f64, sigma_or, CommonArgs};

pub const DEFAULT_SIGMA: f64 = 0.12;

#[derive(Debug, Clone, Args)]
pub struct CurvesArgs {
    /// Lipschitz constant of the base classifier, input units.
    #[arg(long = "lipschitz", default_value_t = 4.0)]
    pub lipschitz: f64,

    /// Fixed runner-up probability.
    #[arg(long, default_value_t = 0.1)]
    pub p2: f64,

    #[arg(long, default_value_t = 0.11)]
    pub p1_min: f64,

    #[arg(long, default_value_t = 0.999)]
    pub p1_max: f64,

    #[arg(long, default_value_t = 100)]
    pub points: usize,
}

pub const HEADER: &str = "p1,r_mono,r_mult,r_mono_lip,r_mult_lip,simplex_feasible,fell_back";

/// Radii at one grid point.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CurvePoint {
    pub p1: f64,
    pub mono: CertifiedRadius,
    pub mult: CertifiedRadius,
    pub mono_lip: CertifiedRadius,
    pub mult_lip: CertifiedRadius,
}

impl CurvePoint {
    pub fn fell_back(&self) -> bool {
        self.mono_lip.fell_back || self.mult_lip.fell_back
    }
}

fn cell(r: &CertifiedRadius) -> String {
    r.radius().map(fmt_f64).unwrap_or_else(|| "abstain".to_string())
}

/// Evenly spaced grid from `lo` to `hi` inclusive.
pub fn linspace(lo: f64, hi: f64, points: usize) -> Vec<f64> {
    match points {
        0 => Vec::new(),
        1 => vec![lo],
        _ => (0..points).map(|i| lo + (hi - lo) * i as f64 / (points - 1) as f64).collect(),
    }
}

pub fn curve_point(p1: f64, p2: f64, lipschitz: f64, sigma: Sigma, fallback: bool) -> Result<CurvePoint, CliError> {
    let spec = LipschitzSpec::pointwise(lipschitz)?;
    let pair = TopTwoProbabilities::relaxed(p1, p2)?;
    let (mono_lip, mult_lip) = if fallback {
        (radius_mono_lip(p1, spec, sigma), radius_mult_lip(pair, spec, spec, sigma))
    } else {
        (try_radius_mono_lip(p1, spec, sigma, None)?, try_radius_mult_lip(pair, spec, spec, sigma)?)
    };
    Ok(CurvePoint { p1, mono: radius_mono(p1, sigma), mult: radius_mult(pair, sigma), mono_lip, mult_lip })
}

pub fn curve(args: &CurvesArgs, sigma: Sigma, fallback: bool) -> Result<Vec<CurvePoint>, CliError> {
    if !(args.p1_min > 0.0 && args.p1_max < 1.0 && args.p1_min <= args.p1_max) {
        return Err(CliError::Config(format!("p1 grid must lie in (0, 1), got [{}, {}]", args.p1_min, args.p1_max)));
    }
    if !(args.p2 > 0.0 && args.p2 < 1.0) {
        return Err(CliError::Config(format!("p2 must lie in (0, 1), got {}", args.p2)));
    }
    if args.points == 0 {
        return Err(CliError::Config("points must be positive".into()));
    }
    linspace(args.p1_min, args.p1_max, args.points)
        .into_iter()
        .map(|p1| curve_point(p1, args.p2, args.lipschitz, sigma, fallback))
        .collect()
}

pub fn run(args: &CurvesArgs, common: &CommonArgs) -> Result<String, CliError> {
    let sigma = sigma_or(common, DEFAULT_SIGMA)?;
    let points = curve(args, sigma, !common.no_fallback)?;
    let manifest = RunManifest::new("curves", common, sigma.value(), "radii")
        .setting("lipschitz", args.lipschitz)
        .setting("p2", args.p2)
        .setting("p1_min", args.p1_min)
        .setting("p1_max", args.p1_max)
        .setting("points", args.points as u64)
        .setting("fallback", !common.no_fallback);
    let mut out = manifest.header_line()?;
    out.push_str(HEADER);
    out.push('\n');
    for pt in &points {
        let _ = writeln!(
            out,
            "{},{},{},{},{},{},{}",
            fmt_f64(pt.p1),
            cell(&pt.mono),
            cell(&pt.mult),
            cell(&pt.mono_lip),
            cell(&pt.mult_lip),
            pt.p1 + args.p2 <= 1.0,
            pt.fell_back()
        );
    }
    Ok(out)
}
