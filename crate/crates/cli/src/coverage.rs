use std::fmt::Write as _;
use std::path::PathBuf;

use clap::Args;
use serde::Deserialize;
use smoothcert::coverage::{
    run_coverage_with, search_adversarial_p, CoverageEvent, CoverageExperiment, CoverageReport,
};
use smoothcert::intervals::CachedBounds;

use crate::error::CliError;
use crate::manifest::{read_input, RunManifest};
use crate::{fmt_f64, CommonArgs};

#[derive(Debug, Clone, Args)]
pub struct CoverageArgs {
    /// Experiment file: one JSON experiment object or a list of them.
    pub spec: PathBuf,

    /// Ignore `true_p` and search the 3-class simplex for the worst distribution.
    #[arg(long)]
    pub search: bool,
}

#[derive(Debug, Deserialize)]
#[serde(untagged)]
enum SpecFile {
    One(CoverageExperiment),
    Many(Vec<CoverageExperiment>),
}

pub const HEADER: &str = "stage,procedure,event,true_p,n,alpha,replications,failures,failure_rate,stderr,verdict";

fn event_str(e: CoverageEvent) -> &'static str {
    match e {
        CoverageEvent::Radius => "radius",
        CoverageEvent::Family => "family",
    }
}

pub fn render_row(stage: &str, r: &CoverageReport) -> String {
    let p: Vec<String> = r.true_p.iter().map(|&x| fmt_f64(x)).collect();
    format!(
        "{stage},{},{},{},{},{},{},{},{},{},{}",
        r.procedure.as_str(),
        event_str(r.event),
        p.join(";"),
        r.n,
        fmt_f64(r.alpha.alpha()),
        r.replications,
        r.failures,
        fmt_f64(r.failure_rate),
        fmt_f64(r.mc_stderr),
        r.verdict.as_str()
    )
}

/// JSON syntax errors are data errors; well-formed JSON with invalid values is a configuration error.
pub(crate) fn json_error(path: &std::path::Path, e: serde_json::Error) -> CliError {
    let msg = format!("{}: line {} column {}: {e}", path.display(), e.line(), e.column());
    match e.classify() {
        serde_json::error::Category::Data => CliError::Config(msg),
        _ => CliError::Data(msg),
    }
}

pub fn load_experiments(path: &std::path::Path, bytes: &[u8]) -> Result<Vec<CoverageExperiment>, CliError> {
    match serde_json::from_slice::<SpecFile>(bytes) {
        Ok(SpecFile::One(e)) => Ok(vec![e]),
        Ok(SpecFile::Many(v)) => Ok(v),
        Err(e) => Err(json_error(path, e)),
    }
}

pub fn run(args: &CoverageArgs, common: &CommonArgs) -> Result<String, CliError> {
    let bytes = read_input(&args.spec)?;
    let experiments = load_experiments(&args.spec, &bytes)?;
    if experiments.is_empty() {
        return Err(CliError::Config("experiment list is empty".into()));
    }
    let mut manifest = match experiments.as_slice() {
        [e] => {
            let echo = CommonArgs { alpha: e.alpha.alpha(), n0: e.n0, n: e.n, seed: e.seed, ..common.clone() };
            RunManifest::new("coverage", &echo, e.sigma.value(), e.procedure.as_str())
        }
        _ => RunManifest::new("coverage", common, common.sigma.unwrap_or(1.0), "multiple"),
    }
    .setting("search", args.search)
    .setting("experiments", experiments.len() as u64);
    manifest.add_input(&args.spec, &bytes);

    let bounds = CachedBounds::new();
    let mut out = manifest.header_line()?;
    out.push_str(HEADER);
    out.push('\n');
    for exp in &experiments {
        if args.search {
            let search = search_adversarial_p(exp)?;
            for (i, report) in search.evaluated.iter().enumerate() {
                let stage = if i == search.worst { "worst" } else { "grid" };
                let _ = writeln!(out, "{}", render_row(stage, report));
            }
            let _ = writeln!(out, "{}", render_row("confirm", &search.confirmation));
        } else {
            let report = run_coverage_with(&bounds, exp)?;
            let _ = writeln!(out, "{}", render_row("fixed", &report));
        }
    }
    Ok(out)
}
