use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::PathBuf;

use clap::{Args, ValueEnum};
use smoothcert::cpm::{certify_bonferroni_full, certify_cpm, certify_pearson_clopper_mono, ClassCounts};
use smoothcert::sampling::{parse_counts, InputCounts, InputId};
use smoothcert::{BinomialObservation, CertifiedRadius, RiskLevel, Sigma};

use crate::error::CliError;
use crate::manifest::{read_input, RunManifest};
use crate::{fmt_f64, risk, CommonArgs};

pub const DEFAULT_SIGMA: f64 = 0.5;

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Method {
    /// One-sided bound on the selected class with `R_mono`.
    #[value(name = "pearson_clopper")]
    PearsonClopper,
    /// Per-class bounds at `alpha / c` with `R_mult`.
    Bonferroni,
    /// Class partitioning with `R_mult`.
    Cpm,
}

impl Method {
    pub fn as_str(self) -> &'static str {
        match self {
            Method::PearsonClopper => "pearson_clopper",
            Method::Bonferroni => "bonferroni",
            Method::Cpm => "cpm",
        }
    }
}

#[derive(Debug, Clone, Args)]
pub struct CertifyArgs {
    /// Counts file (JSON lines).
    pub counts: PathBuf,

    #[arg(long, value_enum, default_value = "cpm")]
    pub method: Method,
}

pub const HEADER: &str =
    "input_id,method,sigma,num_classes,top_class,c_star,alpha_prime,lower_p1,max_upper,radius,status,detail";

/// One output row; `None` fields print empty.
#[derive(Debug, Default, Clone, PartialEq)]
pub struct Row {
    pub input_id: String,
    pub sigma: Option<f64>,
    pub num_classes: Option<usize>,
    pub top_class: Option<usize>,
    pub c_star: Option<usize>,
    pub alpha_prime: Option<f64>,
    pub lower_p1: Option<f64>,
    pub max_upper: Option<f64>,
    pub radius: Option<CertifiedRadius>,
    pub error: Option<String>,
}

fn opt<T>(v: Option<T>, f: impl Fn(T) -> String) -> String {
    v.map(f).unwrap_or_default()
}

fn csv_field(s: &str) -> String {
    if s.contains([',', '"', '\n']) {
        format!("\"{}\"", s.replace('"', "\"\""))
    } else {
        s.to_string()
    }
}

impl Row {
    fn render(&self, method: Method) -> String {
        let (radius, status) = match (&self.error, &self.radius) {
            (Some(_), _) => (String::new(), "error"),
            (None, Some(r)) => match r.radius() {
                Some(v) => (fmt_f64(v), "certified"),
                None => ("abstain".to_string(), "abstain"),
            },
            (None, None) => (String::new(), "error"),
        };
        [
            csv_field(&self.input_id),
            method.as_str().to_string(),
            opt(self.sigma, fmt_f64),
            opt(self.num_classes, |v| v.to_string()),
            opt(self.top_class, |v| v.to_string()),
            opt(self.c_star, |v| v.to_string()),
            opt(self.alpha_prime, fmt_f64),
            opt(self.lower_p1, fmt_f64),
            opt(self.max_upper, fmt_f64),
            radius,
            status.to_string(),
            csv_field(self.error.as_deref().unwrap_or("")),
        ]
        .join(",")
    }
}

/// Pads sparse rounds with trailing zero classes so both rounds share one class count.
fn harmonize(
    selection: Option<&ClassCounts>,
    estimation: &ClassCounts,
) -> smoothcert::Result<(Option<ClassCounts>, ClassCounts)> {
    let c = selection.map_or(0, ClassCounts::num_classes).max(estimation.num_classes());
    let pad = |counts: &ClassCounts| {
        let mut v = counts.counts().to_vec();
        v.resize(c, 0);
        ClassCounts::new(v)
    };
    Ok((selection.map(pad).transpose()?, pad(estimation)?))
}

fn require<'a>(counts: &'a Option<ClassCounts>, phase: &str) -> Result<&'a ClassCounts, String> {
    counts.as_ref().ok_or_else(|| format!("missing {phase} round"))
}

/// Certificate row for one input. Record sigma, when present, takes precedence over `fallback_sigma`.
pub fn certify_input(input: &InputCounts, method: Method, alpha: RiskLevel, fallback_sigma: Sigma) -> Row {
    let sigma = input.sigma.unwrap_or(fallback_sigma);
    let mut row = Row { input_id: input.input_id.to_string(), sigma: Some(sigma.value()), ..Row::default() };
    let outcome = (|| -> Result<(), String> {
        let (selection, estimation) = harmonize(input.selection.as_ref(), require(&input.estimation, "estimation")?)
            .map_err(|e| e.to_string())?;
        let (selection, estimation) = (&selection, &estimation);
        row.num_classes = Some(estimation.num_classes());
        match method {
            Method::PearsonClopper => {
                let i1 = require(selection, "selection")?.argmax_excluding(None);
                let obs =
                    BinomialObservation::new(estimation.get(i1), estimation.total()).map_err(|e| e.to_string())?;
                let radius = certify_pearson_clopper_mono(obs, alpha, sigma);
                let lower = smoothcert::intervals::clopper_pearson_lower(obs, alpha).value;
                row.top_class = Some(i1);
                row.alpha_prime = Some(alpha.alpha());
                row.lower_p1 = Some(lower);
                row.radius = Some(radius);
            }
            Method::Bonferroni | Method::Cpm => {
                let cert = if method == Method::Cpm {
                    certify_cpm(require(selection, "selection")?, estimation, alpha, sigma)
                } else {
                    certify_bonferroni_full(estimation, alpha, sigma)
                }
                .map_err(|e| e.to_string())?;
                row.top_class = Some(cert.partition.i1);
                row.c_star = Some(cert.partition.c_star);
                row.alpha_prime = Some(cert.alpha_prime.alpha());
                row.lower_p1 = Some(cert.lower_p1.value);
                row.max_upper = Some(cert.max_upper.value);
                row.radius = Some(cert.radius);
            }
        }
        Ok(())
    })();
    if let Err(message) = outcome {
        row.error = Some(message);
    }
    row
}

pub fn run(args: &CertifyArgs, common: &CommonArgs) -> Result<String, CliError> {
    let alpha = risk(common)?;
    let sigma = Sigma::new(common.sigma.unwrap_or(DEFAULT_SIGMA))?;
    let bytes = read_input(&args.counts)?;
    let file = parse_counts(bytes.as_slice())?;

    let mut manifest = RunManifest::new("certify", common, sigma.value(), args.method.as_str());
    manifest.add_input(&args.counts, &bytes);

    let mut rejected: BTreeMap<InputId, Vec<String>> = BTreeMap::new();
    for r in &file.rejections {
        rejected.entry(r.input_id.clone()).or_default().push(format!("line {}: {}", r.line, r.message));
    }
    let mut rows: BTreeMap<InputId, Row> = BTreeMap::new();
    for input in file.by_input() {
        let row = match rejected.get(&input.input_id) {
            Some(msgs) => Row { input_id: input.input_id.to_string(), error: Some(msgs.join("; ")), ..Row::default() },
            None => certify_input(&input, args.method, alpha, sigma),
        };
        rows.insert(input.input_id.clone(), row);
    }
    for (id, msgs) in rejected {
        rows.entry(id.clone()).or_insert_with(|| Row {
            input_id: id.to_string(),
            error: Some(msgs.join("; ")),
            ..Row::default()
        });
    }

    let mut out = manifest.header_line()?;
    out.push_str(HEADER);
    out.push('\n');
    for row in rows.values() {
        let _ = writeln!(out, "{}", row.render(args.method));
    }
    Ok(out)
}
