use std::fmt::Write as _;
use std::path::PathBuf;

use clap::Args;
use smoothcert::pub_bound::{pub_bound, LayerSpec, PowerIterationOptions};

use crate::coverage::json_error;
use crate::error::CliError;
use crate::manifest::{read_input, RunManifest};
use crate::{fmt_f64, CommonArgs};

#[derive(Debug, Clone, Args)]
pub struct PubArgs {
    /// Layer file: JSON list of layer records.
    pub layers: PathBuf,
}

pub const HEADER: &str = "layer,kind,lipschitz,log_lipschitz,converged";

fn kind(layer: &LayerSpec) -> &'static str {
    match layer {
        LayerSpec::Dense { .. } => "dense",
        LayerSpec::Norm { .. } => "norm",
        LayerSpec::Batchnorm { .. } => "batchnorm",
        LayerSpec::Pooling => "pooling",
        LayerSpec::Activation => "activation",
        LayerSpec::Residual { .. } => "residual",
    }
}

pub fn run(args: &PubArgs, common: &CommonArgs) -> Result<String, CliError> {
    let bytes = read_input(&args.layers)?;
    let layers: Vec<LayerSpec> = serde_json::from_slice(&bytes).map_err(|e| json_error(&args.layers, e))?;
    let opts = PowerIterationOptions { seed: common.seed, ..PowerIterationOptions::default() };
    let result = pub_bound(&layers, opts)?;

    let mut manifest = RunManifest::new("pub", common, common.sigma.unwrap_or(1.0), "product_upper_bound")
        .setting("power_tol", opts.tol)
        .setting("power_max_iters", opts.max_iters as u64);
    manifest.add_input(&args.layers, &bytes);

    let mut out = manifest.header_line()?;
    out.push_str(HEADER);
    out.push('\n');
    for (bound, layer) in result.per_layer.iter().zip(&layers) {
        let _ = writeln!(
            out,
            "{},{},{},{},{}",
            bound.index,
            kind(layer),
            fmt_f64(bound.lipschitz),
            fmt_f64(bound.lipschitz.ln()),
            bound.converged
        );
    }
    let total = result.value().map(fmt_f64).unwrap_or_else(|| "\"overflow, see log\"".to_string());
    let _ = writeln!(out, "total,pub,{total},{},{}", fmt_f64(result.log_pub), result.converged());
    Ok(out)
}
