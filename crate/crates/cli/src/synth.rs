use clap::Args;
use smoothcert::sampling::{collect_two_phase, write_counts_record, InputId, MultinomialOracle, Phase, SamplingConfig};

use crate::error::CliError;
use crate::manifest::RunManifest;
use crate::{sigma_or, CommonArgs};

#[derive(Debug, Clone, Args)]
pub struct SynthArgs {
    #[arg(long, default_value_t = 3)]
    pub inputs: u64,

    #[arg(long, default_value_t = 10)]
    pub classes: usize,

    /// Samples evaluated per batch; does not affect the counts.
    #[arg(long, default_value_t = 4096)]
    pub batch: u64,
}

/// Class distribution of input `id`: 0.8, 0.15, 0.04 on three rotating classes, the rest uniform.
pub fn concentrated_profile(id: u64, classes: usize) -> Vec<f64> {
    let mut p = vec![0.01 / (classes - 3) as f64; classes];
    let top = id as usize % classes;
    for (offset, mass) in [0.8, 0.15, 0.04].into_iter().enumerate() {
        p[(top + offset) % classes] = mass;
    }
    p
}

pub fn run(args: &SynthArgs, common: &CommonArgs) -> Result<String, CliError> {
    if args.classes < 4 {
        return Err(CliError::Config(format!("synthetic profile needs at least 4 classes, got {}", args.classes)));
    }
    let sigma = sigma_or(common, crate::certify::DEFAULT_SIGMA)?;
    let config = SamplingConfig::new(common.n0, common.n, sigma, common.seed, args.batch)?;
    let manifest = RunManifest::new("synth", common, sigma.value(), "concentrated_multinomial")
        .setting("inputs", args.inputs)
        .setting("classes", args.classes as u64);
    let mut out = manifest.header_line()?.into_bytes();
    for id in 0..args.inputs {
        let oracle = MultinomialOracle::new(concentrated_profile(id, args.classes))?;
        let (selection, estimation) = collect_two_phase(&oracle, id, &config)?;
        let input = InputId::Number(id);
        write_counts_record(&mut out, &input, Phase::Selection, &selection, Some(sigma), Some("synthetic"))?;
        write_counts_record(&mut out, &input, Phase::Estimation, &estimation, Some(sigma), Some("synthetic"))?;
    }
    String::from_utf8(out).map_err(|e| CliError::Data(e.to_string()))
}
