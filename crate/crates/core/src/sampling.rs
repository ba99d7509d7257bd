//! Monte Carlo count collection, synthetic oracles and the counts-file format.
//!
//! Every noise draw is addressed by `(seed, stream, index)` in a ChaCha8 key
//! stream, so counts do not depend on batch size or evaluation order.
//!
//! Counts files hold one JSON object per line:
//!
//! ```text
//! {"input_id": 7, "phase": "selection", "n": 100, "num_classes": 10, "counts": {"0": 93, "4": 7}, "sigma": 0.5, "model_tag": "resnet"}
//! ```
//!
//! Blank lines and lines starting with `#` are skipped. `counts` is sparse and
//! keyed by 0-based class id. `num_classes`, `sigma` and `model_tag` are
//! optional; without `num_classes` the class count is one more than the
//! largest key.

use std::cmp::Ordering;
use std::collections::{BTreeMap, HashSet};
use std::fmt;
use std::io::{BufRead, Write};
use std::path::Path;

use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Binomial, Distribution};
use serde::{Deserialize, Serialize};

use crate::cpm::ClassCounts;
use crate::error::{Error, Result};
use crate::lipschitz::{extremal_g, solve_s0, ExtremalSolution};
use crate::normal::{Probability, Sigma};
use crate::quadrature::integrate_with_breaks;

/// Tolerance on `sum(p) = 1` for probability vectors.
pub const SIMPLEX_TOLERANCE: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Phase {
    Selection,
    Estimation,
}

impl Phase {
    pub fn as_str(self) -> &'static str {
        match self {
            Phase::Selection => "selection",
            Phase::Estimation => "estimation",
        }
    }
}

/// Key-stream selector. Selection and estimation rounds of one input get distinct streams.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct StreamId(pub u64);

impl StreamId {
    pub fn for_input(input_index: u64, phase: Phase) -> Self {
        let tag = match phase {
            Phase::Selection => 0,
            Phase::Estimation => 1,
        };
        StreamId(input_index.wrapping_mul(2).wrapping_add(tag))
    }
}

/// Random words reserved for a single sample.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct NoiseDraw {
    pub index: u64,
    words: [u64; 2],
}

impl NoiseDraw {
    pub fn from_words(index: u64, words: [u64; 2]) -> Self {
        Self { index, words }
    }

    /// Uniform on `[0, 1)` from the first word.
    pub fn uniform(&self) -> f64 {
        (self.words[0] >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
    }

    /// Standard normal by Box-Muller on both words.
    pub fn gaussian(&self) -> f64 {
        let scale = 1.0 / (1u64 << 53) as f64;
        // shift into (0, 1] so the log is finite
        let u1 = ((self.words[0] >> 11) + 1) as f64 * scale;
        let u2 = (self.words[1] >> 11) as f64 * scale;
        (-2.0 * u1.ln()).sqrt() * (std::f64::consts::TAU * u2).cos()
    }
}

/// Random-access generator of [`NoiseDraw`]s for one `(seed, stream)`.
#[derive(Debug, Clone)]
pub struct NoiseSource {
    rng: ChaCha8Rng,
    next: u64,
}

impl NoiseSource {
    pub fn new(seed: u64, stream: StreamId) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(stream.0);
        Self { rng, next: 0 }
    }

    /// Positions the source so the next draw has index `index`.
    pub fn seek(&mut self, index: u64) {
        self.rng.set_word_pos(index as u128 * 4);
        self.next = index;
    }

    pub fn next_draw(&mut self) -> NoiseDraw {
        let words = [self.rng.next_u64(), self.rng.next_u64()];
        let draw = NoiseDraw::from_words(self.next, words);
        self.next += 1;
        draw
    }

    pub fn draw(&mut self, index: u64) -> NoiseDraw {
        self.seek(index);
        self.next_draw()
    }
}

/// Base classifier composed with noise: maps a noise draw to a 0-based class id.
pub trait ClassifierOracle {
    fn num_classes(&self) -> usize;
    fn predict(&self, input_id: u64, noise: &NoiseDraw) -> Result<usize>;
}

/// Categorical distribution sampled by inverse CDF.
#[derive(Debug, Clone, PartialEq)]
pub struct Multinomial {
    p: Vec<f64>,
    cumulative: Vec<f64>,
}

impl Multinomial {
    pub fn new(p: Vec<f64>) -> Result<Self> {
        if p.is_empty() {
            return Err(Error::Config("probability vector is empty".into()));
        }
        if let Some(bad) = p.iter().find(|&&x| !(x.is_finite() && x >= 0.0)) {
            return Err(Error::Config(format!("probability entries must be finite and nonnegative, got {bad}")));
        }
        let total: f64 = p.iter().sum();
        if (total - 1.0).abs() > SIMPLEX_TOLERANCE {
            return Err(Error::Config(format!("probabilities sum to {total}, not 1")));
        }
        let mut acc = 0.0;
        let cumulative = p
            .iter()
            .map(|&x| {
                acc += x;
                acc
            })
            .collect();
        Ok(Self { p, cumulative })
    }

    pub fn probabilities(&self) -> &[f64] {
        &self.p
    }

    pub fn num_classes(&self) -> usize {
        self.p.len()
    }

    /// Class whose cumulative interval contains `u` in `[0, 1)`. Zero-mass classes are never returned.
    pub fn class_for(&self, u: f64) -> usize {
        let scaled = u * self.cumulative[self.cumulative.len() - 1];
        let idx = self.cumulative.partition_point(|&c| c <= scaled);
        let idx = idx.min(self.p.len() - 1);
        // rounding at the top end can land on a trailing zero-mass class
        (0..=idx).rev().find(|&i| self.p[i] > 0.0).unwrap_or(idx)
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> usize {
        self.class_for(rng.random::<f64>())
    }

    /// Counts of `m` draws, one conditional binomial per class.
    pub fn sample_counts<R: Rng + ?Sized>(&self, m: u64, rng: &mut R) -> Vec<u64> {
        let mut counts = vec![0u64; self.p.len()];
        let mut left = m;
        let mut mass_left = 1.0;
        for (i, &pi) in self.p.iter().enumerate() {
            if left == 0 {
                break;
            }
            if i + 1 == self.p.len() || pi >= mass_left {
                counts[i] = left;
                break;
            }
            let q = (pi / mass_left).clamp(0.0, 1.0);
            let k = Binomial::new(left, q).expect("valid binomial parameters").sample(rng);
            counts[i] = k;
            left -= k;
            mass_left -= pi;
        }
        counts
    }
}

/// One categorical draw from `p`.
pub fn multinomial_sample<R: Rng + ?Sized>(p: &[f64], rng: &mut R) -> Result<usize> {
    Ok(Multinomial::new(p.to_vec())?.sample(rng))
}

/// Ground-truth oracle whose hard predictions follow a fixed class distribution.
#[derive(Debug, Clone, PartialEq)]
pub struct MultinomialOracle {
    dist: Multinomial,
}

impl MultinomialOracle {
    pub fn new(p: Vec<f64>) -> Result<Self> {
        let dist = Multinomial::new(p)?;
        if dist.num_classes() < 2 {
            return Err(Error::Config("oracle needs at least two classes".into()));
        }
        Ok(Self { dist })
    }

    pub fn distribution(&self) -> &Multinomial {
        &self.dist
    }
}

impl ClassifierOracle for MultinomialOracle {
    fn num_classes(&self) -> usize {
        self.dist.num_classes()
    }

    fn predict(&self, _input_id: u64, noise: &NoiseDraw) -> Result<usize> {
        Ok(self.dist.class_for(noise.uniform()))
    }
}

/// Always predicts the same class.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ConstantOracle {
    pub class: usize,
    pub num_classes: usize,
}

impl ClassifierOracle for ConstantOracle {
    fn num_classes(&self) -> usize {
        self.num_classes
    }

    fn predict(&self, _input_id: u64, _noise: &NoiseDraw) -> Result<usize> {
        Ok(self.class)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SamplingConfig {
    pub n0: u64,
    pub n: u64,
    pub sigma: Sigma,
    pub seed: u64,
    pub batch: u64,
}

impl SamplingConfig {
    pub fn new(n0: u64, n: u64, sigma: Sigma, seed: u64, batch: u64) -> Result<Self> {
        if n0 == 0 || n == 0 || batch == 0 {
            return Err(Error::Config(format!(
                "round sizes and batch must be positive (n0={n0}, n={n}, batch={batch})"
            )));
        }
        Ok(Self { n0, n, sigma, seed, batch })
    }
}

/// Size and key stream of one sampling round.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Round {
    pub size: u64,
    pub seed: u64,
    pub stream: StreamId,
    pub batch: u64,
}

/// Counts the oracle's predictions over one round of noise draws.
pub fn collect_counts<O: ClassifierOracle + ?Sized>(oracle: &O, input_id: u64, round: Round) -> Result<ClassCounts> {
    if round.size == 0 || round.batch == 0 {
        return Err(Error::Config("round size and batch must be positive".into()));
    }
    let c = oracle.num_classes();
    let mut counts = vec![0u64; c];
    let mut source = NoiseSource::new(round.seed, round.stream);
    let mut start = 0;
    while start < round.size {
        let end = (start + round.batch).min(round.size);
        source.seek(start);
        for _ in start..end {
            let draw = source.next_draw();
            let class = oracle
                .predict(input_id, &draw)
                .map_err(|e| Error::Oracle { index: draw.index, message: e.to_string() })?;
            if class >= c {
                return Err(Error::Oracle {
                    index: draw.index,
                    message: format!("class {class} out of range for {c} classes"),
                });
            }
            counts[class] += 1;
        }
        start = end;
    }
    ClassCounts::new(counts)
}

/// Selection and estimation counts for one input on disjoint streams.
pub fn collect_two_phase<O: ClassifierOracle + ?Sized>(
    oracle: &O,
    input_id: u64,
    config: &SamplingConfig,
) -> Result<(ClassCounts, ClassCounts)> {
    let round = |size, phase| Round {
        size,
        seed: config.seed,
        stream: StreamId::for_input(input_id, phase),
        batch: config.batch,
    };
    let selection = collect_counts(oracle, input_id, round(config.n0, Phase::Selection))?;
    let estimation = collect_counts(oracle, input_id, round(config.n, Phase::Estimation))?;
    Ok((selection, estimation))
}

/// Soft binary classifier built from the extremal ramp: `F(u) = g*(u / sigma)`.
///
/// Its Gaussian smoothing at the origin equals `p_target` and its Lipschitz
/// constant in input units is `L / sigma`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ExtremalClassifier {
    pub solution: ExtremalSolution,
    /// Lipschitz constant in unit-noise coordinates.
    pub lipschitz: f64,
    pub sigma: Sigma,
}

pub fn lipschitz_1d_oracle(lipschitz: f64, p_target: Probability, sigma: Sigma) -> Result<ExtremalClassifier> {
    let solution = solve_s0(p_target.value(), lipschitz)?;
    Ok(ExtremalClassifier { solution, lipschitz, sigma })
}

impl ExtremalClassifier {
    pub fn soft_value(&self, u: f64) -> f64 {
        extremal_g(u / self.sigma.value(), &self.solution, self.lipschitz)
    }

    pub fn lipschitz_input_units(&self) -> f64 {
        self.lipschitz / self.sigma.value()
    }

    /// `E[F(x + delta)]` with `delta ~ N(0, sigma^2)`, by quadrature.
    pub fn smoothed_value(&self, x: f64) -> f64 {
        // substitute t = (x + delta) / sigma so the kinks sit at fixed points
        let shift = x / self.sigma.value();
        let density = |t: f64| crate::normal::std_normal_pdf(t - shift);
        let breaks = [self.solution.s0, self.solution.s1];
        integrate_with_breaks(
            |t| extremal_g(t, &self.solution, self.lipschitz) * density(t),
            shift - 40.0,
            shift + 40.0,
            &breaks,
            1e-15,
        )
    }

    /// `L [Phi(s1) - Phi(s0)] / sigma`, the directional derivative at the origin.
    pub fn analytic_slope(&self) -> f64 {
        self.solution.objective / self.sigma.value()
    }

    /// Monte Carlo estimate of the smoothed value at `x` and its standard error.
    pub fn monte_carlo_mean(&self, x: f64, draws: u64, seed: u64, stream: StreamId) -> (f64, f64) {
        let mut source = NoiseSource::new(seed, stream);
        let (mut sum, mut sum_sq) = (0.0, 0.0);
        for _ in 0..draws {
            let v = self.soft_value(x + self.sigma.value() * source.next_draw().gaussian());
            sum += v;
            sum_sq += v * v;
        }
        let m = draws as f64;
        let mean = sum / m;
        let var = (sum_sq / m - mean * mean).max(0.0);
        (mean, (var / m).sqrt())
    }
}

/// Identifier of an input in a counts file; numbers order numerically, before strings.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(untagged)]
pub enum InputId {
    Number(u64),
    Text(String),
}

impl Ord for InputId {
    fn cmp(&self, other: &Self) -> Ordering {
        match (self, other) {
            (InputId::Number(a), InputId::Number(b)) => a.cmp(b),
            (InputId::Number(_), InputId::Text(_)) => Ordering::Less,
            (InputId::Text(_), InputId::Number(_)) => Ordering::Greater,
            (InputId::Text(a), InputId::Text(b)) => a.cmp(b),
        }
    }
}

impl PartialOrd for InputId {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl fmt::Display for InputId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            InputId::Number(n) => write!(f, "{n}"),
            InputId::Text(s) => f.write_str(s),
        }
    }
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawRecord {
    input_id: InputId,
    phase: Phase,
    n: i64,
    #[serde(default)]
    num_classes: Option<usize>,
    counts: BTreeMap<String, i64>,
    #[serde(default)]
    sigma: Option<f64>,
    #[serde(default)]
    model_tag: Option<String>,
}

#[derive(Debug, Serialize)]
struct RawRecordOut<'a> {
    input_id: &'a InputId,
    phase: Phase,
    n: u64,
    num_classes: usize,
    counts: BTreeMap<usize, u64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    sigma: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    model_tag: Option<&'a str>,
}

/// A validated counts-file line.
#[derive(Debug, Clone, PartialEq)]
pub struct CountsRecord {
    pub input_id: InputId,
    pub phase: Phase,
    pub counts: ClassCounts,
    pub sigma: Option<Sigma>,
    pub model_tag: Option<String>,
    pub line: usize,
}

/// A line that parsed but failed validation.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Rejection {
    pub line: usize,
    pub input_id: InputId,
    /// Input id and phase, for messages.
    pub record: String,
    pub message: String,
}

impl Rejection {
    pub fn to_error(&self) -> Error {
        Error::InvalidRecord { record: self.record.clone(), message: format!("line {}: {}", self.line, self.message) }
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct CountsFile {
    pub records: Vec<CountsRecord>,
    pub rejections: Vec<Rejection>,
}

/// Both rounds of one input, when present.
#[derive(Debug, Clone, PartialEq)]
pub struct InputCounts {
    pub input_id: InputId,
    pub selection: Option<ClassCounts>,
    pub estimation: Option<ClassCounts>,
    pub sigma: Option<Sigma>,
    pub model_tag: Option<String>,
}

fn validate(raw: RawRecord, line: usize) -> std::result::Result<CountsRecord, String> {
    if raw.n <= 0 {
        return Err(format!("declared n must be positive, got {}", raw.n));
    }
    let mut sparse = BTreeMap::new();
    for (key, &count) in &raw.counts {
        let class: usize = key.trim().parse().map_err(|_| format!("class key {key:?} is not a nonnegative integer"))?;
        if count < 0 {
            return Err(format!("negative count {count} for class {class}"));
        }
        if sparse.insert(class, count as u64).is_some() {
            return Err(format!("class {class} listed twice"));
        }
    }
    let inferred = sparse.keys().next_back().map_or(0, |&k| k + 1);
    let c = raw.num_classes.unwrap_or(inferred.max(2));
    if c < 2 {
        return Err(format!("num_classes must be at least 2, got {c}"));
    }
    if inferred > c {
        return Err(format!("class {} out of range for {c} classes", inferred - 1));
    }
    let mut dense = vec![0u64; c];
    for (class, count) in sparse {
        dense[class] = count;
    }
    let sum: u64 = dense.iter().sum();
    if sum != raw.n as u64 {
        return Err(format!("counts sum to {sum} but n = {}", raw.n));
    }
    let sigma = raw.sigma.map(Sigma::new).transpose().map_err(|e| e.to_string())?;
    let counts = ClassCounts::new(dense).map_err(|e| e.to_string())?;
    Ok(CountsRecord { input_id: raw.input_id, phase: raw.phase, counts, sigma, model_tag: raw.model_tag, line })
}

/// Parses a counts stream. Malformed JSON is fatal; invariant violations reject only their line.
pub fn parse_counts<R: BufRead>(reader: R) -> Result<CountsFile> {
    let mut file = CountsFile::default();
    let mut seen = HashSet::new();
    for (i, line) in reader.lines().enumerate() {
        let number = i + 1;
        let line = line?;
        if line.trim().is_empty() || line.starts_with('#') {
            continue;
        }
        let raw: RawRecord =
            serde_json::from_str(&line).map_err(|e| Error::Parse { line: number, message: e.to_string() })?;
        let label = format!("{} ({})", raw.input_id, raw.phase.as_str());
        let id = raw.input_id.clone();
        match validate(raw, number) {
            Ok(record) => {
                if !seen.insert((record.input_id.clone(), record.phase)) {
                    file.rejections.push(Rejection {
                        line: number,
                        input_id: record.input_id,
                        record: label,
                        message: "duplicate phase for input".into(),
                    });
                    continue;
                }
                file.records.push(record);
            }
            Err(message) => file.rejections.push(Rejection { line: number, input_id: id, record: label, message }),
        }
    }
    Ok(file)
}

pub fn ingest_counts_file(path: impl AsRef<Path>) -> Result<CountsFile> {
    let path = path.as_ref();
    let file = std::fs::File::open(path).map_err(|e| Error::Io(format!("{}: {e}", path.display())))?;
    parse_counts(std::io::BufReader::new(file))
}

impl CountsFile {
    /// Groups records by input id, sorted by id. Sigma and tag come from the first record that has them.
    pub fn by_input(&self) -> Vec<InputCounts> {
        let mut grouped: BTreeMap<InputId, InputCounts> = BTreeMap::new();
        for rec in &self.records {
            let entry = grouped.entry(rec.input_id.clone()).or_insert_with(|| InputCounts {
                input_id: rec.input_id.clone(),
                selection: None,
                estimation: None,
                sigma: None,
                model_tag: None,
            });
            match rec.phase {
                Phase::Selection => entry.selection = Some(rec.counts.clone()),
                Phase::Estimation => entry.estimation = Some(rec.counts.clone()),
            }
            entry.sigma = entry.sigma.or(rec.sigma);
            if entry.model_tag.is_none() {
                entry.model_tag = rec.model_tag.clone();
            }
        }
        grouped.into_values().collect()
    }
}

/// Writes one record as a counts-file line with sparse counts.
pub fn write_counts_record<W: Write>(
    out: &mut W,
    input_id: &InputId,
    phase: Phase,
    counts: &ClassCounts,
    sigma: Option<Sigma>,
    model_tag: Option<&str>,
) -> Result<()> {
    let sparse = counts.counts().iter().enumerate().filter(|(_, &c)| c > 0).map(|(i, &c)| (i, c)).collect();
    let rec = RawRecordOut {
        input_id,
        phase,
        n: counts.total(),
        num_classes: counts.num_classes(),
        counts: sparse,
        sigma: sigma.map(Sigma::value),
        model_tag,
    };
    let line = serde_json::to_string(&rec).map_err(|e| Error::Io(e.to_string()))?;
    writeln!(out, "{line}")?;
    Ok(())
}
