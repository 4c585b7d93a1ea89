//! Word-level k-gram pipeline: tokenization, context counting, conditional
//! entropy `H(X_k | X^{k-1})`, subsampling curves and bootstrap ranges.

use std::collections::HashMap;

use rand::seq::index;
use rand::RngExt;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dist::Unit;
use crate::entropy::EntropyEstimator;
use crate::error::{Error, Result};
use crate::sim::{rng_from_seed, substream_seed};

/// Largest supported memory length.
pub const MAX_ORDER: usize = 5;

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct TokenizeConfig {
    pub lowercase: bool,
}

/// Token ids plus the id <-> string vocabulary.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct TokenStream {
    tokens: Vec<u32>,
    vocab: Vec<String>,
    index: HashMap<String, u32>,
}

impl TokenStream {
    /// Wraps raw ids; the vocabulary is named by the decimal ids.
    pub fn from_ids(tokens: Vec<u32>) -> Self {
        let size = tokens.iter().map(|&t| t as usize + 1).max().unwrap_or(0);
        let vocab: Vec<String> = (0..size).map(|i| i.to_string()).collect();
        let index = vocab
            .iter()
            .enumerate()
            .map(|(i, s)| (s.clone(), i as u32))
            .collect();
        Self {
            tokens,
            vocab,
            index,
        }
    }

    pub fn tokens(&self) -> &[u32] {
        &self.tokens
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    pub fn vocab_size(&self) -> usize {
        self.vocab.len()
    }

    pub fn token(&self, id: u32) -> Option<&str> {
        self.vocab.get(id as usize).map(String::as_str)
    }

    pub fn id(&self, token: &str) -> Option<u32> {
        self.index.get(token).copied()
    }
}

/// Splits UTF-8 text on Unicode whitespace; ids follow first appearance.
pub fn tokenize(text: &[u8], config: TokenizeConfig) -> Result<TokenStream> {
    let text = std::str::from_utf8(text).map_err(|_| Error::InvalidEncoding)?;
    let mut stream = TokenStream::default();
    for word in text.split_whitespace() {
        let word = if config.lowercase {
            word.to_lowercase()
        } else {
            word.to_string()
        };
        let next = stream.vocab.len() as u32;
        let id = *stream.index.entry(word).or_insert_with_key(|w| {
            stream.vocab.push(w.clone());
            next
        });
        stream.tokens.push(id);
    }
    Ok(stream)
}

/// Counts of `(context, next token)` pairs over all `k`-gram instances.
///
/// Cells are sorted by `(context id, next id)`, so each context owns a
/// contiguous range of cells. Context ids follow first appearance.
#[derive(Debug, Clone)]
pub struct KGramModel {
    k: usize,
    vocab_size: usize,
    context_index: HashMap<Vec<u8>, u32>,
    /// `(context, next)` of every distinct pair.
    cells: Vec<(u32, u32)>,
    counts: Vec<u64>,
    /// `cells[context_ranges[c].0 .. context_ranges[c].1]` belong to context `c`.
    context_ranges: Vec<(usize, usize)>,
    /// Cell of each instance, in corpus order.
    instance_cell: Vec<u32>,
}

fn context_key(ids: &[u32]) -> Vec<u8> {
    ids.iter().flat_map(|id| id.to_le_bytes()).collect()
}

pub fn build_kgram(stream: &TokenStream, k: usize) -> Result<KGramModel> {
    if k == 0 || k > MAX_ORDER {
        return Err(Error::InvalidOrder(k));
    }
    let tokens = stream.tokens();
    if tokens.len() < k {
        return Err(Error::StreamTooShort {
            len: tokens.len(),
            k,
        });
    }
    let mut context_index: HashMap<Vec<u8>, u32> = HashMap::new();
    let pairs: Vec<u64> = (k - 1..tokens.len())
        .map(|t| {
            let fresh = context_index.len() as u32;
            let ctx = *context_index
                .entry(context_key(&tokens[t + 1 - k..t]))
                .or_insert(fresh);
            (u64::from(ctx) << 32) | u64::from(tokens[t])
        })
        .collect();

    let mut sorted = pairs.clone();
    sorted.sort_unstable();
    let mut keys: Vec<u64> = Vec::new();
    let mut counts: Vec<u64> = Vec::new();
    for run in sorted.chunk_by(|a, b| a == b) {
        keys.push(run[0]);
        counts.push(run.len() as u64);
    }
    let instance_cell = pairs
        .iter()
        .map(|p| keys.binary_search(p).expect("pair was tallied") as u32)
        .collect();
    let cells: Vec<(u32, u32)> = keys.iter().map(|&x| ((x >> 32) as u32, x as u32)).collect();
    let mut context_ranges = vec![(0, 0); context_index.len()];
    let mut start = 0;
    for run in cells.chunk_by(|a, b| a.0 == b.0) {
        context_ranges[run[0].0 as usize] = (start, start + run.len());
        start += run.len();
    }
    Ok(KGramModel {
        k,
        vocab_size: stream.vocab_size(),
        context_index,
        cells,
        counts,
        context_ranges,
        instance_cell,
    })
}

impl KGramModel {
    pub fn k(&self) -> usize {
        self.k
    }

    /// Number of `k`-gram instances `n_k`.
    pub fn instances(&self) -> usize {
        self.instance_cell.len()
    }

    pub fn contexts(&self) -> usize {
        self.context_ranges.len()
    }

    pub fn vocab_size(&self) -> usize {
        self.vocab_size
    }

    /// `(next id, count)` pairs observed after `context`, in id order.
    pub fn counts_for(&self, context: &[u32]) -> Option<Vec<(u32, u64)>> {
        let c = *self.context_index.get(&context_key(context))?;
        let (lo, hi) = self.context_ranges[c as usize];
        Some(
            (lo..hi)
                .map(|i| (self.cells[i].1, self.counts[i]))
                .collect(),
        )
    }

    /// `sum_ctx (n_ctx / n) H_hat(next | ctx)` in nats for per-cell counts
    /// laid out like `self.cells`.
    fn conditional_from_counts(&self, counts: &[u64], estimator: &EntropyEstimator) -> Result<f64> {
        let n: u64 = counts.iter().sum();
        if n < 2 {
            return Err(Error::EmptyModel(n));
        }
        let parts = self
            .context_ranges
            .par_iter()
            .map(|&(lo, hi)| {
                let slice = &counts[lo..hi];
                let n_ctx: u64 = slice.iter().sum();
                if n_ctx < estimator.min_samples() {
                    return Ok(0.0);
                }
                let h = estimator.estimate_observed(slice, self.vocab_size)?;
                Ok(n_ctx as f64 / n as f64 * h)
            })
            .collect::<Result<Vec<f64>>>()?;
        Ok(parts.iter().sum())
    }

    fn tally(&self, instances: impl Iterator<Item = usize>) -> Vec<u64> {
        let mut counts = vec![0u64; self.cells.len()];
        for i in instances {
            counts[self.instance_cell[i] as usize] += 1;
        }
        counts
    }
}

/// Conditional entropy of the next token given the previous `k - 1`, in nats.
pub fn conditional_entropy(model: &KGramModel, estimator: &EntropyEstimator) -> Result<f64> {
    model.conditional_from_counts(&model.counts, estimator)
}

/// [`conditional_entropy`] reported in `unit`.
pub fn conditional_entropy_k(
    model: &KGramModel,
    estimator: &EntropyEstimator,
    unit: Unit,
) -> Result<f64> {
    Ok(unit.from_nats(conditional_entropy(model, estimator)?))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CurvePoint {
    pub size: usize,
    pub estimate: f64,
}

/// Estimates on seeded uniform subsets of `size` k-gram instances (drawn
/// without replacement), one point per requested size in input order.
pub fn subsample_curve(
    model: &KGramModel,
    sizes: &[usize],
    estimator: &EntropyEstimator,
    seed: u64,
    unit: Unit,
) -> Result<Vec<CurvePoint>> {
    let available = model.instances();
    if let Some(&size) = sizes.iter().find(|&&s| s > available) {
        return Err(Error::SizeExceedsCorpus { size, available });
    }
    sizes
        .par_iter()
        .enumerate()
        .map(|(i, &size)| {
            let mut rng = rng_from_seed(substream_seed(seed, i as u64));
            let chosen = index::sample(&mut rng, available, size);
            let counts = model.tally(chosen.into_iter());
            let nats = model.conditional_from_counts(&counts, estimator)?;
            Ok(CurvePoint {
                size,
                estimate: unit.from_nats(nats),
            })
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BootstrapSummary {
    pub replicates: usize,
    pub mean: f64,
    /// Sample standard deviation (divisor `B - 1`).
    pub sd: f64,
    pub min: f64,
    pub max: f64,
    pub range: f64,
    #[serde(skip)]
    pub values: Vec<f64>,
}

impl BootstrapSummary {
    pub fn from_values(values: Vec<f64>) -> Self {
        let b = values.len() as f64;
        let mean = values.iter().sum::<f64>() / b;
        let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (b - 1.0).max(1.0);
        let min = values.iter().copied().fold(f64::INFINITY, f64::min);
        let max = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        Self {
            replicates: values.len(),
            mean,
            sd: var.sqrt(),
            min,
            max,
            range: max - min,
            values,
        }
    }
}

/// `replicates` resamples of all `n_k` instances with replacement; replicate
/// `r` draws from substream `r` of `seed`.
pub fn bootstrap_estimate(
    model: &KGramModel,
    replicates: usize,
    estimator: &EntropyEstimator,
    seed: u64,
    unit: Unit,
) -> Result<BootstrapSummary> {
    if replicates < 2 {
        return Err(Error::InvalidConfig(format!(
            "bootstrap needs at least 2 replicates, got {replicates}"
        )));
    }
    let n = model.instances();
    let values = (0..replicates)
        .into_par_iter()
        .map(|r| {
            let mut rng = rng_from_seed(substream_seed(seed, r as u64));
            let counts = model.tally((0..n).map(|_| rng.random_range(0..n)));
            Ok(unit.from_nats(model.conditional_from_counts(&counts, estimator)?))
        })
        .collect::<Result<Vec<f64>>>()?;
    Ok(BootstrapSummary::from_values(values))
}

/// `2^bits`.
pub fn perplexity_from_bits(cross_entropy_bits: f64) -> f64 {
    cross_entropy_bits.exp2()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorpusReport {
    pub k: usize,
    pub estimator: String,
    pub unit: Unit,
    pub estimate: f64,
    pub instances: usize,
    pub contexts: usize,
    pub vocab_size: usize,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub bootstrap: Option<BootstrapSummary>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub curve: Option<Vec<CurvePoint>>,
}

impl CorpusReport {
    pub fn new(model: &KGramModel, estimator: &EntropyEstimator, unit: Unit) -> Result<Self> {
        Ok(Self {
            k: model.k(),
            estimator: estimator.name().to_string(),
            unit,
            estimate: conditional_entropy_k(model, estimator, unit)?,
            instances: model.instances(),
            contexts: model.contexts(),
            vocab_size: model.vocab_size(),
            bootstrap: None,
            curve: None,
        })
    }
}
