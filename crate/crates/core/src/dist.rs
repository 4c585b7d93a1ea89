//! Count histograms, probability vectors and the plug-in Shannon entropy.
//!
//! Every entropy in this crate is measured in nats. Conversion to bits only
//! happens at the presentation layer through [`Unit`].

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Tolerance on the total mass of a [`ProbVector`].
pub const PROB_SUM_TOL: f64 = 1e-12;

/// Per-symbol occurrence counts over a dense alphabet `[0, S)`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Counts {
    counts: Vec<u64>,
    n: u64,
}

impl Counts {
    /// Builds counts from an explicit histogram.
    pub fn from_vec(counts: Vec<u64>) -> Self {
        let n = counts.iter().sum();
        Self { counts, n }
    }

    pub fn zeros(alphabet: usize) -> Self {
        Self {
            counts: vec![0; alphabet],
            n: 0,
        }
    }

    pub fn increment(&mut self, symbol: usize) {
        self.counts[symbol] += 1;
        self.n += 1;
    }

    pub fn as_slice(&self) -> &[u64] {
        &self.counts
    }

    /// Total number of samples.
    pub fn total(&self) -> u64 {
        self.n
    }

    /// Alphabet size `S`.
    pub fn alphabet(&self) -> usize {
        self.counts.len()
    }

    /// Number of symbols with a nonzero count.
    pub fn support(&self) -> usize {
        self.counts.iter().filter(|&&c| c > 0).count()
    }

    /// Nonzero counts in symbol order.
    pub fn observed(&self) -> Vec<u64> {
        self.counts.iter().copied().filter(|&c| c > 0).collect()
    }
}

/// Tallies `samples` over the alphabet `[0, alphabet)`.
pub fn counts_from_samples(samples: &[usize], alphabet: usize) -> Result<Counts> {
    let mut counts = Counts::zeros(alphabet);
    for (position, &symbol) in samples.iter().enumerate() {
        if symbol >= alphabet {
            return Err(Error::OutOfRangeSymbol {
                symbol,
                position,
                alphabet,
            });
        }
        counts.increment(symbol);
    }
    Ok(counts)
}

/// A probability vector `(p_1, ..., p_S)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProbVector {
    probs: Vec<f64>,
}

impl ProbVector {
    /// Validates nonnegativity and unit mass (within [`PROB_SUM_TOL`]).
    pub fn new(probs: Vec<f64>) -> Result<Self> {
        let sum: f64 = probs.iter().sum();
        if probs.iter().any(|p| !(*p >= 0.0)) || (sum - 1.0).abs() > PROB_SUM_TOL {
            return Err(Error::InvalidDistribution { sum });
        }
        Ok(Self { probs })
    }

    pub fn uniform(size: usize) -> Self {
        Self {
            probs: vec![1.0 / size as f64; size],
        }
    }

    /// Wraps a vector that is already known to be a distribution up to
    /// round-off; the caller guarantees the invariant.
    pub(crate) fn from_raw(probs: Vec<f64>) -> Self {
        Self { probs }
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.probs
    }

    pub fn len(&self) -> usize {
        self.probs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.probs.is_empty()
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.probs
    }
}

/// Empirical distribution `counts[i] / n`.
pub fn normalize(counts: &Counts) -> Result<ProbVector> {
    if counts.n == 0 {
        return Err(Error::EmptyCounts);
    }
    let n = counts.n as f64;
    Ok(ProbVector::from_raw(
        counts.counts.iter().map(|&c| c as f64 / n).collect(),
    ))
}

/// `x ln(1/x)` with the continuity convention `0 ln(1/0) = 0`.
#[inline]
pub fn neg_x_ln_x(x: f64) -> f64 {
    if x > 0.0 {
        -x * x.ln()
    } else {
        0.0
    }
}

/// Shannon entropy `sum_i p_i ln(1/p_i)` in nats.
pub fn entropy_plugin(p: &ProbVector) -> f64 {
    p.probs.iter().map(|&x| neg_x_ln_x(x)).sum()
}

/// Plug-in entropy of the empirical distribution of `observed` counts with
/// total `n`. Zero counts may be present and contribute nothing.
///
/// This is the single code path for every plug-in evaluation in the crate so
/// that estimators which reduce to it agree bit-for-bit.
pub fn plugin_from_counts(observed: &[u64], n: u64) -> f64 {
    if n == 0 {
        return 0.0;
    }
    let nf = n as f64;
    observed
        .iter()
        .filter(|&&c| c > 0)
        .map(|&c| {
            let p = c as f64 / nf;
            p * (nf / c as f64).ln()
        })
        .sum()
}

/// Counts of consecutive pairs `(x_t, x_{t+1})` over an `S x S` grid.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PairCounts {
    states: usize,
    counts: Vec<u64>,
    n: u64,
}

impl PairCounts {
    pub fn zeros(states: usize) -> Self {
        Self {
            states,
            counts: vec![0; states * states],
            n: 0,
        }
    }

    pub fn increment(&mut self, from: usize, to: usize) {
        self.counts[from * self.states + to] += 1;
        self.n += 1;
    }

    pub fn states(&self) -> usize {
        self.states
    }

    /// Number of pairs.
    pub fn total(&self) -> u64 {
        self.n
    }

    pub fn get(&self, from: usize, to: usize) -> u64 {
        self.counts[from * self.states + to]
    }

    pub fn row(&self, from: usize) -> &[u64] {
        &self.counts[from * self.states..(from + 1) * self.states]
    }

    /// Per-state visit counts over positions `0..n-1` (the row sums).
    pub fn row_sums(&self) -> Vec<u64> {
        (0..self.states).map(|i| self.row(i).iter().sum()).collect()
    }

    pub fn as_slice(&self) -> &[u64] {
        &self.counts
    }
}

/// Unit used when presenting an entropy.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Unit {
    #[default]
    Nats,
    Bits,
}

impl Unit {
    /// Converts a value in nats into this unit.
    pub fn from_nats(self, nats: f64) -> f64 {
        match self {
            Unit::Nats => nats,
            Unit::Bits => nats / std::f64::consts::LN_2,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Unit::Nats => "nats",
            Unit::Bits => "bits",
        }
    }
}

impl std::str::FromStr for Unit {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "nats" => Ok(Unit::Nats),
            "bits" => Ok(Unit::Bits),
            other => Err(Error::Parse(format!("unknown unit {other:?}"))),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn tally_small_sample() {
        let c = counts_from_samples(&[0, 0, 1], 2).unwrap();
        assert_eq!(c.as_slice(), &[2, 1]);
        assert_eq!(c.total(), 3);

        let empty = counts_from_samples(&[], 3).unwrap();
        assert_eq!(empty.as_slice(), &[0, 0, 0]);
        assert_eq!(empty.total(), 0);
    }

    #[test]
    fn tally_rejects_out_of_range() {
        let err = counts_from_samples(&[0, 2], 2).unwrap_err();
        assert!(matches!(err, Error::OutOfRangeSymbol { symbol: 2, .. }));
    }

    #[test]
    fn normalize_examples() {
        let p = normalize(&Counts::from_vec(vec![1, 1, 1, 1])).unwrap();
        assert_eq!(p.as_slice(), &[0.25; 4]);
        let p = normalize(&Counts::from_vec(vec![3, 0, 1])).unwrap();
        assert_eq!(p.as_slice(), &[0.75, 0.0, 0.25]);
        assert!(matches!(
            normalize(&Counts::from_vec(vec![0, 0])),
            Err(Error::EmptyCounts)
        ));
    }

    #[test]
    fn entropy_examples() {
        let h = entropy_plugin(&ProbVector::uniform(4));
        assert!((h - 4f64.ln()).abs() < 1e-12);
        let h = entropy_plugin(&ProbVector::new(vec![1.0, 0.0, 0.0]).unwrap());
        assert_eq!(h, 0.0);
        // term by term: 0.5 ln 2 + 2 * 0.25 ln 4 = 1.5 ln 2
        let h = entropy_plugin(&ProbVector::new(vec![0.5, 0.25, 0.25]).unwrap());
        assert!((h - 1.039_720_770_839_917_9).abs() < 1e-12);
    }

    #[test]
    fn prob_vector_rejects_bad_mass() {
        assert!(ProbVector::new(vec![0.5, 0.6]).is_err());
        assert!(ProbVector::new(vec![-0.1, 1.1]).is_err());
    }

    #[test]
    fn pair_count_rows() {
        let mut pc = PairCounts::zeros(2);
        for w in [0usize, 1, 0, 1].windows(2) {
            pc.increment(w[0], w[1]);
        }
        assert_eq!(pc.get(0, 1), 2);
        assert_eq!(pc.get(1, 0), 1);
        assert_eq!(pc.total(), 3);
        assert_eq!(pc.row_sums(), vec![2, 1]);
    }

    #[test]
    fn units() {
        assert_eq!(Unit::Bits.from_nats(std::f64::consts::LN_2), 1.0);
        assert_eq!(Unit::Nats.from_nats(0.5), 0.5);
    }

    fn prob_vector() -> impl Strategy<Value = Vec<f64>> {
        prop::collection::vec(0u32..50, 1..20).prop_filter_map("nonzero", |w| {
            let total: u32 = w.iter().sum();
            (total > 0).then(|| w.iter().map(|&x| x as f64 / total as f64).collect())
        })
    }

    proptest! {
        #[test]
        fn entropy_bounded_by_log_support(p in prob_vector()) {
            let s = p.len();
            let pv = ProbVector::from_raw(p.clone());
            let h = entropy_plugin(&pv);
            prop_assert!(h >= 0.0);
            prop_assert!(h <= (s as f64).ln() + 1e-12);
            let point_mass = p.iter().filter(|&&x| x > 0.0).count() == 1;
            prop_assert_eq!(h == 0.0, point_mass);
        }

        #[test]
        fn entropy_permutation_invariant(p in prob_vector(), rot in 0usize..20) {
            let mut q = p.clone();
            let len = q.len();
            q.rotate_left(rot % len);
            q.reverse();
            let a = entropy_plugin(&ProbVector::from_raw(p));
            let b = entropy_plugin(&ProbVector::from_raw(q));
            prop_assert!((a - b).abs() < 1e-12);
        }

        #[test]
        fn normalized_counts_ignore_sample_order(
            samples in prop::collection::vec(0usize..6, 1..60),
            seed in any::<u64>(),
        ) {
            let mut shuffled = samples.clone();
            // deterministic Fisher-Yates driven by the seed
            let mut state = seed;
            for i in (1..shuffled.len()).rev() {
                state = state.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
                let j = (state >> 33) as usize % (i + 1);
                shuffled.swap(i, j);
            }
            let a = normalize(&counts_from_samples(&samples, 6).unwrap()).unwrap();
            let b = normalize(&counts_from_samples(&shuffled, 6).unwrap()).unwrap();
            prop_assert_eq!(a, b);
        }
    }
}
