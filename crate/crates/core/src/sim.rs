//! Sample-path generation, the per-state successor decomposition, pair
//! counting and the concentration bound for empirical state frequencies.

use std::io::{BufRead, Write};

use rand::{RngExt, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::dist::PairCounts;
use crate::entropy::ConfidenceParams;
use crate::error::{Error, Result};
use crate::markov::{StationaryDist, TransitionMatrix};

/// SplitMix64 finalizer.
fn mix64(mut z: u64) -> u64 {
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Seed of the `index`-th substream of `seed`; distinct indices give
/// statistically independent streams regardless of evaluation order.
pub fn substream_seed(seed: u64, index: u64) -> u64 {
    mix64(seed ^ mix64(index.wrapping_add(0x9e37_79b9_7f4a_7c15)))
}

/// Hashes a sequence of words into a seed, e.g. `(master, family, n, trial)`.
pub fn derive_seed(parts: &[u64]) -> u64 {
    parts
        .iter()
        .fold(0x6a09_e667_f3bc_c908, |acc, &p| substream_seed(acc, p))
}

pub fn rng_from_seed(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Observed trajectory `X_0, ..., X_n` over the alphabet `[0, S)`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SamplePath {
    states: Vec<u32>,
    alphabet: usize,
}

impl SamplePath {
    pub fn new(states: Vec<u32>, alphabet: usize) -> Result<Self> {
        if let Some(position) = states.iter().position(|&x| x as usize >= alphabet) {
            return Err(Error::OutOfRangeSymbol {
                symbol: states[position] as usize,
                position,
                alphabet,
            });
        }
        Ok(Self { states, alphabet })
    }

    pub fn states(&self) -> &[u32] {
        &self.states
    }

    pub fn alphabet(&self) -> usize {
        self.alphabet
    }

    /// Number of transitions (`len - 1`).
    pub fn transitions(&self) -> usize {
        self.states.len().saturating_sub(1)
    }

    pub fn len(&self) -> usize {
        self.states.len()
    }

    pub fn is_empty(&self) -> bool {
        self.states.is_empty()
    }
}

/// Per-row cumulative sums for inverse-CDF sampling.
struct CdfTable {
    states: usize,
    cdf: Vec<f64>,
}

impl CdfTable {
    fn new(t: &TransitionMatrix) -> Self {
        let mut cdf = Vec::with_capacity(t.states() * t.states());
        for row in t.rows() {
            cdf.extend(cumulative(row));
        }
        Self {
            states: t.states(),
            cdf,
        }
    }

    #[inline]
    fn draw(&self, row: usize, u: f64) -> u32 {
        invert(&self.cdf[row * self.states..(row + 1) * self.states], u)
    }
}

fn cumulative(p: &[f64]) -> Vec<f64> {
    let mut acc = 0.0;
    p.iter()
        .map(|&x| {
            acc += x;
            acc
        })
        .collect()
}

/// Smallest index whose cumulative mass exceeds `u`, skipping zero-mass
/// entries; round-off in the last partial sum falls back to the last
/// positive entry.
#[inline]
fn invert(cdf: &[f64], u: f64) -> u32 {
    let idx = cdf.partition_point(|&c| c <= u);
    if idx < cdf.len() {
        return idx as u32;
    }
    let last = cdf[cdf.len() - 1];
    cdf.iter().position(|&c| c >= last).unwrap_or(0) as u32
}

fn check_stationary(t: &TransitionMatrix, pi: &StationaryDist) -> Result<()> {
    if pi.as_slice().len() != t.states() {
        return Err(Error::DimensionMismatch {
            expected: t.states(),
            got: pi.as_slice().len(),
        });
    }
    Ok(())
}

/// Draws `X_0 ~ pi` and `X_{t+1} ~ T_{X_t}` from a single stream.
pub fn sample_path(
    t: &TransitionMatrix,
    pi: &StationaryDist,
    n: usize,
    seed: u64,
) -> Result<SamplePath> {
    check_stationary(t, pi)?;
    let table = CdfTable::new(t);
    let mut rng = rng_from_seed(seed);
    let mut states = Vec::with_capacity(n + 1);
    let mut x = invert(&cumulative(pi.as_slice()), rng.random::<f64>());
    states.push(x);
    for _ in 0..n {
        x = table.draw(x as usize, rng.random::<f64>());
        states.push(x);
    }
    SamplePath::new(states, t.states())
}

/// Row-array construction: row `i` owns an independent stream of i.i.d.
/// draws from `T_i`, and each visit to `i` consumes the next unused draw.
/// The initial state comes from substream 0, row `i` from substream `i + 1`.
pub fn sample_path_rowwise(
    t: &TransitionMatrix,
    pi: &StationaryDist,
    n: usize,
    seed: u64,
) -> Result<SamplePath> {
    check_stationary(t, pi)?;
    let table = CdfTable::new(t);
    let mut start = rng_from_seed(substream_seed(seed, 0));
    let mut rows: Vec<Option<ChaCha8Rng>> = (0..t.states()).map(|_| None).collect();
    let mut states = Vec::with_capacity(n + 1);
    let mut x = invert(&cumulative(pi.as_slice()), start.random::<f64>());
    states.push(x);
    for _ in 0..n {
        let i = x as usize;
        let rng = rows[i].get_or_insert_with(|| rng_from_seed(substream_seed(seed, i as u64 + 1)));
        x = table.draw(i, rng.random::<f64>());
        states.push(x);
    }
    SamplePath::new(states, t.states())
}

/// Successor sequences `X^(i)` and empirical frequencies over positions `0..n-1`.
#[derive(Debug, Clone, PartialEq)]
pub struct ConditionalSlices {
    pub slices: Vec<Vec<u32>>,
    pub pi_hat: Vec<f64>,
    pub n: usize,
}

impl ConditionalSlices {
    /// `n_i = |X^(i)|`.
    pub fn visits(&self, state: usize) -> usize {
        self.slices[state].len()
    }
}

pub fn decompose(path: &SamplePath) -> Result<ConditionalSlices> {
    let n = path.transitions();
    if n < 1 {
        return Err(Error::PathTooShort {
            required: 1,
            got: n,
        });
    }
    let mut slices = vec![Vec::new(); path.alphabet()];
    for w in path.states().windows(2) {
        slices[w[0] as usize].push(w[1]);
    }
    let pi_hat = slices.iter().map(|s| s.len() as f64 / n as f64).collect();
    Ok(ConditionalSlices { slices, pi_hat, n })
}

pub fn pair_counts(path: &SamplePath) -> Result<PairCounts> {
    let n = path.transitions();
    if n < 1 {
        return Err(Error::PathTooShort {
            required: 1,
            got: n,
        });
    }
    let mut pc = PairCounts::zeros(path.alphabet());
    for w in path.states().windows(2) {
        pc.increment(w[0] as usize, w[1] as usize);
    }
    Ok(pc)
}

/// Half-width `c3 max{ln n/(n gamma), sqrt(pi_i ln n/(n gamma))}` of the
/// concentration event for `pi_hat_i`.
pub fn deviation_bound(pi_i: f64, n: u64, gamma: f64, params: &ConfidenceParams) -> f64 {
    let r = (n as f64).ln() / (n as f64 * gamma);
    params.c3 * r.max((pi_i * r).sqrt())
}

/// Probability bound `2 / n^beta` for leaving the concentration event.
pub fn deviation_failure_prob(n: u64, params: &ConfidenceParams) -> f64 {
    2.0 / (n as f64).powf(params.beta())
}

/// Reads whitespace-separated state ids, validated against `alphabet`.
pub fn read_path<R: BufRead>(input: R, alphabet: usize) -> Result<SamplePath> {
    let mut states = Vec::new();
    for line in input.lines() {
        for tok in line?.split_whitespace() {
            let id: u32 = tok
                .parse()
                .map_err(|_| Error::Parse(format!("bad state id {tok:?}")))?;
            states.push(id);
        }
    }
    SamplePath::new(states, alphabet)
}

/// Writes the ids space separated on a single line.
pub fn write_path<W: Write>(path: &SamplePath, mut out: W) -> Result<()> {
    let mut first = true;
    for &x in path.states() {
        if !first {
            out.write_all(b" ")?;
        }
        write!(out, "{x}")?;
        first = false;
    }
    writeln!(out)?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::markov::{stationary, validate};

    fn flip(p: f64) -> (TransitionMatrix, StationaryDist) {
        let t = validate(&[vec![1.0 - p, p], vec![p, 1.0 - p]]).unwrap();
        let pi = stationary(&t).unwrap();
        (t, pi)
    }

    #[test]
    fn single_state_is_constant() {
        let t = validate(&[vec![1.0]]).unwrap();
        let pi = stationary(&t).unwrap();
        for path in [
            sample_path(&t, &pi, 20, 1).unwrap(),
            sample_path_rowwise(&t, &pi, 20, 1).unwrap(),
        ] {
            assert!(path.states().iter().all(|&x| x == 0));
            assert_eq!(path.transitions(), 20);
        }
    }

    #[test]
    fn seeded_paths_repeat() {
        let (t, pi) = flip(0.3);
        assert_eq!(
            sample_path(&t, &pi, 500, 42).unwrap(),
            sample_path(&t, &pi, 500, 42).unwrap()
        );
        assert_ne!(
            sample_path(&t, &pi, 500, 42).unwrap(),
            sample_path(&t, &pi, 500, 43).unwrap()
        );
        assert_eq!(
            sample_path_rowwise(&t, &pi, 500, 42).unwrap(),
            sample_path_rowwise(&t, &pi, 500, 42).unwrap()
        );
    }

    #[test]
    fn flip_frequency_within_clt_band() {
        let (t, pi) = flip(0.3);
        let n = 100_000;
        for path in [
            sample_path(&t, &pi, n, 5).unwrap(),
            sample_path_rowwise(&t, &pi, n, 5).unwrap(),
        ] {
            let flips = path.states().windows(2).filter(|w| w[0] != w[1]).count() as f64;
            let sd = (0.3 * 0.7 / n as f64).sqrt();
            assert!((flips / n as f64 - 0.3).abs() < 4.0 * sd);
        }
    }

    #[test]
    fn deterministic_cycle() {
        let t = validate(&[
            vec![0.0, 1.0, 0.0],
            vec![0.0, 0.0, 1.0],
            vec![1.0, 0.0, 0.0],
        ])
        .unwrap();
        let pi = stationary(&t).unwrap();
        for seed in 0..10 {
            let path = sample_path_rowwise(&t, &pi, 30, seed).unwrap();
            assert!(path.states().windows(2).all(|w| w[1] == (w[0] + 1) % 3));
        }
    }

    #[test]
    fn zero_mass_entries_are_never_drawn() {
        let cdf = cumulative(&[0.0, 0.5, 0.0, 0.5, 0.0]);
        assert_eq!(invert(&cdf, 0.0), 1);
        assert_eq!(invert(&cdf, 0.5), 3);
        assert_eq!(invert(&cdf, 1.0 - 1e-17), 3);
        assert_eq!(
            invert(&[0.3, 0.999_999_999_999_999_9], 0.999_999_999_999_999_9),
            1
        );
    }

    #[test]
    fn decompose_examples() {
        // ids 1,2 of the one-based example map to 0,1
        let d = decompose(&SamplePath::new(vec![0, 1, 0, 0], 2).unwrap()).unwrap();
        assert_eq!(d.slices, vec![vec![1, 0], vec![0]]);
        assert!((d.pi_hat[0] - 2.0 / 3.0).abs() < 1e-15);
        assert!((d.pi_hat[1] - 1.0 / 3.0).abs() < 1e-15);

        let d = decompose(&SamplePath::new(vec![0, 0, 0], 1).unwrap()).unwrap();
        assert_eq!(d.slices, vec![vec![0, 0]]);
        assert_eq!(d.pi_hat, vec![1.0]);

        let d = decompose(&SamplePath::new(vec![0, 1], 2).unwrap()).unwrap();
        assert_eq!(d.slices, vec![vec![1], vec![]]);
        assert_eq!(d.pi_hat, vec![1.0, 0.0]);

        assert!(decompose(&SamplePath::new(vec![0], 1).unwrap()).is_err());
    }

    #[test]
    fn pair_counts_agree_with_slices() {
        let (t, pi) = flip(0.2);
        let path = sample_path(&t, &pi, 300, 11).unwrap();
        let pc = pair_counts(&path).unwrap();
        let d = decompose(&path).unwrap();
        assert_eq!(pc.total(), 300);
        for i in 0..2 {
            assert_eq!(pc.row_sums()[i] as usize, d.visits(i));
            for j in 0..2 {
                let in_slice = d.slices[i].iter().filter(|&&x| x as usize == j).count();
                assert_eq!(pc.get(i, j) as usize, in_slice);
            }
        }

        let constant = SamplePath::new(vec![2; 8], 3).unwrap();
        let pc = pair_counts(&constant).unwrap();
        assert_eq!(pc.get(2, 2), 7);
        assert_eq!(pc.total(), 7);
    }

    #[test]
    fn deviation_bound_examples() {
        let params = ConfidenceParams::default();
        assert!((params.beta() - 400.0 / 204.0).abs() < 1e-12);
        let b = deviation_bound(0.01, 10_000, 0.1, &params);
        // 20 sqrt(0.01 ln(1e4) / (1e4 * 0.1))
        assert!((b - 0.191_941).abs() < 1e-6, "{b}");
        // branch crossover
        let (n, gamma) = (5000u64, 0.2);
        let r = (n as f64).ln() / (n as f64 * gamma);
        let at = deviation_bound(r, n, gamma, &params);
        assert!((at - params.c3 * r).abs() < 1e-15);
        assert!(
            (deviation_failure_prob(10_000, &params) - 2.0 * 1e4f64.powf(-400.0 / 204.0)).abs()
                < 1e-18
        );
    }

    #[test]
    fn path_text_round_trip() {
        let path = SamplePath::new(vec![0, 3, 2, 2, 1], 4).unwrap();
        let mut buf = Vec::new();
        write_path(&path, &mut buf).unwrap();
        assert_eq!(buf, b"0 3 2 2 1\n");
        assert_eq!(read_path(buf.as_slice(), 4).unwrap(), path);
        assert!(matches!(
            read_path("0 1\n5".as_bytes(), 4),
            Err(Error::OutOfRangeSymbol {
                symbol: 5,
                position: 2,
                ..
            })
        ));
    }

    #[test]
    fn substreams_differ() {
        let seeds: std::collections::HashSet<u64> =
            (0..1000).map(|i| substream_seed(7, i)).collect();
        assert_eq!(seeds.len(), 1000);
        assert_ne!(derive_seed(&[1, 2]), derive_seed(&[2, 1]));
    }
}
