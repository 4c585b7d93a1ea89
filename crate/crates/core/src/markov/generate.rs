use rand::seq::SliceRandom;
use rand::{RngExt, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::TransitionMatrix;
use crate::dist::ProbVector;
use crate::error::{Error, Result};

/// Families of synthetic chains used by the benchmark.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "snake_case")]
pub enum ChainFamily {
    /// Symmetric kernel with uniform stationary law whose nontrivial
    /// eigenvalues are uniform on `[0, 1 - gamma_star]`, the largest pinned
    /// to `1 - gamma_star`.
    UniformSpectrum { gamma_star: f64 },
    /// `T_ij ∝ 1 / (i + j)` with 1-based indices.
    Zipf,
    /// `T_ij ∝ 2^{-|i - j|}`.
    Geometric,
    /// Every row equals `row` (uniform when absent).
    Memoryless { row: Option<ProbVector> },
}

impl ChainFamily {
    pub fn name(&self) -> &'static str {
        match self {
            ChainFamily::UniformSpectrum { .. } => "uniform_spectrum",
            ChainFamily::Zipf => "zipf",
            ChainFamily::Geometric => "geometric",
            ChainFamily::Memoryless { .. } => "memoryless",
        }
    }

    /// Whether the output depends on the seed.
    pub fn is_random(&self) -> bool {
        matches!(self, ChainFamily::UniformSpectrum { .. })
    }
}

impl std::fmt::Display for ChainFamily {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            ChainFamily::UniformSpectrum { gamma_star } => {
                write!(f, "{}:{gamma_star}", self.name())
            }
            _ => f.write_str(self.name()),
        }
    }
}

impl std::str::FromStr for ChainFamily {
    type Err = Error;

    /// Accepts `zipf`, `geometric`, `memoryless` and `uniform_spectrum[:gamma]`
    /// (gamma defaults to 0.1).
    fn from_str(s: &str) -> Result<Self> {
        let (name, arg) = match s.split_once(':') {
            Some((n, a)) => (n, Some(a)),
            None => (s, None),
        };
        let family = match name {
            "zipf" => ChainFamily::Zipf,
            "geometric" => ChainFamily::Geometric,
            "memoryless" => ChainFamily::Memoryless { row: None },
            "uniform_spectrum" | "uniform-spectrum" => {
                let gamma_star = match arg {
                    Some(a) => a
                        .parse()
                        .map_err(|_| Error::Parse(format!("bad spectral gap {a:?}")))?,
                    None => 0.1,
                };
                return Ok(ChainFamily::UniformSpectrum { gamma_star });
            }
            other => return Err(Error::Parse(format!("unknown chain family {other:?}"))),
        };
        if arg.is_some() {
            return Err(Error::Parse(format!("family {name} takes no parameter")));
        }
        Ok(family)
    }
}

/// Builds an `S`-state chain from `family`. Only random families consume `seed`.
pub fn generate(family: ChainFamily, states: usize, seed: u64) -> Result<TransitionMatrix> {
    if states < 2 {
        return Err(Error::GenerationFailure(format!(
            "need at least 2 states, got {states}"
        )));
    }
    match family {
        ChainFamily::Zipf => affinity_kernel(states, |i, j| 1.0 / (i + j + 2) as f64),
        ChainFamily::Geometric => affinity_kernel(states, |i, j| 0.5f64.powi(i.abs_diff(j) as i32)),
        ChainFamily::Memoryless { row } => {
            let row = row.unwrap_or_else(|| ProbVector::uniform(states));
            if row.len() != states {
                return Err(Error::DimensionMismatch {
                    expected: states,
                    got: row.len(),
                });
            }
            TransitionMatrix::from_flat(states, row.as_slice().repeat(states))
        }
        ChainFamily::UniformSpectrum { gamma_star } => uniform_spectrum(states, gamma_star, seed),
    }
}

fn affinity_kernel(states: usize, w: impl Fn(usize, usize) -> f64) -> Result<TransitionMatrix> {
    let mut data = Vec::with_capacity(states * states);
    for i in 0..states {
        let row: Vec<f64> = (0..states).map(|j| w(i, j)).collect();
        let total: f64 = row.iter().sum();
        data.extend(row.into_iter().map(|x| x / total));
    }
    TransitionMatrix::from_flat(states, data)
}

/// Internal node of a random binary partition of `0..S`: the block
/// `lo..hi` split at `mid`.
struct Split {
    lo: usize,
    mid: usize,
    hi: usize,
}

/// Random binary partition tree, listed breadth first so every node appears
/// after its ancestors.
fn random_splits(states: usize, rng: &mut ChaCha8Rng) -> Vec<Split> {
    let mut out = Vec::with_capacity(states - 1);
    let mut queue = std::collections::VecDeque::from([(0usize, states)]);
    while let Some((lo, hi)) = queue.pop_front() {
        if hi - lo < 2 {
            continue;
        }
        let mid = rng.random_range(lo + 1..hi);
        out.push(Split { lo, mid, hi });
        queue.push_back((lo, mid));
        queue.push_back((mid, hi));
    }
    out
}

/// `T = 11^T / S + sum_N lambda_N v_N v_N^T` over the Haar vectors of a random
/// partition tree. With eigenvalues in `[0, 1)` that never increase from a
/// node to its descendants, every entry of `T` is positive: the ancestors of
/// the node `M` that first separates `i` and `j` contribute
/// `sum_A lambda_A (1/|child| - 1/|A|) >= lambda_M (1/|M| - 1/S)`, so the
/// entry is at least `(1 - lambda_M) / S`.
fn uniform_spectrum(states: usize, gamma_star: f64, seed: u64) -> Result<TransitionMatrix> {
    if !(gamma_star > 0.0 && gamma_star <= 1.0) {
        return Err(Error::GenerationFailure(format!(
            "target spectral gap {gamma_star} is outside (0, 1]"
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let top = 1.0 - gamma_star;
    let mut lambdas: Vec<f64> = (0..states - 1).map(|_| rng.random::<f64>() * top).collect();
    let argmax = lambdas
        .iter()
        .enumerate()
        .max_by(|a, b| a.1.total_cmp(b.1))
        .map(|(i, _)| i)
        .unwrap_or(0);
    lambdas[argmax] = top;
    lambdas.sort_by(|a, b| b.total_cmp(a));

    let splits = random_splits(states, &mut rng);
    let mut perm: Vec<usize> = (0..states).collect();
    perm.shuffle(&mut rng);

    let uniform = 1.0 / states as f64;
    let mut a = vec![uniform; states * states];
    for (split, &lambda) in splits.iter().zip(&lambdas) {
        let left = (split.mid - split.lo) as f64;
        let right = (split.hi - split.mid) as f64;
        // unit vector: sqrt(right / (left (left + right))) on the left block,
        // -sqrt(left / (right (left + right))) on the right block
        let size = left + right;
        let ll = lambda * right / (left * size);
        let rr = lambda * left / (right * size);
        let lr = -lambda / size;
        for p in split.lo..split.hi {
            let in_left_p = p < split.mid;
            let row = perm[p] * states;
            for q in split.lo..split.hi {
                let v = match (in_left_p, q < split.mid) {
                    (true, true) => ll,
                    (false, false) => rr,
                    _ => lr,
                };
                a[row + perm[q]] += v;
            }
        }
    }
    if let Some(bad) = a.iter().find(|&&x| x < -1e-12) {
        return Err(Error::GenerationFailure(format!(
            "negative entry {bad} in spectral construction"
        )));
    }
    a.iter_mut().for_each(|x| *x = x.max(0.0));
    TransitionMatrix::from_flat(states, a)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::markov::{is_reversible, spectral_info, stationary};

    #[test]
    fn zipf_two_states() {
        let t = generate(ChainFamily::Zipf, 2, 0).unwrap();
        let expect = [[3.0 / 5.0, 2.0 / 5.0], [4.0 / 7.0, 3.0 / 7.0]];
        for i in 0..2 {
            for j in 0..2 {
                assert!((t.get(i, j) - expect[i][j]).abs() < 1e-15);
            }
        }
    }

    #[test]
    fn memoryless_uniform_rows() {
        let t = generate(ChainFamily::Memoryless { row: None }, 3, 9).unwrap();
        assert!(t
            .rows()
            .all(|r| r.iter().all(|&x| (x - 1.0 / 3.0).abs() < 1e-15)));
    }

    #[test]
    fn affinity_families_are_reversible() {
        for family in [ChainFamily::Zipf, ChainFamily::Geometric] {
            for s in [2, 5, 40] {
                let t = generate(family.clone(), s, 0).unwrap();
                let pi = stationary(&t).unwrap();
                assert!(is_reversible(&t, pi.as_slice(), 1e-10));
            }
        }
    }

    #[test]
    fn uniform_spectrum_hits_target() {
        for seed in 0..5 {
            let t = generate(ChainFamily::UniformSpectrum { gamma_star: 0.1 }, 50, seed).unwrap();
            let pi = stationary(&t).unwrap();
            assert!(pi.as_slice().iter().all(|&p| (p - 0.02).abs() < 1e-9));
            let info = spectral_info(&t, &pi).unwrap();
            assert!((info.gamma_star - 0.1).abs() < 1e-8, "{}", info.gamma_star);
            assert!((info.eigenvalues[0] - 1.0).abs() < 1e-8);
            assert!(info.eigenvalues[1..]
                .iter()
                .all(|&v| (-1e-8..=0.9 + 1e-8).contains(&v)));
        }
    }

    #[test]
    fn uniform_spectrum_is_seed_deterministic() {
        let f = ChainFamily::UniformSpectrum { gamma_star: 0.3 };
        let a = generate(f.clone(), 20, 7).unwrap();
        let b = generate(f.clone(), 20, 7).unwrap();
        let c = generate(f, 20, 8).unwrap();
        assert_eq!(a, b);
        assert_ne!(a, c);
    }

    #[test]
    fn rejects_bad_inputs() {
        assert!(generate(ChainFamily::Zipf, 1, 0).is_err());
        assert!(generate(ChainFamily::UniformSpectrum { gamma_star: 0.0 }, 5, 0).is_err());
        let row = ProbVector::uniform(2);
        assert!(matches!(
            generate(ChainFamily::Memoryless { row: Some(row) }, 3, 0),
            Err(Error::DimensionMismatch { .. })
        ));
    }

    #[test]
    fn family_names_parse() {
        assert_eq!("zipf".parse::<ChainFamily>().unwrap(), ChainFamily::Zipf);
        assert_eq!(
            "uniform_spectrum:0.25".parse::<ChainFamily>().unwrap(),
            ChainFamily::UniformSpectrum { gamma_star: 0.25 }
        );
        assert!("pareto".parse::<ChainFamily>().is_err());
    }
}
