//! Entropy-rate estimators from a single sample path.

pub mod lz;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dist::{plugin_from_counts, Unit};
use crate::entropy::EntropyEstimator;
use crate::error::{Error, Result};
use crate::markov::TransitionMatrix;
use crate::sim::SamplePath;

/// Agreement required between the conditional and joint forms of the
/// empirical rate.
pub const FORM_AGREEMENT_TOL: f64 = 1e-10;

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Diagnostics {
    /// `pi_hat_i * H_hat(X^(i))` for every state, in nats.
    #[serde(skip_serializing_if = "Vec::is_empty", default)]
    pub per_state: Vec<f64>,
    /// States never visited at positions `0..n-1`.
    pub unvisited_states: usize,
    /// `H(P_12) - H(P_1)`, reported by the empirical estimator.
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub joint_form: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub mean_match_length: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub evaluated_positions: Option<usize>,
}

/// An entropy-rate estimate in nats.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RateEstimate {
    pub value: f64,
    pub unit: Unit,
    pub estimator: String,
    pub diagnostics: Diagnostics,
}

/// Successor counts of each visited state, grouped by state.
struct Transitions {
    /// `(state, successor counts in successor order)` for visited states.
    rows: Vec<(usize, Vec<u64>)>,
    n: u64,
}

impl Transitions {
    fn tally(path: &SamplePath) -> Result<Self> {
        let n = path.transitions();
        if n < 1 {
            return Err(Error::PathTooShort {
                required: 1,
                got: n,
            });
        }
        let mut keys: Vec<u64> = path
            .states()
            .windows(2)
            .map(|w| (u64::from(w[0]) << 32) | u64::from(w[1]))
            .collect();
        keys.sort_unstable();
        let mut rows: Vec<(usize, Vec<u64>)> = Vec::new();
        for run in keys.chunk_by(|a, b| a == b) {
            let from = (run[0] >> 32) as usize;
            match rows.last_mut() {
                Some((state, counts)) if *state == from => counts.push(run.len() as u64),
                _ => rows.push((from, vec![run.len() as u64])),
            }
        }
        Ok(Self { rows, n: n as u64 })
    }

    fn visits(&self) -> impl Iterator<Item = u64> + '_ {
        self.rows.iter().map(|(_, c)| c.iter().sum())
    }
}

fn conditional_sum(
    tr: &Transitions,
    alphabet: usize,
    estimator: &EntropyEstimator,
) -> Result<(f64, Vec<f64>)> {
    let n = tr.n as f64;
    let contributions = tr
        .rows
        .par_iter()
        .map(|(_, counts)| {
            let visits: u64 = counts.iter().sum();
            if visits < estimator.min_samples() {
                return Ok(0.0);
            }
            let h = estimator.estimate_observed(counts, alphabet)?;
            Ok(visits as f64 / n * h)
        })
        .collect::<Result<Vec<f64>>>()?;
    let mut per_state = vec![0.0; alphabet];
    let mut total = 0.0;
    for ((state, _), c) in tr.rows.iter().zip(contributions) {
        per_state[*state] = c;
        total += c;
    }
    Ok((total, per_state))
}

fn conditional_estimate(
    path: &SamplePath,
    estimator: &EntropyEstimator,
    tag: &str,
) -> Result<(RateEstimate, Transitions)> {
    let tr = Transitions::tally(path)?;
    let (value, per_state) = conditional_sum(&tr, path.alphabet(), estimator)?;
    let estimate = RateEstimate {
        value,
        unit: Unit::Nats,
        estimator: tag.to_string(),
        diagnostics: Diagnostics {
            per_state,
            unvisited_states: path.alphabet() - tr.rows.len(),
            ..Diagnostics::default()
        },
    };
    Ok((estimate, tr))
}

/// `sum_i pi_hat_i H_emp(X^(i))`, cross-checked against `H(P_12) - H(P_1)`.
pub fn empirical_rate(path: &SamplePath) -> Result<RateEstimate> {
    let (mut estimate, tr) = conditional_estimate(path, &EntropyEstimator::Plugin, "emp")?;
    let pairs: Vec<u64> = tr
        .rows
        .iter()
        .flat_map(|(_, c)| c.iter().copied())
        .collect();
    let visits: Vec<u64> = tr.visits().collect();
    let joint = plugin_from_counts(&pairs, tr.n) - plugin_from_counts(&visits, tr.n);
    debug_assert!(
        (joint - estimate.value).abs() <= FORM_AGREEMENT_TOL,
        "conditional {} vs joint {}",
        estimate.value,
        joint
    );
    estimate.diagnostics.joint_form = Some(joint);
    Ok(estimate)
}

/// `sum_i pi_hat_i H_hat(X^(i))` with a pluggable per-slice estimator.
/// Slices below the estimator's minimum sample size contribute zero.
pub fn conditional_rate(path: &SamplePath, estimator: &EntropyEstimator) -> Result<RateEstimate> {
    let tag = match estimator {
        EntropyEstimator::Plugin => "emp",
        EntropyEstimator::MillerMadow => "mm",
        EntropyEstimator::Poly(_) => "opt",
    };
    Ok(conditional_estimate(path, estimator, tag)?.0)
}

/// Which positions of the path the match-length estimator averages over.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum MatchPolicy {
    /// `ceil(n/4) ..= ceil(3n/4)`.
    #[default]
    Centered,
    /// `start..end`, clipped to the path.
    Range { start: usize, end: usize },
    /// Every position with a history, `1..=n`.
    All,
}

impl MatchPolicy {
    fn positions(&self, len: usize) -> std::ops::Range<usize> {
        let n = len.saturating_sub(1);
        let r = match *self {
            MatchPolicy::Centered => n.div_ceil(4)..(3 * n).div_ceil(4) + 1,
            MatchPolicy::Range { start, end } => start..end,
            MatchPolicy::All => 1..n + 1,
        };
        r.start.min(len)..r.end.min(len)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MatchLengths {
    pub positions: Vec<usize>,
    /// `L_i = 1 + ` longest prefix of `X_i X_{i+1} ...` starting earlier.
    pub lengths: Vec<usize>,
    pub policy: MatchPolicy,
}

pub fn match_lengths(path: &SamplePath, policy: MatchPolicy) -> Result<MatchLengths> {
    let n = path.transitions();
    if n < 2 {
        return Err(Error::PathTooShort {
            required: 2,
            got: n,
        });
    }
    let range = policy.positions(path.len());
    if range.len() < 2 {
        return Err(Error::PathTooShort {
            required: 2,
            got: range.len(),
        });
    }
    let lpf = lz::longest_previous_factor(path.states());
    Ok(MatchLengths {
        positions: range.clone().collect(),
        lengths: range.map(|i| lpf[i] + 1).collect(),
        policy,
    })
}

/// Minimum transitions accepted by [`lz_rate`].
pub const LZ_MIN_TRANSITIONS: usize = 16;

/// `(mean_i L_i / ln n)^{-1}`, clamped to `[0, ln S]`.
pub fn lz_rate(path: &SamplePath, policy: MatchPolicy) -> Result<RateEstimate> {
    let n = path.transitions();
    if n < LZ_MIN_TRANSITIONS {
        return Err(Error::PathTooShort {
            required: LZ_MIN_TRANSITIONS,
            got: n,
        });
    }
    let ml = match_lengths(path, policy)?;
    let mean = ml.lengths.iter().sum::<usize>() as f64 / ml.lengths.len() as f64;
    let raw = (n as f64).ln() / mean;
    let value = raw.clamp(0.0, (path.alphabet() as f64).ln());
    Ok(RateEstimate {
        value,
        unit: Unit::Nats,
        estimator: "lz".into(),
        diagnostics: Diagnostics {
            mean_match_length: Some(mean),
            evaluated_positions: Some(ml.lengths.len()),
            ..Diagnostics::default()
        },
    })
}

/// Average negative log-likelihood `(1/n) sum_t ln(1 / T(X_t, X_{t+1}))`.
pub fn log_loss(path: &SamplePath, t: &TransitionMatrix) -> Result<f64> {
    let n = path.transitions();
    if n < 1 {
        return Err(Error::PathTooShort {
            required: 1,
            got: n,
        });
    }
    if path.alphabet() > t.states() {
        return Err(Error::DimensionMismatch {
            expected: t.states(),
            got: path.alphabet(),
        });
    }
    let mut total = 0.0;
    for w in path.states().windows(2) {
        let (from, to) = (w[0] as usize, w[1] as usize);
        let p = t.get(from, to);
        if p <= 0.0 {
            return Err(Error::ZeroProbabilityTransition { from, to });
        }
        total -= p.ln();
    }
    Ok(total / n as f64)
}

/// Uniform bias bound of the empirical rate:
/// `(2 S^2 / n) ln(n / S^2 + 1) + (S^2 + 2) ln 2 / n`.
pub fn bias_bound_thm2(states: usize, n: usize) -> f64 {
    let s2 = (states * states) as f64;
    let n = n as f64;
    2.0 * s2 / n * (n / s2 + 1.0).ln() + (s2 + 2.0) * std::f64::consts::LN_2 / n
}

/// Lower bound `max(0, ln(S^2 / (n + S - 1)))` on the bias of the empirical
/// rate for the memoryless uniform chain.
pub fn bias_lower_bound_thm3(states: usize, n: usize) -> f64 {
    let s = states as f64;
    (s * s / (n as f64 + s - 1.0)).ln().max(0.0)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::entropy::PolyEstimatorParams;
    use crate::markov::{generate, stationary, validate, ChainFamily};
    use crate::sim::{sample_path, SamplePath};
    use proptest::prelude::*;

    fn path(ids: &[u32], s: usize) -> SamplePath {
        SamplePath::new(ids.to_vec(), s).unwrap()
    }

    #[test]
    fn empirical_examples() {
        let e = empirical_rate(&path(&[0, 1, 0, 1, 0], 2)).unwrap();
        assert!(e.value.abs() < 1e-15);
        assert!(e.diagnostics.joint_form.unwrap().abs() < 1e-15);
        assert_eq!(
            empirical_rate(&path(&[0, 1, 2, 0, 1, 2, 0], 3))
                .unwrap()
                .value,
            0.0
        );
        assert_eq!(empirical_rate(&path(&[4; 9], 5)).unwrap().value, 0.0);
        assert!(empirical_rate(&path(&[1], 2)).is_err());
    }

    #[test]
    fn hand_computed_rate() {
        // successors of 0: (1, 0, 1) -> H(1/3, 2/3); successors of 1: (0, 1) -> ln 2
        let e = empirical_rate(&path(&[0, 1, 0, 0, 1, 1], 2)).unwrap();
        let h0 = (1.0 / 3.0) * 3f64.ln() + (2.0 / 3.0) * 1.5f64.ln();
        let expect = 0.6 * h0 + 0.4 * 2f64.ln();
        assert!((e.value - expect).abs() < 1e-15);
        assert_eq!(e.diagnostics.unvisited_states, 0);
    }

    #[test]
    fn plugin_conditional_is_bitwise_empirical() {
        let t = generate(ChainFamily::Zipf, 8, 0).unwrap();
        let pi = stationary(&t).unwrap();
        for seed in 0..20 {
            let p = sample_path(&t, &pi, 400, seed).unwrap();
            let a = empirical_rate(&p).unwrap().value;
            let b = conditional_rate(&p, &EntropyEstimator::Plugin)
                .unwrap()
                .value;
            assert_eq!(a.to_bits(), b.to_bits());
        }
    }

    #[test]
    fn unvisited_state_contributes_nothing() {
        let p = path(&[0, 1, 0, 1, 1, 0], 3);
        for est in [
            EntropyEstimator::Plugin,
            EntropyEstimator::MillerMadow,
            EntropyEstimator::Poly(PolyEstimatorParams::default()),
        ] {
            let e = conditional_rate(&p, &est).unwrap();
            assert_eq!(e.diagnostics.per_state[2], 0.0);
            assert_eq!(e.diagnostics.unvisited_states, 1);
        }
    }

    #[test]
    fn poly_skips_single_visit_slices() {
        let p = path(&[0, 0, 0, 1, 0], 2);
        let e =
            conditional_rate(&p, &EntropyEstimator::Poly(PolyEstimatorParams::default())).unwrap();
        assert_eq!(e.diagnostics.per_state[1], 0.0);
    }

    #[test]
    fn poly_rate_on_uniform_memoryless() {
        let s = 100;
        let t = generate(ChainFamily::Memoryless { row: None }, s, 0).unwrap();
        let pi = stationary(&t).unwrap();
        let est = EntropyEstimator::Poly(PolyEstimatorParams::default());
        let trials = 50;
        let mean: f64 = (0..trials)
            .map(|seed| {
                conditional_rate(&sample_path(&t, &pi, 5000, seed).unwrap(), &est)
                    .unwrap()
                    .value
            })
            .sum::<f64>()
            / trials as f64;
        assert!((mean - (s as f64).ln()).abs() < 0.1, "{mean}");
    }

    #[test]
    fn match_length_examples() {
        let ml = match_lengths(&path(&[0; 10], 1), MatchPolicy::All).unwrap();
        assert_eq!(
            ml.lengths[ml.positions.iter().position(|&i| i == 5).unwrap()],
            6
        );

        let ml = match_lengths(&path(&[0, 1, 0, 1, 0, 1], 2), MatchPolicy::All).unwrap();
        assert_eq!(ml.lengths[1], 5);
        assert_eq!(ml.positions[1], 2);
        assert_eq!(ml.lengths[0], 1);

        assert!(matches!(
            match_lengths(&path(&[0, 1], 2), MatchPolicy::All),
            Err(Error::PathTooShort { .. })
        ));
    }

    #[test]
    fn centered_window() {
        assert_eq!(MatchPolicy::Centered.positions(101), 25..76);
        assert_eq!(MatchPolicy::Centered.positions(18), 5..14);
        assert_eq!(
            MatchPolicy::Range { start: 3, end: 99 }.positions(10),
            3..10
        );
    }

    #[test]
    fn lz_on_constant_path() {
        let e = lz_rate(&path(&vec![0; 10_001], 2), MatchPolicy::Centered).unwrap();
        assert!(e.value <= 0.01);
        assert!(matches!(
            lz_rate(&path(&[0; 10], 2), MatchPolicy::Centered),
            Err(Error::PathTooShort { required: 16, .. })
        ));
    }

    #[test]
    fn lz_on_fair_bits() {
        let t = generate(ChainFamily::Memoryless { row: None }, 2, 0).unwrap();
        let pi = stationary(&t).unwrap();
        let p = sample_path(&t, &pi, 100_000, 3).unwrap();
        let e = lz_rate(&p, MatchPolicy::Centered).unwrap();
        assert!((e.value / 2f64.ln() - 1.0).abs() <= 0.10, "{}", e.value);
    }

    #[test]
    fn log_loss_examples() {
        let cycle = validate(&[
            vec![0.0, 1.0, 0.0],
            vec![0.0, 0.0, 1.0],
            vec![1.0, 0.0, 0.0],
        ])
        .unwrap();
        assert_eq!(log_loss(&path(&[0, 1, 2, 0, 1], 3), &cycle).unwrap(), 0.0);
        assert!(matches!(
            log_loss(&path(&[0, 2], 3), &cycle),
            Err(Error::ZeroProbabilityTransition { from: 0, to: 2 })
        ));
        let s = 6;
        let uni = generate(ChainFamily::Memoryless { row: None }, s, 0).unwrap();
        let ll = log_loss(&path(&[0, 5, 3, 3, 1], s), &uni).unwrap();
        assert!((ll - (s as f64).ln()).abs() < 1e-14);
    }

    #[test]
    fn bound_examples() {
        assert!((bias_bound_thm2(2, 8) - 1.618_473).abs() < 1e-6);
        let expect = 3f64.ln() + 6.0 * 2f64.ln() / 8.0;
        assert!((bias_bound_thm2(2, 8) - expect).abs() < 1e-14);
        for s in [2usize, 5, 11] {
            let s2 = (s * s) as f64;
            let expect = 2.0 * 2f64.ln() + (s2 + 2.0) * 2f64.ln() / s2;
            assert!((bias_bound_thm2(s, s * s) - expect).abs() < 1e-12);
        }
        assert!((bias_lower_bound_thm3(10, 50) - 0.527_633).abs() < 1e-6);
        assert_eq!(bias_lower_bound_thm3(2, 100), 0.0);
    }

    fn relabel(p: &SamplePath, perm: &[u32]) -> SamplePath {
        SamplePath::new(
            p.states().iter().map(|&x| perm[x as usize]).collect(),
            p.alphabet(),
        )
        .unwrap()
    }

    proptest! {
        #[test]
        fn estimates_invariant_under_relabeling(
            ids in prop::collection::vec(0u32..5, 20..120),
            shift in 1u32..5,
        ) {
            let p = SamplePath::new(ids, 5).unwrap();
            let perm: Vec<u32> = (0..5).map(|i| (i * 2 + shift) % 5).collect();
            let q = relabel(&p, &perm);
            for est in [
                EntropyEstimator::Plugin,
                EntropyEstimator::MillerMadow,
                EntropyEstimator::Poly(PolyEstimatorParams::default()),
            ] {
                let a = conditional_rate(&p, &est).unwrap().value;
                let b = conditional_rate(&q, &est).unwrap().value;
                prop_assert!((a - b).abs() < 1e-12);
            }
            let a = lz_rate(&p, MatchPolicy::Centered).unwrap().value;
            let b = lz_rate(&q, MatchPolicy::Centered).unwrap().value;
            prop_assert_eq!(a, b);
        }

        #[test]
        fn conditional_rates_are_bounded(ids in prop::collection::vec(0u32..6, 2..200)) {
            let p = SamplePath::new(ids, 6).unwrap();
            for est in [
                EntropyEstimator::Plugin,
                EntropyEstimator::MillerMadow,
                EntropyEstimator::Poly(PolyEstimatorParams::default()),
            ] {
                let v = conditional_rate(&p, &est).unwrap().value;
                prop_assert!(v >= 0.0 && v <= 6f64.ln() + 1e-9);
            }
        }
    }
}
