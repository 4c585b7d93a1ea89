//! Shannon entropy estimators for i.i.d. count data.
//!
//! Three estimators are provided: the plug-in (empirical) entropy, the
//! Miller–Madow bias correction, and an estimator built on the best uniform
//! polynomial approximation of `-p ln p` near zero. The last one is the
//! large-alphabet estimator plugged into the conditional entropy-rate
//! estimator.
//!
//! For symbols with a small count the polynomial estimator replaces `-p ln p`
//! by its degree-`K` minimax approximation on `[0, c2 ln n / n]`, taken among
//! polynomials vanishing at zero so that unseen symbols add nothing, and estimates
//! each monomial `p^j` without bias through falling factorials. Symbols with a
//! large count use the plug-in term with a first-order bias correction.

pub mod remez;

use serde::{Deserialize, Serialize};

use crate::dist::{neg_x_ln_x, plugin_from_counts, Counts};
use crate::error::{Error, Result};

pub use remez::{best_poly_coeffs, best_poly_coeffs_with, cached_poly_coeffs, Anchor, PolyCoeffs};

/// Tuning constants of the polynomial estimator.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PolyEstimatorParams {
    /// Degree coefficient: `K = ceil(c0 ln n)`.
    pub c0: f64,
    /// Count threshold coefficient: the polynomial branch is used when `N_i <= c1 ln n`.
    pub c1: f64,
    /// Approximation interval coefficient: `[0, c2 ln n / n]`.
    pub c2: f64,
    /// Hard cap on the degree.
    pub max_degree: usize,
    /// Upper clamp; `None` means `ln S`.
    pub clamp_hi: Option<f64>,
}

impl Default for PolyEstimatorParams {
    fn default() -> Self {
        Self {
            c0: 1.0,
            c1: 0.7,
            c2: 1.4,
            max_degree: 25,
            clamp_hi: None,
        }
    }
}

impl PolyEstimatorParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.c0 > 0.0 && self.c1 > 0.0 && self.c2 > 0.0) {
            return Err(Error::InvalidConfig("c0, c1, c2 must be positive".into()));
        }
        if self.c2 < self.c1 {
            return Err(Error::InvalidConfig("c2 must be at least c1".into()));
        }
        if self.max_degree == 0 || self.max_degree > remez::MAX_CACHED_DEGREE {
            return Err(Error::InvalidConfig(format!(
                "max_degree must lie in 1..={}",
                remez::MAX_CACHED_DEGREE
            )));
        }
        Ok(())
    }

    /// Polynomial degree used for sample size `n`.
    pub fn degree(&self, n: u64) -> usize {
        let k = (self.c0 * (n as f64).ln()).ceil().max(1.0) as usize;
        k.min(self.max_degree).min(n as usize)
    }
}

/// Constants of the concentration ("good") event for the empirical state
/// frequencies.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ConfidenceParams {
    pub c3: f64,
    pub c4: f64,
    pub alpha: f64,
    pub alpha_prime: f64,
}

impl Default for ConfidenceParams {
    fn default() -> Self {
        Self {
            c3: 20.0,
            c4: 0.001,
            alpha: 0.001,
            alpha_prime: 0.01,
        }
    }
}

impl ConfidenceParams {
    /// `beta = c3^2 / (4 + 10 c3)`; at least 1 whenever `c3 >= 20`.
    pub fn beta(&self) -> f64 {
        self.c3 * self.c3 / (4.0 + 10.0 * self.c3)
    }
}

/// Unbiased estimator of `p^j` from `N ~ Binomial(n, p)`:
/// `N (N-1) ... (N-j+1) / (n (n-1) ... (n-j+1))`.
pub fn unbiased_monomial(count: u64, n: u64, power: u64) -> Result<f64> {
    if power > n {
        return Err(Error::DegreeExceedsSamples { degree: power, n });
    }
    debug_assert!(count <= n);
    let mut acc = 1.0;
    for r in 0..power {
        if count <= r {
            return Ok(0.0);
        }
        // each factor lies in [0, 1], so the running product cannot overflow
        acc *= (count - r) as f64 / (n - r) as f64;
    }
    Ok(acc)
}

/// Per-sample-size evaluation state of the polynomial estimator.
struct PolyKernel {
    n: u64,
    threshold: f64,
    /// `b_j` for `j = 1..=K`: the rescaled approximation, anchored at `phi(0) = 0`.
    weights: Vec<f64>,
}

impl PolyKernel {
    fn new(n: u64, params: &PolyEstimatorParams) -> Result<Self> {
        let ln_n = (n as f64).ln();
        let degree = params.degree(n);
        let coeffs = cached_poly_coeffs(degree, Anchor::Origin)?;
        let delta = (params.c2 * ln_n / n as f64).min(1.0);
        // -p ln p = delta * phi(p / delta) - p ln delta on [0, delta]
        let weights = (1..=degree)
            .map(|j| {
                let b = coeffs.coeffs[j] * delta.powi(1 - j as i32);
                if j == 1 {
                    b - delta.ln()
                } else {
                    b
                }
            })
            .collect();
        Ok(Self {
            n,
            threshold: params.c1 * ln_n,
            weights,
        })
    }

    fn term(&self, count: u64) -> f64 {
        if count as f64 <= self.threshold {
            let mut g = 1.0;
            let mut sum = 0.0;
            for (r, &w) in self.weights.iter().enumerate() {
                let r = r as u64;
                if count <= r {
                    break;
                }
                g *= (count - r) as f64 / (self.n - r) as f64;
                sum += w * g;
            }
            sum
        } else {
            let n = self.n as f64;
            neg_x_ln_x(count as f64 / n) + 0.5 / n
        }
    }
}

/// Polynomial estimator before clamping.
pub fn estimate_entropy_poly_unclamped(
    observed: &[u64],
    params: &PolyEstimatorParams,
) -> Result<f64> {
    let n: u64 = observed.iter().sum();
    if n < 2 {
        return Err(Error::TooFewSamples {
            required: 2,
            got: n,
        });
    }
    let kernel = PolyKernel::new(n, params)?;
    Ok(observed
        .iter()
        .filter(|&&c| c > 0)
        .map(|&c| kernel.term(c))
        .sum())
}

fn clamp_entropy(value: f64, upper: f64) -> f64 {
    value.max(0.0).min(upper.max(0.0))
}

/// Polynomial-approximation entropy estimate in nats, clamped to `[0, ln S]`.
pub fn estimate_entropy_poly(counts: &Counts, params: &PolyEstimatorParams) -> Result<f64> {
    EntropyEstimator::Poly(*params).estimate(counts)
}

/// Miller–Madow estimate `H_plugin + (S_obs - 1) / (2n)`, clamped to `[0, ln S]`.
pub fn estimate_entropy_mm(counts: &Counts) -> Result<f64> {
    EntropyEstimator::MillerMadow.estimate(counts)
}

/// A Shannon entropy estimator for i.i.d. samples.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase", tag = "kind")]
pub enum EntropyEstimator {
    Plugin,
    #[serde(rename = "mm")]
    MillerMadow,
    Poly(PolyEstimatorParams),
}

impl EntropyEstimator {
    pub fn name(&self) -> &'static str {
        match self {
            EntropyEstimator::Plugin => "plugin",
            EntropyEstimator::MillerMadow => "mm",
            EntropyEstimator::Poly(_) => "poly",
        }
    }

    /// Smallest sample size the estimator accepts.
    pub fn min_samples(&self) -> u64 {
        match self {
            EntropyEstimator::Poly(_) => 2,
            _ => 1,
        }
    }

    pub fn estimate(&self, counts: &Counts) -> Result<f64> {
        self.estimate_observed(counts.as_slice(), counts.alphabet())
    }

    /// Estimates from a list of counts (zeros allowed) over an alphabet of
    /// size `alphabet`. Only nonzero counts influence the estimate except
    /// through the `ln S` clamp.
    pub fn estimate_observed(&self, observed: &[u64], alphabet: usize) -> Result<f64> {
        let n: u64 = observed.iter().sum();
        let ln_s = (alphabet.max(1) as f64).ln();
        match self {
            EntropyEstimator::Plugin => Ok(plugin_from_counts(observed, n)),
            EntropyEstimator::MillerMadow => {
                if n == 0 {
                    return Err(Error::EmptyCounts);
                }
                let support = observed.iter().filter(|&&c| c > 0).count() as f64;
                let h = plugin_from_counts(observed, n) + (support - 1.0) / (2.0 * n as f64);
                Ok(clamp_entropy(h, ln_s))
            }
            EntropyEstimator::Poly(params) => {
                let raw = estimate_entropy_poly_unclamped(observed, params)?;
                Ok(clamp_entropy(raw, params.clamp_hi.unwrap_or(ln_s)))
            }
        }
    }
}
