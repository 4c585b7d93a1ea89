//! Transition-matrix algebra for finite-state chains.
//!
//! Covers validation, the stationary distribution, detailed balance, the
//! spectrum of reversible kernels, and the exact entropy rate
//! `sum_i pi_i sum_j T_ij ln(1/T_ij)`.

mod generate;
pub mod io;

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use petgraph::algo::tarjan_scc;
use petgraph::graph::DiGraph;
use serde::{Deserialize, Serialize};

use crate::dist::{neg_x_ln_x, ProbVector};
use crate::error::{Error, Result};

pub use generate::{generate, ChainFamily};

/// Row-sum tolerance accepted by [`validate`].
pub const ROW_SUM_TOL: f64 = 1e-10;
/// Largest state count solved directly; bigger chains use power iteration.
pub const DIRECT_SOLVE_LIMIT: usize = 2000;

/// A row-stochastic `S x S` kernel; row `i` is the law of `X_{t+1}` given `X_t = i`.
#[derive(Debug, Clone, PartialEq)]
pub struct TransitionMatrix {
    states: usize,
    data: Vec<f64>,
}

impl TransitionMatrix {
    pub fn states(&self) -> usize {
        self.states
    }

    #[inline]
    pub fn get(&self, from: usize, to: usize) -> f64 {
        self.data[from * self.states + to]
    }

    pub fn row(&self, from: usize) -> &[f64] {
        &self.data[from * self.states..(from + 1) * self.states]
    }

    pub fn rows(&self) -> impl Iterator<Item = &[f64]> {
        self.data.chunks_exact(self.states)
    }

    pub fn to_rows(&self) -> Vec<Vec<f64>> {
        self.rows().map(<[f64]>::to_vec).collect()
    }

    pub fn identity(states: usize) -> Self {
        let mut data = vec![0.0; states * states];
        for i in 0..states {
            data[i * states + i] = 1.0;
        }
        Self { states, data }
    }

    /// Validates a row-major buffer; see [`validate`].
    pub(crate) fn from_flat(states: usize, mut data: Vec<f64>) -> Result<Self> {
        debug_assert_eq!(data.len(), states * states);
        for (row, chunk) in data.chunks_exact_mut(states).enumerate() {
            if let Some(bad) = chunk.iter().find(|v| !(**v >= 0.0) || !v.is_finite()) {
                return Err(Error::NotStochastic {
                    row,
                    reason: format!("entry {bad} is negative or not finite"),
                });
            }
            let sum: f64 = chunk.iter().sum();
            if (sum - 1.0).abs() > ROW_SUM_TOL {
                return Err(Error::NotStochastic {
                    row,
                    reason: format!("row sums to {sum}"),
                });
            }
            // leave round-off level drift alone so write/read round trips are exact
            if (sum - 1.0).abs() > states as f64 * f64::EPSILON {
                chunk.iter_mut().for_each(|v| *v /= sum);
            }
        }
        Ok(Self { states, data })
    }
}

/// Checks that `rows` is a square row-stochastic matrix. Rows whose sum is
/// within [`ROW_SUM_TOL`] of one are renormalized.
pub fn validate(rows: &[Vec<f64>]) -> Result<TransitionMatrix> {
    let states = rows.len();
    if let Some((row, r)) = rows.iter().enumerate().find(|(_, r)| r.len() != states) {
        return Err(Error::NotSquare {
            rows: states,
            row,
            len: r.len(),
        });
    }
    TransitionMatrix::from_flat(states, rows.concat())
}

/// Stationary distribution `pi` with `pi T = pi`.
#[derive(Debug, Clone, PartialEq)]
pub struct StationaryDist {
    pub pi: ProbVector,
}

impl StationaryDist {
    pub fn as_slice(&self) -> &[f64] {
        self.pi.as_slice()
    }

    /// `|| pi T - pi ||_1`.
    pub fn residual(&self, t: &TransitionMatrix) -> f64 {
        let pi = self.as_slice();
        (0..t.states())
            .map(|j| {
                let flow: f64 = (0..t.states()).map(|i| pi[i] * t.get(i, j)).sum();
                (flow - pi[j]).abs()
            })
            .sum()
    }
}

/// Number of closed communicating classes of the support digraph.
pub fn closed_classes(t: &TransitionMatrix) -> usize {
    let s = t.states();
    let mut g = DiGraph::<(), ()>::with_capacity(s, 0);
    let nodes: Vec<_> = (0..s).map(|_| g.add_node(())).collect();
    for i in 0..s {
        for j in 0..s {
            if t.get(i, j) > 0.0 {
                g.add_edge(nodes[i], nodes[j], ());
            }
        }
    }
    let sccs = tarjan_scc(&g);
    let mut component = vec![0usize; s];
    for (c, members) in sccs.iter().enumerate() {
        for v in members {
            component[v.index()] = c;
        }
    }
    sccs.iter()
        .enumerate()
        .filter(|(c, members)| {
            members.iter().all(|v| {
                let i = v.index();
                (0..s).all(|j| t.get(i, j) == 0.0 || component[j] == *c)
            })
        })
        .count()
}

fn finish_stationary(mut pi: Vec<f64>) -> StationaryDist {
    pi.iter_mut().for_each(|p| *p = p.max(0.0));
    let total: f64 = pi.iter().sum();
    pi.iter_mut().for_each(|p| *p /= total);
    StationaryDist {
        pi: ProbVector::from_raw(pi),
    }
}

/// The unique stationary distribution of a chain with a single closed class.
pub fn stationary(t: &TransitionMatrix) -> Result<StationaryDist> {
    let classes = closed_classes(t);
    if classes != 1 {
        return Err(Error::NotIrreducible {
            closed_classes: classes,
        });
    }
    let s = t.states();
    if s <= DIRECT_SOLVE_LIMIT {
        // (T^T - I) pi = 0 with the last equation replaced by sum(pi) = 1
        let mut a = DMatrix::<f64>::zeros(s, s);
        for i in 0..s {
            for j in 0..s {
                a[(j, i)] = t.get(i, j);
            }
            a[(i, i)] -= 1.0;
        }
        for i in 0..s {
            a[(s - 1, i)] = 1.0;
        }
        let mut rhs = DVector::<f64>::zeros(s);
        rhs[s - 1] = 1.0;
        let sol = a
            .lu()
            .solve(&rhs)
            .ok_or(Error::NotIrreducible { closed_classes: 0 })?;
        Ok(finish_stationary(sol.iter().copied().collect()))
    } else {
        Ok(power_iteration(t))
    }
}

/// Power iteration on the lazy kernel `(I + T) / 2`, which has the same
/// stationary distribution and is aperiodic.
fn power_iteration(t: &TransitionMatrix) -> StationaryDist {
    let s = t.states();
    let mut pi = vec![1.0 / s as f64; s];
    let mut next = vec![0.0; s];
    for _ in 0..1_000_000 {
        next.iter_mut().zip(&pi).for_each(|(n, p)| *n = 0.5 * p);
        for (i, row) in t.rows().enumerate() {
            let w = 0.5 * pi[i];
            if w == 0.0 {
                continue;
            }
            for (n, &tij) in next.iter_mut().zip(row) {
                *n += w * tij;
            }
        }
        let diff: f64 = next.iter().zip(&pi).map(|(a, b)| (a - b).abs()).sum();
        std::mem::swap(&mut pi, &mut next);
        if diff < 1e-12 {
            break;
        }
    }
    finish_stationary(pi)
}

/// Largest detailed-balance violation `max_{i,j} |pi_i T_ij - pi_j T_ji|`.
pub fn detailed_balance_violation(t: &TransitionMatrix, pi: &[f64]) -> f64 {
    let s = t.states();
    let mut worst: f64 = 0.0;
    for i in 0..s {
        for j in (i + 1)..s {
            worst = worst.max((pi[i] * t.get(i, j) - pi[j] * t.get(j, i)).abs());
        }
    }
    worst
}

pub fn is_reversible(t: &TransitionMatrix, pi: &[f64], tol: f64) -> bool {
    detailed_balance_violation(t, pi) <= tol
}

/// Spectrum of a reversible kernel and the derived mixing quantities.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpectralInfo {
    /// Eigenvalues in nonincreasing order.
    pub eigenvalues: Vec<f64>,
    /// `1 - lambda_2`.
    pub gamma: f64,
    /// `1 - max_{i >= 2} |lambda_i|`.
    pub gamma_star: f64,
    /// `1 / gamma_star`; infinite when `gamma_star = 0`.
    pub t_rel: f64,
}

/// Tolerance on detailed balance required by [`spectral_info`].
pub const REVERSIBILITY_TOL: f64 = 1e-8;

/// Eigen-decomposes the symmetric similarity `D^{1/2} T D^{-1/2}`, `D = diag(pi)`.
pub fn spectral_info(t: &TransitionMatrix, pi: &StationaryDist) -> Result<SpectralInfo> {
    let s = t.states();
    let p = pi.as_slice();
    if p.len() != s {
        return Err(Error::DimensionMismatch {
            expected: s,
            got: p.len(),
        });
    }
    let violation = detailed_balance_violation(t, p);
    if violation > REVERSIBILITY_TOL || p.iter().any(|&x| !(x > 0.0)) {
        return Err(Error::NotReversible { violation });
    }
    let sq: Vec<f64> = p.iter().map(|x| x.sqrt()).collect();
    let mut a = DMatrix::<f64>::zeros(s, s);
    for i in 0..s {
        for j in 0..s {
            a[(i, j)] = sq[i] * t.get(i, j) / sq[j];
        }
    }
    let sym = (&a + a.transpose()) * 0.5;
    let mut eigenvalues: Vec<f64> = SymmetricEigen::new(sym)
        .eigenvalues
        .iter()
        .copied()
        .collect();
    eigenvalues.sort_by(|a, b| b.total_cmp(a));
    Ok(spectral_from_eigenvalues(eigenvalues))
}

pub(crate) fn spectral_from_eigenvalues(eigenvalues: Vec<f64>) -> SpectralInfo {
    let (gamma, gamma_star) = if eigenvalues.len() < 2 {
        (1.0, 1.0)
    } else {
        let second = eigenvalues[1];
        let max_abs = eigenvalues[1..].iter().map(|v| v.abs()).fold(0.0, f64::max);
        ((1.0 - second).max(0.0), (1.0 - max_abs).max(0.0))
    };
    let t_rel = if gamma_star > 0.0 {
        1.0 / gamma_star
    } else {
        f64::INFINITY
    };
    SpectralInfo {
        eigenvalues,
        gamma,
        gamma_star,
        t_rel,
    }
}

/// Exact entropy rate in nats: `sum_i pi_i H(T_i)`.
pub fn entropy_rate_exact(t: &TransitionMatrix, pi: &StationaryDist) -> f64 {
    t.rows()
        .zip(pi.as_slice())
        .map(|(row, &w)| w * row.iter().map(|&x| neg_x_ln_x(x)).sum::<f64>())
        .sum()
}

/// The same rate computed as `H(X_1, X_2) - H(X_1)` under stationarity.
pub fn entropy_rate_joint_form(t: &TransitionMatrix, pi: &StationaryDist) -> f64 {
    let p = pi.as_slice();
    let joint: f64 = t
        .rows()
        .zip(p)
        .map(|(row, &w)| row.iter().map(|&x| neg_x_ln_x(w * x)).sum::<f64>())
        .sum();
    let marginal: f64 = p.iter().map(|&x| neg_x_ln_x(x)).sum();
    joint - marginal
}
