//! Best uniform polynomial approximation of `phi(x) = -x ln x` on `[0, 1]`.
//!
//! The approximation is computed with the Remez exchange algorithm in a
//! Chebyshev basis on `[0, 1]`. Extrema of the error are searched on a grid
//! in `u = sqrt(x)`, which spreads out the oscillations that bunch up near the
//! singular endpoint `x = 0`. A discrete linear-programming minimax on
//! Chebyshev nodes is kept as a fallback when the exchange stalls.
//!
//! Two families are supported: unrestricted polynomials, and polynomials
//! anchored at the origin (`p(0) = 0`, i.e. `p(x) = x q(x)`). The anchored
//! family is what the entropy estimator plugs in, since unseen symbols must
//! contribute exactly zero.

use std::f64::consts::PI;
use std::sync::OnceLock;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::dist::neg_x_ln_x;
use crate::error::{Error, Result};

/// Iteration budget of the exchange loop.
pub const MAX_ITERATIONS: usize = 200;
/// Absolute levelling tolerance: stop once `max|e| - |E| <= EXCHANGE_TOL`.
pub const EXCHANGE_TOL: f64 = 1e-12;
/// Number of Chebyshev nodes used by the discrete LP fallback.
pub const FALLBACK_NODES: usize = 4096;
/// Largest degree kept in the process-wide coefficient cache.
pub const MAX_CACHED_DEGREE: usize = 64;

/// Polynomial family searched by the exchange.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Anchor {
    /// Any polynomial of degree `K`.
    Free,
    /// Degree-`K` polynomials vanishing at `x = 0`.
    Origin,
}

impl Anchor {
    /// Number of free coefficients at degree `degree`.
    fn unknowns(self, degree: usize) -> usize {
        match self {
            Anchor::Free => degree + 1,
            Anchor::Origin => degree,
        }
    }
}

/// Degree-`K` minimax approximation of `-x ln x` on `[0, 1]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PolyCoeffs {
    pub degree: usize,
    pub anchor: Anchor,
    /// Monomial coefficients `a_0..=a_K`: `p(x) = sum_j a_j x^j`.
    pub coeffs: Vec<f64>,
    /// Chebyshev coefficients `c_k` of `sum_k c_k T_k(2x - 1)`, which is `p`
    /// itself when free and `p(x) / x` when anchored.
    pub chebyshev: Vec<f64>,
    /// `max_{x in [0,1]} |phi(x) - p(x)|`.
    pub sup_error: f64,
    /// Points where the error alternates in sign with magnitude close to `sup_error`.
    pub alternation: Vec<f64>,
}

impl PolyCoeffs {
    pub fn eval(&self, x: f64) -> f64 {
        eval_basis(self.anchor, &self.chebyshev, x)
    }

    /// `phi(x) - p(x)`.
    pub fn error_at(&self, x: f64) -> f64 {
        neg_x_ln_x(x) - self.eval(x)
    }
}

fn eval_basis(anchor: Anchor, cheb: &[f64], x: f64) -> f64 {
    match anchor {
        Anchor::Free => clenshaw(cheb, 2.0 * x - 1.0),
        Anchor::Origin => x * clenshaw(cheb, 2.0 * x - 1.0),
    }
}

fn clenshaw(c: &[f64], t: f64) -> f64 {
    if c.is_empty() {
        return 0.0;
    }
    let mut b1 = 0.0;
    let mut b2 = 0.0;
    for &ck in c.iter().skip(1).rev() {
        let b0 = ck + 2.0 * t * b1 - b2;
        b2 = b1;
        b1 = b0;
    }
    c[0] + t * b1 - b2
}

/// Values of the basis functions at `x`, one per unknown.
fn basis_row(anchor: Anchor, x: f64, out: &mut [f64]) {
    let t = 2.0 * x - 1.0;
    let scale = match anchor {
        Anchor::Free => 1.0,
        Anchor::Origin => x,
    };
    if out.is_empty() {
        return;
    }
    out[0] = scale;
    if out.len() > 1 {
        out[1] = scale * t;
    }
    for k in 2..out.len() {
        out[k] = 2.0 * t * out[k - 1] - out[k - 2];
    }
}

/// Converts `sum_k c_k T_k(2x - 1)` into monomial coefficients in `x`.
fn chebyshev_to_monomial(cheb: &[f64]) -> Vec<f64> {
    let degree = cheb.len() - 1;
    let mut out = vec![0.0; degree + 1];
    let mut prev: Vec<f64> = vec![1.0];
    let mut cur: Vec<f64> = vec![-1.0, 2.0];
    out[0] += cheb[0];
    if degree == 0 {
        return out;
    }
    for (j, v) in cur.iter().enumerate() {
        out[j] += cheb[1] * v;
    }
    for &ck in &cheb[2..] {
        // T_{k+1} = 2 (2x - 1) T_k - T_{k-1}
        let mut next = vec![0.0; cur.len() + 1];
        for (j, &v) in cur.iter().enumerate() {
            next[j] -= 2.0 * v;
            next[j + 1] += 4.0 * v;
        }
        for (j, &v) in prev.iter().enumerate() {
            next[j] -= v;
        }
        for (j, &v) in next.iter().enumerate() {
            out[j] += ck * v;
        }
        prev = std::mem::replace(&mut cur, next);
    }
    out
}

/// Solves `p(x_i) + (-1)^i E = phi(x_i)` on the reference set.
fn solve_reference(anchor: Anchor, refs: &[f64]) -> Option<(Vec<f64>, f64)> {
    let m = refs.len();
    let k = m - 1;
    let mut a = DMatrix::<f64>::zeros(m, m);
    let mut rhs = DVector::<f64>::zeros(m);
    let mut row = vec![0.0; k];
    for (i, &x) in refs.iter().enumerate() {
        basis_row(anchor, x, &mut row);
        for (j, &v) in row.iter().enumerate() {
            a[(i, j)] = v;
        }
        a[(i, k)] = if i % 2 == 0 { 1.0 } else { -1.0 };
        rhs[i] = neg_x_ln_x(x);
    }
    let sol = a.lu().solve(&rhs)?;
    if sol.iter().any(|v| !v.is_finite()) {
        return None;
    }
    Some((sol.as_slice()[..k].to_vec(), sol[k]))
}

fn error_u(anchor: Anchor, cheb: &[f64], u: f64) -> f64 {
    let x = u * u;
    neg_x_ln_x(x) - eval_basis(anchor, cheb, x)
}

/// Maximizes `|e|` on `[lo, hi]` in the `u` variable by golden-section search.
fn refine_extremum(anchor: Anchor, cheb: &[f64], lo: f64, hi: f64) -> (f64, f64) {
    let g = (5f64.sqrt() - 1.0) / 2.0;
    let (mut a, mut b) = (lo, hi);
    let mut c = b - g * (b - a);
    let mut d = a + g * (b - a);
    let mut fc = error_u(anchor, cheb, c).abs();
    let mut fd = error_u(anchor, cheb, d).abs();
    for _ in 0..80 {
        if b - a < 1e-15 {
            break;
        }
        if fc > fd {
            b = d;
            d = c;
            fd = fc;
            c = b - g * (b - a);
            fc = error_u(anchor, cheb, c).abs();
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + g * (b - a);
            fd = error_u(anchor, cheb, d).abs();
        }
    }
    let mut best = (0.5 * (a + b), error_u(anchor, cheb, 0.5 * (a + b)));
    for u in [lo, hi] {
        let e = error_u(anchor, cheb, u);
        if e.abs() > best.1.abs() {
            best = (u, e);
        }
    }
    best
}

/// Local extrema of the error with alternating signs, as `(x, e(x))` pairs
/// sorted by `x`. One extremum is kept per maximal run of constant sign.
fn locate_extrema(anchor: Anchor, cheb: &[f64]) -> Vec<(f64, f64)> {
    let grid = 64 * (cheb.len() + 2) + 1000;
    let us: Vec<f64> = (0..=grid)
        .map(|m| 0.5 * (1.0 - (PI * m as f64 / grid as f64).cos()))
        .collect();
    let es: Vec<f64> = us.iter().map(|&u| error_u(anchor, cheb, u)).collect();

    let mut runs: Vec<(usize, f64)> = Vec::new(); // (argmax index, sign)
    let mut sign = 0.0;
    for (m, &e) in es.iter().enumerate() {
        let s = if e > 0.0 {
            1.0
        } else if e < 0.0 {
            -1.0
        } else {
            sign
        };
        if s == 0.0 {
            continue;
        }
        match runs.last_mut() {
            Some((best, rs)) if *rs == s => {
                if e.abs() > es[*best].abs() {
                    *best = m;
                }
            }
            _ => runs.push((m, s)),
        }
        sign = s;
    }

    runs.into_iter()
        .map(|(m, s)| {
            let lo = us[m.saturating_sub(1)];
            let hi = us[(m + 1).min(grid)];
            let (u, e) = refine_extremum(anchor, cheb, lo, hi);
            // the refined point must keep the run's sign
            let (u, e) = if e * s > 0.0 { (u, e) } else { (us[m], es[m]) };
            (u * u, e)
        })
        .collect()
}

/// Replaces one reference point by `z`, keeping the sign alternation.
fn single_exchange(refs: &mut Vec<f64>, ref_signs: &[f64], z: f64, z_sign: f64) {
    let last = refs.len() - 1;
    if z < refs[0] {
        if z_sign == ref_signs[0] {
            refs[0] = z;
        } else {
            refs.pop();
            refs.insert(0, z);
        }
    } else if z > refs[last] {
        if z_sign == ref_signs[last] {
            refs[last] = z;
        } else {
            refs.remove(0);
            refs.push(z);
        }
    } else {
        let i = refs
            .partition_point(|&r| r <= z)
            .saturating_sub(1)
            .min(last - 1);
        if z_sign == ref_signs[i] {
            refs[i] = z;
        } else {
            refs[i + 1] = z;
        }
    }
}

fn finish(
    anchor: Anchor,
    degree: usize,
    cheb: Vec<f64>,
    sup_error: f64,
    alternation: Vec<f64>,
) -> PolyCoeffs {
    let coeffs = if cheb.is_empty() {
        vec![0.0; degree + 1]
    } else {
        let mono = chebyshev_to_monomial(&cheb);
        match anchor {
            Anchor::Free => mono,
            Anchor::Origin => std::iter::once(0.0).chain(mono).collect(),
        }
    };
    PolyCoeffs {
        degree,
        anchor,
        coeffs,
        chebyshev: cheb,
        sup_error,
        alternation,
    }
}

/// Remez exchange for `-x ln x` on `[0, 1]` over unrestricted polynomials.
pub fn remez(degree: usize) -> Result<PolyCoeffs> {
    remez_with(degree, Anchor::Free)
}

/// Remez exchange within the given family.
pub fn remez_with(degree: usize, anchor: Anchor) -> Result<PolyCoeffs> {
    let e_inv = (-1f64).exp();
    match (anchor, degree) {
        (Anchor::Free, 0) => {
            // range of phi on [0,1] is [0, 1/e]; the best constant is its midrange
            let half = 0.5 * e_inv;
            return Ok(finish(anchor, 0, vec![half], half, vec![0.0, e_inv]));
        }
        (Anchor::Origin, 0) => return Ok(finish(anchor, 0, Vec::new(), e_inv, vec![e_inv])),
        _ => {}
    }
    let m = anchor.unknowns(degree) + 1;
    // the anchored family is degenerate at x = 0, so start strictly inside
    let offset = match anchor {
        Anchor::Free => 0.0,
        Anchor::Origin => 1.0,
    };
    let mut refs: Vec<f64> = (0..m)
        .map(|i| 0.5 * (1.0 - (PI * (i as f64 + offset) / (m as f64 - 1.0 + offset)).cos()))
        .collect();

    let mut last_gap = f64::INFINITY;
    for _ in 0..MAX_ITERATIONS {
        let (cheb, level) =
            solve_reference(anchor, &refs).ok_or_else(|| Error::ConvergenceFailure {
                degree,
                reason: "singular reference system".into(),
            })?;
        let extrema = locate_extrema(anchor, &cheb);
        let (zx, ze) = extrema.iter().copied().fold((0.0f64, 0.0f64), |acc, p| {
            if p.1.abs() > acc.1.abs() {
                p
            } else {
                acc
            }
        });
        let max_abs = ze.abs();

        let mut next: Vec<(f64, f64)> = extrema;
        if next.len() >= m {
            while next.len() > m {
                if next[0].1.abs() < next[next.len() - 1].1.abs() {
                    next.remove(0);
                } else {
                    next.pop();
                }
            }
            let min_abs = next.iter().map(|p| p.1.abs()).fold(f64::INFINITY, f64::min);
            let gap = max_abs - min_abs;
            last_gap = gap;
            if gap <= EXCHANGE_TOL && (max_abs - level.abs()) <= EXCHANGE_TOL {
                let alternation = next.iter().map(|p| p.0).collect();
                return Ok(finish(anchor, degree, cheb, max_abs, alternation));
            }
            refs = next.iter().map(|p| p.0).collect();
        } else {
            let signs: Vec<f64> = (0..m)
                .map(|i| {
                    if i % 2 == 0 {
                        level.signum()
                    } else {
                        -level.signum()
                    }
                })
                .collect();
            single_exchange(&mut refs, &signs, zx, ze.signum());
        }
        refs.sort_by(f64::total_cmp);
        refs.dedup();
        if refs.len() != m {
            return Err(Error::ConvergenceFailure {
                degree,
                reason: "reference points collapsed".into(),
            });
        }
    }
    Err(Error::ConvergenceFailure {
        degree,
        reason: format!("levelling gap {last_gap:e} after {MAX_ITERATIONS} iterations"),
    })
}

/// Discrete minimax approximation over `nodes` Chebyshev nodes of `[0, 1]`,
/// solved as a linear program. The reported `sup_error` is measured on the
/// continuous interval.
pub fn discrete_minimax(degree: usize, anchor: Anchor, nodes: usize) -> Result<PolyCoeffs> {
    use minilp::{ComparisonOp, LinearExpr, OptimizationDirection, Problem};

    let unknowns = anchor.unknowns(degree);
    let mut lp = Problem::new(OptimizationDirection::Minimize);
    let vars: Vec<_> = (0..unknowns)
        .map(|_| lp.add_var(0.0, (f64::NEG_INFINITY, f64::INFINITY)))
        .collect();
    let level = lp.add_var(1.0, (0.0, f64::INFINITY));
    let mut row = vec![0.0; unknowns];
    for m in 0..nodes {
        let x = 0.5 * (1.0 - (PI * (m as f64 + 0.5) / nodes as f64).cos());
        basis_row(anchor, x, &mut row);
        let f = neg_x_ln_x(x);
        let mut upper = LinearExpr::empty();
        let mut lower = LinearExpr::empty();
        for (k, &v) in vars.iter().enumerate() {
            upper.add(v, row[k]);
            lower.add(v, row[k]);
        }
        upper.add(level, -1.0);
        lower.add(level, 1.0);
        lp.add_constraint(upper, ComparisonOp::Le, f);
        lp.add_constraint(lower, ComparisonOp::Ge, f);
    }
    let solution = lp.solve().map_err(|e| Error::ConvergenceFailure {
        degree,
        reason: format!("LP fallback failed: {e}"),
    })?;
    let cheb: Vec<f64> = vars.iter().map(|&v| *solution.var_value(v)).collect();
    let extrema = locate_extrema(anchor, &cheb);
    let sup_error = extrema.iter().map(|p| p.1.abs()).fold(0.0, f64::max);
    let alternation = extrema.iter().map(|p| p.0).collect();
    Ok(finish(anchor, degree, cheb, sup_error, alternation))
}

/// Best polynomial approximation of degree `degree`: Remez exchange, falling
/// back to the discrete LP minimax when the exchange fails.
pub fn best_poly_coeffs(degree: usize) -> Result<PolyCoeffs> {
    best_poly_coeffs_with(degree, Anchor::Free)
}

pub fn best_poly_coeffs_with(degree: usize, anchor: Anchor) -> Result<PolyCoeffs> {
    remez_with(degree, anchor).or_else(|_| discrete_minimax(degree, anchor, FALLBACK_NODES))
}

type Cache = [OnceLock<PolyCoeffs>; MAX_CACHED_DEGREE + 1];

static FREE_CACHE: Cache = [const { OnceLock::new() }; MAX_CACHED_DEGREE + 1];
static ORIGIN_CACHE: Cache = [const { OnceLock::new() }; MAX_CACHED_DEGREE + 1];

/// Cached [`best_poly_coeffs_with`]. Concurrent first lookups may race to
/// compute but only one result is stored.
pub fn cached_poly_coeffs(degree: usize, anchor: Anchor) -> Result<&'static PolyCoeffs> {
    let cache = match anchor {
        Anchor::Free => &FREE_CACHE,
        Anchor::Origin => &ORIGIN_CACHE,
    };
    let slot = cache.get(degree).ok_or_else(|| Error::ConvergenceFailure {
        degree,
        reason: format!("degree above cache limit {MAX_CACHED_DEGREE}"),
    })?;
    if let Some(c) = slot.get() {
        return Ok(c);
    }
    let computed = best_poly_coeffs_with(degree, anchor)?;
    Ok(slot.get_or_init(|| computed))
}
