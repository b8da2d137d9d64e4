//! q-variation norms and λ-jump counts of finite real sequences.
//!
//! For a sequence `a` indexed by an increasing grid, the q-variation norm is
//!
//! ```text
//! ‖a‖_{v_q} = sup ( |a_{n_0}|^q + Σ_{k≥1} |a_{n_k} − a_{n_{k−1}}|^q )^{1/q}
//! ```
//!
//! over increasing index chains `n_0 < n_1 < …`. On a finite grid the
//! supremum is attained and [`vq_norm`] finds it exactly with an O(N²)
//! dynamic program. The jump count `N(a, λ)` is the largest number of
//! index pairs `s_1 < t_1 ≤ s_2 < t_2 ≤ …` with `|a_{t_k} − a_{s_k}| > λ`;
//! [`jump_count`] computes it greedily in one pass.

use serde::{Deserialize, Serialize};

use crate::error::{Result, VarlabError};

/// Longest sequence accepted by the dynamic program.
pub const MAX_SEQUENCE_LEN: usize = 1 << 16;
/// Longest sequence accepted by the exhaustive variation oracle.
pub const VQ_ORACLE_MAX_LEN: usize = 20;
/// Longest sequence accepted by the exhaustive jump oracle.
pub const JUMP_ORACLE_MAX_LEN: usize = 14;

/// A finite real sequence on a strictly increasing index grid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScalarSequence {
    indices: Vec<f64>,
    values: Vec<f64>,
}

impl ScalarSequence {
    pub fn new(indices: Vec<f64>, values: Vec<f64>) -> Result<Self> {
        if values.is_empty() {
            return Err(VarlabError::invalid("sequence must be nonempty"));
        }
        if indices.len() != values.len() {
            return Err(VarlabError::invalid(format!(
                "{} indices for {} values",
                indices.len(),
                values.len()
            )));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(VarlabError::invalid("sequence values must be finite"));
        }
        check_strictly_increasing(&indices)?;
        Ok(ScalarSequence { indices, values })
    }

    /// Sequence indexed by `0, 1, …, len−1`.
    pub fn from_values(values: Vec<f64>) -> Result<Self> {
        let indices = (0..values.len()).map(|i| i as f64).collect();
        Self::new(indices, values)
    }

    pub fn indices(&self) -> &[f64] {
        &self.indices
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    /// Restriction to the given (strictly increasing) positions.
    pub fn subsequence(&self, positions: &[usize]) -> Result<Self> {
        if positions.windows(2).any(|w| w[0] >= w[1]) {
            return Err(VarlabError::invalid("positions must be strictly increasing"));
        }
        if positions.iter().any(|&p| p >= self.len()) {
            return Err(VarlabError::invalid("position out of range"));
        }
        Self::new(
            positions.iter().map(|&p| self.indices[p]).collect(),
            positions.iter().map(|&p| self.values[p]).collect(),
        )
    }
}

pub(crate) fn check_strictly_increasing(grid: &[f64]) -> Result<()> {
    if grid.iter().any(|t| !t.is_finite()) {
        return Err(VarlabError::invalid("grid points must be finite"));
    }
    if let Some(w) = grid.windows(2).find(|w| w[0] >= w[1]) {
        return Err(VarlabError::invalid(format!(
            "grid must be strictly increasing, found {} followed by {}",
            w[0], w[1]
        )));
    }
    Ok(())
}

/// Optimal value of the variation problem together with one attaining chain.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VariationResult {
    pub norm: f64,
    /// Positions (not index values) of the optimal chain, strictly increasing.
    pub witness: Vec<usize>,
}

impl VariationResult {
    /// Recomputes `|a_{n_0}|^q + Σ |a_{n_k} − a_{n_{k−1}}|^q` along the witness.
    pub fn chain_sum(&self, values: &[f64], q: f64) -> f64 {
        chain_power_sum(values, &self.witness, q)
    }
}

/// The λ-jump pairs of a sequence.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct JumpResult {
    pub count: usize,
    /// `(s_k, t_k)` positions with `s_1 < t_1 ≤ s_2 < t_2 ≤ …`.
    pub pairs: Vec<(usize, usize)>,
}

fn chain_power_sum(values: &[f64], chain: &[usize], q: f64) -> f64 {
    let mut iter = chain.iter();
    let Some(&first) = iter.next() else {
        return 0.0;
    };
    let mut total = values[first].abs().powf(q);
    let mut prev = first;
    for &k in iter {
        total += (values[k] - values[prev]).abs().powf(q);
        prev = k;
    }
    total
}

fn check_q(q: f64) -> Result<()> {
    if !(q >= 1.0) || !q.is_finite() {
        return Err(VarlabError::invalid(format!("q must satisfy 1 ≤ q < ∞, got {q}")));
    }
    Ok(())
}

/// `|x|^q`, using repeated multiplication for small integer exponents.
#[derive(Clone, Copy)]
struct PowQ {
    q: f64,
    int: Option<i32>,
}

impl PowQ {
    fn new(q: f64) -> Self {
        let int = (q.fract() == 0.0 && q <= 16.0).then_some(q as i32);
        PowQ { q, int }
    }

    #[inline]
    fn eval(self, x: f64) -> f64 {
        let x = x.abs();
        match self.int {
            Some(n) => x.powi(n),
            None => x.powf(self.q),
        }
    }
}

/// Exact q-variation norm by dynamic programming.
///
/// `best[k]` is the largest power sum over chains ending at position `k`:
/// `best[k] = max(|a_k|^q, max_{j<k} best[j] + |a_k − a_j|^q)`.
pub fn vq_norm(seq: &ScalarSequence, q: f64) -> Result<VariationResult> {
    check_q(q)?;
    if seq.len() > MAX_SEQUENCE_LEN {
        return Err(VarlabError::invalid(format!(
            "sequence of length {} exceeds the {MAX_SEQUENCE_LEN}-point limit",
            seq.len()
        )));
    }
    let (power, witness) = vq_power_dp(seq.values(), q, true);
    Ok(VariationResult {
        norm: power.powf(1.0 / q),
        witness,
    })
}

/// `‖a‖_{v_q}^q` without the witness; the hot path for lattice norms.
pub fn vq_power(values: &[f64], q: f64) -> f64 {
    vq_power_dp(values, q, false).0
}

/// Norm only, for callers that validated `q` and the length already.
/// `v_q` as a plain number. Never below `max |a_k|`, which it dominates
/// mathematically, so comparisons against the maximal function are exact.
pub(crate) fn vq_norm_unchecked(values: &[f64], q: f64) -> f64 {
    let sup = values.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    vq_power(values, q).powf(1.0 / q).max(sup)
}

fn vq_power_dp(values: &[f64], q: f64, track: bool) -> (f64, Vec<usize>) {
    let n = values.len();
    if n == 0 {
        return (0.0, Vec::new());
    }
    let pow = PowQ::new(q);
    let mut best = Vec::with_capacity(n);
    let mut prev = if track { vec![usize::MAX; n] } else { Vec::new() };
    let mut top = 0usize;
    for k in 0..n {
        let ak = values[k];
        let mut b = pow.eval(ak);
        let mut arg = usize::MAX;
        for (j, &bj) in best.iter().enumerate() {
            let cand = bj + pow.eval(ak - values[j]);
            if cand > b {
                b = cand;
                arg = j;
            }
        }
        best.push(b);
        if track {
            prev[k] = arg;
        }
        if b > best[top] {
            top = k;
        }
    }
    let witness = if track {
        let mut chain = vec![top];
        let mut cur = top;
        while prev[cur] != usize::MAX {
            cur = prev[cur];
            chain.push(cur);
        }
        chain.reverse();
        chain
    } else {
        Vec::new()
    };
    (best[top], witness)
}

/// Exact λ-jump count.
///
/// Scans left to right keeping the running minimum and maximum since the
/// last closing position; a pair closes at the first position whose value
/// leaves the band `[max − λ, min + λ]`, and the next window starts there.
/// Closing as early as possible is optimal by an exchange argument.
pub fn jump_count(seq: &ScalarSequence, lambda: f64) -> Result<JumpResult> {
    check_lambda(lambda)?;
    let values = seq.values();
    let mut pairs = Vec::new();
    let mut lo = 0usize;
    let mut hi = 0usize;
    for t in 1..values.len() {
        let at = values[t];
        let from = if at - values[lo] > lambda {
            Some(lo)
        } else if values[hi] - at > lambda {
            Some(hi)
        } else {
            None
        };
        match from {
            Some(s) => {
                pairs.push((s, t));
                lo = t;
                hi = t;
            }
            None => {
                if at < values[lo] {
                    lo = t;
                }
                if at > values[hi] {
                    hi = t;
                }
            }
        }
    }
    Ok(JumpResult {
        count: pairs.len(),
        pairs,
    })
}

/// Jump count only, for already-validated λ.
pub(crate) fn jump_count_values(values: &[f64], lambda: f64) -> usize {
    let mut count = 0;
    let (mut lo, mut hi) = match values.first() {
        Some(&v) => (v, v),
        None => return 0,
    };
    for &at in &values[1..] {
        if at - lo > lambda || hi - at > lambda {
            count += 1;
            lo = at;
            hi = at;
        } else {
            lo = lo.min(at);
            hi = hi.max(at);
        }
    }
    count
}

fn check_lambda(lambda: f64) -> Result<()> {
    if !(lambda > 0.0) || !lambda.is_finite() {
        return Err(VarlabError::invalid(format!("lambda must be positive, got {lambda}")));
    }
    Ok(())
}

/// Exhaustive reference implementations used to cross-check the fast paths.
pub mod oracle {
    use super::*;

    /// Enumerates every nonempty subsequence (2^N − 1 of them).
    pub fn vq_norm_oracle(seq: &ScalarSequence, q: f64) -> Result<VariationResult> {
        check_q(q)?;
        let n = seq.len();
        if n > VQ_ORACLE_MAX_LEN {
            return Err(VarlabError::invalid(format!(
                "oracle limited to {VQ_ORACLE_MAX_LEN} points, got {n}"
            )));
        }
        let values = seq.values();
        let mut best = f64::NEG_INFINITY;
        let mut best_mask = 0u32;
        let mut chain = Vec::with_capacity(n);
        for mask in 1u32..(1u32 << n) {
            chain.clear();
            chain.extend((0..n).filter(|&i| mask & (1 << i) != 0));
            let s = chain_power_sum(values, &chain, q);
            if s > best {
                best = s;
                best_mask = mask;
            }
        }
        let witness: Vec<usize> = (0..n).filter(|&i| best_mask & (1 << i) != 0).collect();
        Ok(VariationResult {
            norm: best.powf(1.0 / q),
            witness,
        })
    }

    /// Searches every admissible pair system.
    pub fn jump_count_oracle(seq: &ScalarSequence, lambda: f64) -> Result<JumpResult> {
        check_lambda(lambda)?;
        let n = seq.len();
        if n > JUMP_ORACLE_MAX_LEN {
            return Err(VarlabError::invalid(format!(
                "oracle limited to {JUMP_ORACLE_MAX_LEN} points, got {n}"
            )));
        }
        let pairs = search(seq.values(), 0, lambda);
        Ok(JumpResult {
            count: pairs.len(),
            pairs,
        })
    }

    fn search(values: &[f64], start: usize, lambda: f64) -> Vec<(usize, usize)> {
        let mut best = Vec::new();
        for s in start..values.len() {
            for t in s + 1..values.len() {
                if (values[t] - values[s]).abs() > lambda {
                    let rest = search(values, t, lambda);
                    if rest.len() + 1 > best.len() {
                        best = Vec::with_capacity(rest.len() + 1);
                        best.push((s, t));
                        best.extend(rest);
                    }
                }
            }
        }
        best
    }
}

/// How new grid points are placed between neighbours during refinement.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Bisection {
    /// `(a + b) / 2`
    Arithmetic,
    /// `sqrt(a b)`, for logarithmic grids of positive reals.
    Geometric,
}

impl Bisection {
    fn midpoint(self, a: f64, b: f64) -> f64 {
        match self {
            Bisection::Arithmetic => 0.5 * (a + b),
            Bisection::Geometric => (a * b).sqrt(),
        }
    }
}

/// Outcome of [`refine_vq`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Refinement {
    /// v_q on the finest grid reached: a lower bound for the continuous V_q.
    pub value: f64,
    /// The finest grid.
    pub grid: Vec<f64>,
    /// Bisection rounds whose relative increase was at least `rel_tol`.
    pub rounds: usize,
    /// v_q after each grid, coarsest first.
    pub history: Vec<f64>,
}

/// Largest grid [`refine_vq`] will build.
pub const REFINE_MAX_POINTS: usize = 1 << 16;

/// Approximates the continuous V_q norm of `family` from below.
///
/// Starts from `coarse_grid` and inserts a midpoint between every pair of
/// neighbours until one round raises v_q by a relative factor below
/// `rel_tol`. Sampling can only underestimate V_q, so the returned value is
/// a lower bound.
pub fn refine_vq<F>(
    family: F,
    coarse_grid: &[f64],
    q: f64,
    rel_tol: f64,
    spacing: Bisection,
) -> Result<Refinement>
where
    F: Fn(f64) -> f64,
{
    check_q(q)?;
    if coarse_grid.is_empty() {
        return Err(VarlabError::invalid("coarse grid must be nonempty"));
    }
    check_strictly_increasing(coarse_grid)?;
    if !(rel_tol > 0.0) {
        return Err(VarlabError::invalid("rel_tol must be positive"));
    }
    if spacing == Bisection::Geometric && coarse_grid[0] <= 0.0 {
        return Err(VarlabError::invalid("geometric refinement needs a positive grid"));
    }
    let mut grid = coarse_grid.to_vec();
    let mut values: Vec<f64> = grid.iter().map(|&t| family(t)).collect();
    if values.iter().any(|v| !v.is_finite()) {
        return Err(VarlabError::invalid("family returned a non-finite value"));
    }
    let mut current = vq_norm_unchecked(&values, q);
    let mut history = vec![current];
    let mut rounds = 0;
    loop {
        if 2 * grid.len() - 1 > REFINE_MAX_POINTS {
            return Err(VarlabError::NonConvergence {
                iterations: rounds,
                detail: format!(
                    "refinement cap of {REFINE_MAX_POINTS} points reached with v_q = {current} (lower bound)"
                ),
            });
        }
        let mut next_grid = Vec::with_capacity(2 * grid.len() - 1);
        let mut next_values = Vec::with_capacity(2 * grid.len() - 1);
        for i in 0..grid.len() {
            next_grid.push(grid[i]);
            next_values.push(values[i]);
            if i + 1 < grid.len() {
                let mid = spacing.midpoint(grid[i], grid[i + 1]);
                let v = family(mid);
                if !v.is_finite() {
                    return Err(VarlabError::invalid("family returned a non-finite value"));
                }
                next_grid.push(mid);
                next_values.push(v);
            }
        }
        let refined = vq_norm_unchecked(&next_values, q);
        history.push(refined);
        grid = next_grid;
        values = next_values;
        let increase = if current > 0.0 {
            (refined - current) / current
        } else if refined > 0.0 {
            f64::INFINITY
        } else {
            0.0
        };
        current = refined;
        if increase < rel_tol {
            break;
        }
        rounds += 1;
    }
    Ok(Refinement {
        value: current,
        grid,
        rounds,
        history,
    })
}
