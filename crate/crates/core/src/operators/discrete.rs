use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Result, VarlabError};
use crate::lattice::LatticeFunction;
use crate::operators::projection::fixed_space_projection_generator;
use crate::operators::regular::RegularOperator;
use crate::operators::semigroup::Generator;

/// Square functions warn when the last retained term exceeds this share of the total.
pub const TAIL_RATIO_LIMIT: f64 = 1e-6;

/// Order and power of the difference operator `Δ_n^m = T^n (T − I)^m`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct DeltaSpec {
    pub m: usize,
    pub n: usize,
}

/// `(T − I) F`.
fn minus_identity(k: &DMatrix<f64>, f: &DMatrix<f64>) -> DMatrix<f64> {
    k * f - f
}

fn binomial(n: usize, k: usize) -> f64 {
    (0..k).fold(1.0, |acc, i| acc * (n - i) as f64 / (i + 1) as f64)
}

/// `M_n(T) f = (1/(n+1)) Σ_{k=0}^n T^k f` via `M_n = (n M_{n−1} + T^n f)/(n+1)`.
pub fn ergodic_average_discrete(t: &RegularOperator, n: usize, f: &LatticeFunction) -> Result<LatticeFunction> {
    t.check_function(f)?;
    let family = ergodic_family(t.kernel(), f.values(), n);
    f.with_values(family.into_iter().last().expect("n + 1 members"))
}

/// `M_0 f, …, M_{n_max} f`.
pub fn ergodic_family(k: &DMatrix<f64>, f: &DMatrix<f64>, n_max: usize) -> Vec<DMatrix<f64>> {
    let mut out = Vec::with_capacity(n_max + 1);
    let mut power = f.clone();
    let mut avg = f.clone();
    out.push(avg.clone());
    for n in 1..=n_max {
        power = k * power;
        avg = (avg * n as f64 + &power) / (n + 1) as f64;
        out.push(avg.clone());
    }
    out
}

/// `T^0 f, …, T^{n_max} f`.
pub fn power_family(k: &DMatrix<f64>, f: &DMatrix<f64>, n_max: usize) -> Vec<DMatrix<f64>> {
    let mut out = Vec::with_capacity(n_max + 1);
    let mut cur = f.clone();
    out.push(cur.clone());
    for _ in 0..n_max {
        cur = k * cur;
        out.push(cur.clone());
    }
    out
}

/// `Δ_n^m f = T^n (T − I)^m f`.
pub fn delta_power(t: &RegularOperator, spec: DeltaSpec, f: &LatticeFunction) -> Result<LatticeFunction> {
    t.check_function(f)?;
    f.with_values(delta_values(t.kernel(), spec, f.values()))
}

fn delta_values(k: &DMatrix<f64>, spec: DeltaSpec, f: &DMatrix<f64>) -> DMatrix<f64> {
    let mut g = f.clone();
    for _ in 0..spec.m {
        g = minus_identity(k, &g);
    }
    for _ in 0..spec.n {
        g = k * g;
    }
    g
}

/// `(n^m Δ_n^m f)` for `n = 1..=n_max`.
pub fn m_order_family(k: &DMatrix<f64>, f: &DMatrix<f64>, m: usize, n_max: usize) -> Vec<DMatrix<f64>> {
    let mut d = f.clone();
    for _ in 0..m {
        d = minus_identity(k, &d);
    }
    let mut out = Vec::with_capacity(n_max);
    for n in 1..=n_max {
        d = k * d;
        out.push(&d * (n as f64).powi(m as i32));
    }
    out
}

/// Truncation diagnostics of a pointwise ℓ²-sum `(Σ_n c_n |x_n|²)^{1/2}`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TailDiagnostic {
    /// `max_{(ω,σ)} last term / total`.
    pub tail_ratio: f64,
    /// Estimated increase of the square root if the sum were continued,
    /// from a geometric extrapolation of the last quarter of the terms
    /// (`+∞` when the terms are not decaying).
    pub tail_bound: f64,
    pub truncated_at: usize,
}

impl TailDiagnostic {
    pub fn passes(&self) -> bool {
        self.tail_ratio <= TAIL_RATIO_LIMIT
    }
}

/// Accumulates weighted squared terms pointwise and tracks the tail.
struct SquareAccumulator {
    total: DMatrix<f64>,
    last: DMatrix<f64>,
    ratio: DMatrix<f64>,
    count: usize,
    quarter_start: usize,
}

impl SquareAccumulator {
    fn new(rows: usize, cols: usize, expected_terms: usize) -> Self {
        SquareAccumulator {
            total: DMatrix::zeros(rows, cols),
            last: DMatrix::zeros(rows, cols),
            ratio: DMatrix::zeros(rows, cols),
            count: 0,
            quarter_start: expected_terms - expected_terms / 4,
        }
    }

    fn push(&mut self, term: DMatrix<f64>) {
        if self.count >= self.quarter_start.max(1) {
            for ((r, t), l) in self.ratio.iter_mut().zip(term.iter()).zip(self.last.iter()) {
                let q = if *l > 0.0 {
                    t / l
                } else if *t > 0.0 {
                    f64::INFINITY
                } else {
                    0.0
                };
                *r = r.max(q);
            }
        }
        self.total += &term;
        self.last = term;
        self.count += 1;
    }

    fn finish(self) -> (DMatrix<f64>, TailDiagnostic) {
        let mut tail_ratio: f64 = 0.0;
        let mut tail_bound: f64 = 0.0;
        for ((tot, last), rho) in self.total.iter().zip(self.last.iter()).zip(self.ratio.iter()) {
            if *tot > 0.0 {
                tail_ratio = tail_ratio.max(last / tot);
            }
            let extra = if *last == 0.0 {
                0.0
            } else if *rho < 1.0 {
                last * rho / (1.0 - rho)
            } else {
                f64::INFINITY
            };
            tail_bound = tail_bound.max((tot + extra).sqrt() - tot.sqrt());
        }
        let values = self.total.map(f64::sqrt);
        (
            values,
            TailDiagnostic {
                tail_ratio,
                tail_bound,
                truncated_at: self.count.saturating_sub(1),
            },
        )
    }
}

#[derive(Debug, Clone)]
pub struct DiscreteSquareFunction {
    pub values: LatticeFunction,
    pub tail: TailDiagnostic,
    /// Set when the tail ratio exceeds [`TAIL_RATIO_LIMIT`].
    pub truncation_warning: bool,
}

/// Pointwise `(Σ_{n=0}^{N} (1/(n+1)) |(n+1)^{m+1} Δ_n^{m+1} f|²)^{1/2}`; for
/// `m = 0` this is `(Σ (n+1)|T^{n+1}f − T^n f|²)^{1/2}`.
pub fn square_function_discrete(
    t: &RegularOperator,
    f: &LatticeFunction,
    m: usize,
    n_max: usize,
) -> Result<DiscreteSquareFunction> {
    t.check_function(f)?;
    if n_max < 1 {
        return Err(VarlabError::invalid("square function needs N_max ≥ 1"));
    }
    let k = t.kernel();
    let mut d = f.values().clone();
    for _ in 0..=m {
        d = minus_identity(k, &d);
    }
    let (rows, cols) = d.shape();
    let mut acc = SquareAccumulator::new(rows, cols, n_max + 1);
    for n in 0..=n_max {
        if n > 0 {
            d = k * d;
        }
        let w = (n as f64 + 1.0).powi(2 * m as i32 + 1);
        acc.push(d.map(|x| w * x * x));
    }
    let (values, tail) = acc.finish();
    Ok(DiscreteSquareFunction {
        values: f.with_values(values)?,
        truncation_warning: !tail.passes(),
        tail,
    })
}

/// Sup-norm residuals of the two algebraic identities.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct IdentityResiduals {
    pub decomposition_residual: f64,
    pub doubling_residual: f64,
}

/// Where the pair `(T_t, T_{2t})` of the doubling identity comes from.
#[derive(Debug, Clone, Copy)]
pub enum DoublingPair<'a> {
    /// `T_t = T`, `T_{2t} = T²`.
    Kernel,
    /// `T_t = e^{−tA}` and `T_{2t} = e^{−2tA}`, evaluated independently.
    Semigroup { generator: &'a Generator, t: f64 },
}

/// Residual of
/// `T^{2n+1} f = A_n f − ((n+1)/n) B_n f + ((2n+1)/n) M_{2n} f − ((n+1)/n) M_n f`
/// with `A_n = (1/n) Σ_{j=n}^{2n} (j+1) T^j (T − I)` and `B_n = T^{2n+1} − T^n`.
pub fn decomposition_residual(t: &RegularOperator, f: &LatticeFunction, n: usize) -> Result<f64> {
    t.check_function(f)?;
    if n < 1 {
        return Err(VarlabError::invalid("decomposition identity needs n ≥ 1"));
    }
    let k = t.kernel();
    let powers = power_family(k, f.values(), 2 * n + 1);
    let nf = n as f64;
    let mut a_n = DMatrix::zeros(powers[0].nrows(), powers[0].ncols());
    for j in n..=2 * n {
        a_n += (&powers[j + 1] - &powers[j]) * (j as f64 + 1.0);
    }
    a_n /= nf;
    let b_n = &powers[2 * n + 1] - &powers[n];
    // ((2n+1)/n) M_{2n} − ((n+1)/n) M_n = (S_{2n} − S_n)/n with S_k = Σ_{j≤k} T^j f.
    let mut tail = DMatrix::zeros(powers[0].nrows(), powers[0].ncols());
    for p in &powers[n + 1..=2 * n] {
        tail += p;
    }
    let rhs = a_n + (tail - b_n * (nf + 1.0)) / nf;
    Ok((&powers[2 * n + 1] - rhs).amax())
}

/// Residual of `Δ_n^{m+1}(T_{2t}) f = Σ_{k=0}^{m+1} C(m+1,k) Δ_{2n+k}^{m+1}(T_t) f`.
pub fn doubling_residual(
    t: &RegularOperator,
    f: &LatticeFunction,
    n: usize,
    m: usize,
    pair: DoublingPair<'_>,
) -> Result<f64> {
    t.check_function(f)?;
    let (single, double) = match pair {
        DoublingPair::Kernel => (t.kernel().clone(), t.kernel() * t.kernel()),
        DoublingPair::Semigroup { generator, t: time } => {
            if generator.space() != t.space() {
                return Err(VarlabError::invalid("generator and operator spaces differ"));
            }
            (generator.exp_neg(time)?, generator.exp_neg(2.0 * time)?)
        }
    };
    let fv = f.values();
    let lhs = delta_values(&double, DeltaSpec { m: m + 1, n }, fv);
    let mut rhs = DMatrix::zeros(fv.nrows(), fv.ncols());
    for kk in 0..=m + 1 {
        rhs += delta_values(&single, DeltaSpec { m: m + 1, n: 2 * n + kk }, fv) * binomial(m + 1, kk);
    }
    Ok((lhs - rhs).amax())
}

/// Both residuals. For [`DoublingPair::Semigroup`] the kernel `t` is only
/// used for the decomposition identity.
pub fn identity_residuals(
    t: &RegularOperator,
    f: &LatticeFunction,
    n: usize,
    m: usize,
    pair: DoublingPair<'_>,
) -> Result<IdentityResiduals> {
    Ok(IdentityResiduals {
        decomposition_residual: decomposition_residual(t, f, n)?,
        doubling_residual: doubling_residual(t, f, n, m, pair)?,
    })
}

/// Pointwise `(Σ_{n=0}^{N} n^{2m+1} |Δ_n^{m+1}(K) f|²)^{1/2}` with tail diagnostics.
///
/// `fixed` is the projection onto the fixed space of `K`; its component is
/// removed from `(K − I)^{m+1} f` before summation. That component is zero
/// in exact arithmetic, but its roundoff does not decay under powers of `K`
/// and the weights `n^{2m+1}` would amplify it.
pub fn weighted_difference_sum(
    k: &DMatrix<f64>,
    f: &DMatrix<f64>,
    m: usize,
    n_max: usize,
    fixed: Option<&DMatrix<f64>>,
) -> (DMatrix<f64>, TailDiagnostic) {
    let mut d = f.clone();
    for _ in 0..=m {
        d = minus_identity(k, &d);
    }
    if let Some(p) = fixed {
        d -= p * &d;
    }
    let mut acc = SquareAccumulator::new(d.nrows(), d.ncols(), n_max + 1);
    for n in 0..=n_max {
        if n > 0 {
            d = k * d;
        }
        let w = (n as f64).powi(2 * m as i32 + 1);
        acc.push(d.map(|x| w * x * x));
    }
    acc.finish()
}

/// Outcome of the doubling comparison
/// `(Σ n^{2m+1}|Δ_n^{m+1}(T_{2t})f|²)^{1/2} ≤ (Σ n^{2m+1}|Δ_n^{m+1}(T_t)f|²)^{1/2}`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ObservationCheck {
    /// `min_{(ω,σ)} (rhs − lhs)`.
    pub min_slack: f64,
    pub lhs_tail: TailDiagnostic,
    pub rhs_tail: TailDiagnostic,
    pub lhs_max: f64,
    pub rhs_max: f64,
}

impl ObservationCheck {
    pub fn tails_pass(&self) -> bool {
        self.lhs_tail.passes() && self.rhs_tail.passes()
    }
}

/// Evaluates both sides with matched truncation: the left sum runs to
/// `n_max`, the right sum to `2 n_max + m + 1`, which covers every
/// `Δ_{2n+k}` the doubling identity produces.
pub fn observation_check(
    g: &Generator,
    t: f64,
    f: &LatticeFunction,
    m: usize,
    n_max: usize,
) -> Result<ObservationCheck> {
    if f.omega() != g.space() {
        return Err(VarlabError::invalid("function and generator spaces differ"));
    }
    if !(t > 0.0) {
        return Err(VarlabError::invalid("observation check needs t > 0"));
    }
    let single = g.exp_neg(t)?;
    let double = g.exp_neg(2.0 * t)?;
    let proj = fixed_space_projection_generator(g)?;
    let fixed = (!proj.approximate).then_some(&proj.matrix);
    let (lhs, lhs_tail) = weighted_difference_sum(&double, f.values(), m, n_max, fixed);
    let (rhs, rhs_tail) = weighted_difference_sum(&single, f.values(), m, 2 * n_max + m + 1, fixed);
    let min_slack = (&rhs - &lhs).min();
    Ok(ObservationCheck {
        min_slack,
        lhs_tail,
        rhs_tail,
        lhs_max: lhs.amax(),
        rhs_max: rhs.amax(),
    })
}
