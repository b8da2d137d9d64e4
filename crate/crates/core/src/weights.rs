//! Discrete Hilbert transform and the Muckenhoupt `A_p` characteristic on
//! finite segments of `ℤ`.

use std::ops::{Add, Div, Sub};

use serde::{Deserialize, Serialize};

use crate::error::{Result, VarlabError};
use crate::exec::Execution;
use crate::fixtures::WeightFile;

/// Default longest interval examined by [`ap_characteristic`].
pub const DEFAULT_MAX_LEN: usize = 512;

/// Values on the integer segment `offset, offset + 1, …`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FiniteSequence<T = f64> {
    pub offset: i64,
    pub values: Vec<T>,
}

impl<T: Copy> FiniteSequence<T> {
    pub fn new(offset: i64, values: Vec<T>) -> Self {
        FiniteSequence { offset, values }
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    /// Last index covered.
    pub fn end(&self) -> i64 {
        self.offset + self.values.len() as i64 - 1
    }

    pub fn get(&self, n: i64) -> Option<T> {
        let i = n.checked_sub(self.offset)?;
        usize::try_from(i).ok().and_then(|i| self.values.get(i).copied())
    }

    /// `n ↦ a(−n)`.
    pub fn reflect(&self) -> Self {
        let mut values = self.values.clone();
        values.reverse();
        FiniteSequence {
            offset: -self.end(),
            values,
        }
    }
}

/// Scalars the transform can be evaluated in; `f64` for computation, exact
/// rationals in tests.
pub trait Scalar: Copy + Add<Output = Self> + Sub<Output = Self> + Div<Output = Self> {
    fn zero() -> Self;
    fn from_int(n: i64) -> Self;
}

impl Scalar for f64 {
    fn zero() -> Self {
        0.0
    }
    fn from_int(n: i64) -> Self {
        n as f64
    }
}

/// `H a(m) = Σ_{n≠m} a_n / (n − m)` for `m` in the support of `a` widened by
/// `margin` on each side, summed as `Σ_{d≥1} (a_{m+d} − a_{m−d}) / d` so the
/// odd symmetry of the kernel holds exactly.
pub fn discrete_hilbert<T: Scalar + PartialEq>(a: &FiniteSequence<T>, margin: usize) -> FiniteSequence<T> {
    let margin = margin as i64;
    let lo = a.offset - margin;
    let hi = a.end() + margin;
    let at = |n: i64| a.get(n).unwrap_or_else(T::zero);
    let values = (lo..=hi)
        .map(|m| {
            let reach = (m - a.offset).abs().max((a.end() - m).abs());
            (1..=reach).fold(T::zero(), |acc, d| {
                let diff = at(m + d) - at(m - d);
                if diff == T::zero() {
                    acc
                } else {
                    acc + diff / T::from_int(d)
                }
            })
        })
        .collect();
    FiniteSequence { offset: lo, values }
}

/// A positive weight on a segment of `ℤ`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Weight {
    seq: FiniteSequence<f64>,
}

impl Weight {
    pub fn new(offset: i64, values: Vec<f64>) -> Result<Self> {
        if values.is_empty() {
            return Err(VarlabError::invalid("weight must have at least one value"));
        }
        if values.iter().any(|v| !(v.is_finite() && *v > 0.0)) {
            return Err(VarlabError::invalid("weight values must be positive and finite"));
        }
        Ok(Weight {
            seq: FiniteSequence { offset, values },
        })
    }

    pub fn constant(offset: i64, len: usize, c: f64) -> Result<Self> {
        Self::new(offset, vec![c; len])
    }

    /// `w(n) = high` for `n ≥ 0` and `low` for `n < 0`, on `[−half, half)`.
    pub fn step(half: usize, low: f64, high: f64) -> Result<Self> {
        let half_i = half as i64;
        Self::new(-half_i, (-half_i..half_i).map(|n| if n >= 0 { high } else { low }).collect())
    }

    /// `w(n) = max(|n|, 1)^α` on `[−half, half]`.
    pub fn power(half: usize, alpha: f64) -> Result<Self> {
        let half_i = half as i64;
        Self::new(
            -half_i,
            (-half_i..=half_i).map(|n| (n.unsigned_abs().max(1) as f64).powf(alpha)).collect(),
        )
    }

    pub fn offset(&self) -> i64 {
        self.seq.offset
    }

    pub fn values(&self) -> &[f64] {
        &self.seq.values
    }

    pub fn len(&self) -> usize {
        self.seq.len()
    }

    pub fn is_empty(&self) -> bool {
        self.seq.is_empty()
    }

    pub fn scaled(&self, c: f64) -> Result<Self> {
        Self::new(self.offset(), self.values().iter().map(|v| v * c).collect())
    }
}

impl TryFrom<WeightFile> for Weight {
    type Error = VarlabError;

    fn try_from(file: WeightFile) -> Result<Self> {
        Weight::new(file.offset, file.values)
    }
}

impl From<&Weight> for WeightFile {
    fn from(w: &Weight) -> Self {
        WeightFile {
            offset: w.offset(),
            values: w.values().to_vec(),
        }
    }
}

/// Result of the interval enumeration.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ApCharacteristic {
    pub value: f64,
    /// First point and length of the shortest, then earliest, maximizing interval.
    pub argmax_start: i64,
    pub argmax_len: usize,
    pub max_len: usize,
}

/// `[w]_{A_p} = sup_I (|I|^{-1} Σ_I w)(|I|^{-1} Σ_I w^{1−p'})^{p−1}` over
/// intervals of length at most `max_len` inside the support of `w`.
pub fn ap_characteristic(w: &Weight, p: f64, max_len: usize, exec: Execution) -> Result<ApCharacteristic> {
    if !(p > 1.0) || !p.is_finite() {
        return Err(VarlabError::invalid(format!("A_p characteristic needs 1 < p < ∞, got {p}")));
    }
    if max_len < 1 {
        return Err(VarlabError::invalid("max_len must be at least 1"));
    }
    let dual = if p == 2.0 {
        w.values().iter().map(|v| 1.0 / v).collect::<Vec<_>>()
    } else {
        let e = 1.0 - p / (p - 1.0);
        w.values().iter().map(|v| v.powf(e)).collect()
    };
    let prefix = |xs: &[f64]| {
        let mut acc = Vec::with_capacity(xs.len() + 1);
        acc.push(0.0);
        let mut s = 0.0;
        for x in xs {
            s += x;
            acc.push(s);
        }
        acc
    };
    let pw = prefix(w.values());
    let pd = prefix(&dual);
    if pw.iter().chain(pd.iter()).any(|v| !v.is_finite()) {
        return Err(VarlabError::Overflow("weight sums are not finite".into()));
    }
    let n = w.len();
    let per_start = exec.map(n, |s| {
        let mut best = (f64::NEG_INFINITY, 0usize);
        for len in 1..=max_len.min(n - s) {
            let l = len as f64;
            let avg_w = (pw[s + len] - pw[s]) / l;
            let avg_d = (pd[s + len] - pd[s]) / l;
            let v = if p == 2.0 { avg_w * avg_d } else { avg_w * avg_d.powf(p - 1.0) };
            if v > best.0 || v.is_nan() {
                best = (v, len);
            }
        }
        best
    });
    let mut best = (f64::NEG_INFINITY, 0usize, 0usize);
    for (s, (v, len)) in per_start.into_iter().enumerate() {
        if v > best.0 || (v == best.0 && len < best.2) || v.is_nan() {
            best = (v, s, len);
        }
    }
    if !best.0.is_finite() {
        return Err(VarlabError::Overflow(format!(
            "A_p characteristic is not finite (value {})",
            best.0
        )));
    }
    Ok(ApCharacteristic {
        value: best.0,
        argmax_start: w.offset() + best.1 as i64,
        argmax_len: best.2,
        max_len,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use num_rational::Ratio;

    type Q = Ratio<i64>;

    impl Scalar for Q {
        fn zero() -> Self {
            Q::from_integer(0)
        }
        fn from_int(n: i64) -> Self {
            Q::from_integer(n)
        }
    }

    /// Exhaustive `A_2` characteristic in exact arithmetic.
    fn a2_exact(offset: i64, w: &[Q]) -> (Q, i64, usize) {
        let mut best = (Q::from_integer(0), 0, 0);
        for s in 0..w.len() {
            for len in 1..=w.len() - s {
                let window = &w[s..s + len];
                let l = Q::from_integer(len as i64);
                let avg: Q = window.iter().copied().sum::<Q>() / l;
                let inv: Q = window.iter().map(|v| v.recip()).sum::<Q>() / l;
                if avg * inv > best.0 {
                    best = (avg * inv, offset + s as i64, len);
                }
            }
        }
        best
    }

    #[test]
    fn hilbert_of_delta() {
        let a = FiniteSequence::new(0, vec![1.0]);
        let h = discrete_hilbert(&a, 5);
        assert_eq!(h.offset, -5);
        for m in -5..=5i64 {
            let want = if m == 0 { 0.0 } else { -1.0 / m as f64 };
            assert_eq!(h.get(m).unwrap(), want);
        }
    }

    #[test]
    fn hilbert_of_symmetric_constant_vanishes_at_center() {
        let a = FiniteSequence::new(-6, vec![1.5; 13]);
        assert_eq!(discrete_hilbert(&a, 0).get(0).unwrap().abs(), 0.0);
    }

    #[test]
    fn hilbert_antisymmetry_and_linearity_exact() {
        let a = FiniteSequence::new(-2, vec![Q::new(1, 2), Q::new(-3, 1), Q::new(0, 1), Q::new(5, 7), Q::new(2, 3)]);
        let b = FiniteSequence::new(-2, vec![Q::new(4, 1), Q::new(1, 9), Q::new(-2, 5), Q::new(0, 1), Q::new(1, 1)]);
        let ha = discrete_hilbert(&a, 3);
        let hra = discrete_hilbert(&a.reflect(), 3);
        let neg_reflected = ha.reflect();
        for m in hra.offset..=hra.end() {
            assert_eq!(hra.get(m).unwrap(), -neg_reflected.get(m).unwrap());
        }
        let sum = FiniteSequence::new(-2, a.values.iter().zip(&b.values).map(|(x, y)| x + y).collect());
        let hb = discrete_hilbert(&b, 3);
        let hs = discrete_hilbert(&sum, 3);
        for ((s, x), y) in hs.values.iter().zip(&ha.values).zip(&hb.values) {
            assert_eq!(*s, x + y);
        }
    }

    #[test]
    fn hilbert_window_tail() {
        let a = FiniteSequence::<f64>::new(0, vec![0.3, -1.2, 0.7, 2.0, -0.4]);
        let l1: f64 = a.values.iter().map(|v| v.abs()).sum();
        let narrow = discrete_hilbert(&a, 20);
        let wide = discrete_hilbert(&a, 40);
        // Values on the common window do not depend on the margin.
        for m in narrow.offset..=narrow.end() {
            assert_eq!(narrow.get(m), wide.get(m));
        }
        // Outside the support, |Ha(m)| ≤ ‖a‖₁ / dist(m, support).
        for m in [wide.offset, wide.end()] {
            let dist = if m < 0 { -m } else { m - a.end() };
            assert!(wide.get(m).unwrap().abs() <= l1 / dist as f64);
        }
    }

    #[test]
    fn constant_weight_has_characteristic_one() {
        for p in [1.5, 2.0, 3.0] {
            let w = Weight::constant(-4, 9, 3.0).unwrap();
            let c = ap_characteristic(&w, p, DEFAULT_MAX_LEN, Execution::Sequential).unwrap();
            assert!((c.value - 1.0).abs() < 1e-14, "p={p} {}", c.value);
        }
        let w = Weight::constant(0, 7, 1.0).unwrap();
        assert_eq!(ap_characteristic(&w, 2.0, 7, Execution::Parallel).unwrap().value, 1.0);
    }

    #[test]
    fn step_weight_matches_exact_enumeration() {
        let w = Weight::step(6, 1.0, 2.0).unwrap();
        let exact: Vec<Q> = w.values().iter().map(|v| Q::from_integer(*v as i64)).collect();
        let (oracle, _, _) = a2_exact(w.offset(), &exact);
        assert_eq!(oracle, Q::new(9, 8));
        let c = ap_characteristic(&w, 2.0, DEFAULT_MAX_LEN, Execution::Parallel).unwrap();
        assert_eq!(c.value, 9.0 / 8.0);
        assert_eq!((c.argmax_start, c.argmax_len), (-1, 2));
    }

    #[test]
    fn scaling_invariance() {
        let w = Weight::power(20, 0.7).unwrap();
        let base = ap_characteristic(&w, 2.5, 64, Execution::Sequential).unwrap().value;
        for c in [1e-3, 0.5, 7.0, 1e4] {
            let scaled = ap_characteristic(&w.scaled(c).unwrap(), 2.5, 64, Execution::Sequential).unwrap().value;
            assert!((scaled - base).abs() <= 1e-12 * base);
        }
    }

    #[test]
    fn parallel_matches_sequential() {
        let w = Weight::power(50, 0.9).unwrap();
        let a = ap_characteristic(&w, 2.0, 80, Execution::Sequential).unwrap();
        let b = ap_characteristic(&w, 2.0, 80, Execution::Parallel).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn power_weight_near_critical_exponent_grows() {
        let p = 2.0;
        let alpha = 0.95 * (p - 1.0);
        let values: Vec<f64> = [8, 32, 128, 512]
            .iter()
            .map(|&half| {
                let w = Weight::power(half, alpha).unwrap();
                ap_characteristic(&w, p, DEFAULT_MAX_LEN, Execution::Parallel).unwrap().value
            })
            .collect();
        assert!(values.windows(2).all(|v| v[1] >= v[0]), "{values:?}");
        assert!(values[3] > values[0], "{values:?}");
    }

    #[test]
    fn jensen_lower_bound() {
        let w = Weight::new(3, vec![0.2, 5.0, 1.0, 0.01, 3.0]).unwrap();
        for p in [1.2, 2.0, 4.0] {
            assert!(ap_characteristic(&w, p, 3, Execution::Sequential).unwrap().value >= 1.0);
        }
    }

    #[test]
    fn rejects_bad_input() {
        assert!(Weight::new(0, vec![1.0, 0.0]).is_err());
        let w = Weight::constant(0, 3, 1.0).unwrap();
        assert!(ap_characteristic(&w, 1.0, 3, Execution::Sequential).is_err());
        assert!(ap_characteristic(&w, 2.0, 0, Execution::Sequential).is_err());
        let huge = Weight::new(0, vec![1e300, 1e300, 1e-300]).unwrap();
        assert!(matches!(
            ap_characteristic(&huge, 2.0, 3, Execution::Sequential),
            Err(VarlabError::Overflow(_))
        ));
    }
}
