//! Finite measure spaces, functions on Ω×Σ, and the mixed norms
//! `L^p(Ω; L^r(Σ))` and `L^p(Ω; L^r(Σ; v_q))`.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Result, VarlabError};
use crate::variation::{self, check_strictly_increasing, vq_norm_unchecked};

/// An atomic measure space: atom labels with positive weights.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MeasureSpace {
    labels: Vec<String>,
    weights: Vec<f64>,
}

impl MeasureSpace {
    pub fn new(labels: Vec<String>, weights: Vec<f64>) -> Result<Self> {
        if labels.len() != weights.len() {
            return Err(VarlabError::invalid("one label per weight required"));
        }
        if weights.is_empty() {
            return Err(VarlabError::invalid("measure space needs at least one atom"));
        }
        if let Some((i, w)) = weights
            .iter()
            .enumerate()
            .find(|(_, w)| !(**w > 0.0) || !w.is_finite())
        {
            return Err(VarlabError::invalid(format!(
                "measure weights must be positive and finite: atom {i} has weight {w}"
            )));
        }
        Ok(MeasureSpace { labels, weights })
    }

    /// Atoms labelled `0..n` with the given weights.
    pub fn from_weights(weights: Vec<f64>) -> Result<Self> {
        let labels = (0..weights.len()).map(|i| i.to_string()).collect();
        Self::new(labels, weights)
    }

    pub fn counting(n: usize) -> Self {
        Self::from_weights(vec![1.0; n.max(1)]).expect("unit weights are valid")
    }

    /// `n` atoms of mass `1/n`.
    pub fn uniform_probability(n: usize) -> Self {
        let n = n.max(1);
        Self::from_weights(vec![1.0 / n as f64; n]).expect("uniform weights are valid")
    }

    pub fn len(&self) -> usize {
        self.weights.len()
    }

    pub fn is_empty(&self) -> bool {
        self.weights.is_empty()
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn labels(&self) -> &[String] {
        &self.labels
    }

    pub fn total_mass(&self) -> f64 {
        self.weights.iter().sum()
    }

    /// `‖g‖_{L^p}` of a function given by its atom values; `p = ∞` allowed.
    pub fn lp_norm(&self, values: &[f64], p: f64) -> f64 {
        debug_assert_eq!(values.len(), self.len());
        if p.is_infinite() {
            return values.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        }
        let s: f64 = values
            .iter()
            .zip(&self.weights)
            .map(|(v, w)| w * v.abs().powf(p))
            .sum();
        s.powf(1.0 / p)
    }
}

/// Whether a given `L^r` fibre is a UMD lattice. Numerics cannot check this;
/// it is recorded as metadata.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LatticeRegime {
    Umd,
    NonUmdProbe,
}

impl LatticeRegime {
    pub fn for_exponent(r: f64) -> Self {
        if r > 1.0 && r.is_finite() {
            LatticeRegime::Umd
        } else {
            LatticeRegime::NonUmdProbe
        }
    }

    pub fn tag(self) -> &'static str {
        match self {
            LatticeRegime::Umd => "UMD regime",
            LatticeRegime::NonUmdProbe => "non-UMD probe",
        }
    }
}

/// A real function on Ω×Σ, stored as an |Ω|×|Σ| matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct LatticeFunction {
    omega: MeasureSpace,
    sigma: MeasureSpace,
    values: DMatrix<f64>,
}

impl LatticeFunction {
    pub fn new(omega: MeasureSpace, sigma: MeasureSpace, values: DMatrix<f64>) -> Result<Self> {
        if values.nrows() != omega.len() || values.ncols() != sigma.len() {
            return Err(VarlabError::invalid(format!(
                "values are {}x{} but spaces have {} and {} atoms",
                values.nrows(),
                values.ncols(),
                omega.len(),
                sigma.len()
            )));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(VarlabError::invalid("lattice function entries must be finite"));
        }
        Ok(LatticeFunction {
            omega,
            sigma,
            values,
        })
    }

    pub fn zeros(omega: MeasureSpace, sigma: MeasureSpace) -> Self {
        let values = DMatrix::zeros(omega.len(), sigma.len());
        LatticeFunction {
            omega,
            sigma,
            values,
        }
    }

    pub fn omega(&self) -> &MeasureSpace {
        &self.omega
    }

    pub fn sigma(&self) -> &MeasureSpace {
        &self.sigma
    }

    pub fn values(&self) -> &DMatrix<f64> {
        &self.values
    }

    pub fn into_values(self) -> DMatrix<f64> {
        self.values
    }

    /// Same spaces, new values. Shapes must agree.
    pub fn with_values(&self, values: DMatrix<f64>) -> Result<Self> {
        Self::new(self.omega.clone(), self.sigma.clone(), values)
    }

    pub fn abs(&self) -> Self {
        LatticeFunction {
            omega: self.omega.clone(),
            sigma: self.sigma.clone(),
            values: self.values.abs(),
        }
    }

    pub fn same_spaces(&self, other: &LatticeFunction) -> bool {
        self.omega == other.omega && self.sigma == other.sigma
    }
}

/// A family `(F_t)` of lattice functions on a common Ω×Σ, indexed by a
/// strictly increasing grid.
#[derive(Debug, Clone, PartialEq)]
pub struct LatticeFamily {
    grid: Vec<f64>,
    omega: MeasureSpace,
    sigma: MeasureSpace,
    members: Vec<DMatrix<f64>>,
}

impl LatticeFamily {
    pub fn new(grid: Vec<f64>, members: Vec<LatticeFunction>) -> Result<Self> {
        let first = members
            .first()
            .ok_or_else(|| VarlabError::invalid("family must have at least one member"))?;
        let omega = first.omega.clone();
        let sigma = first.sigma.clone();
        if members.iter().any(|m| m.omega != omega || m.sigma != sigma) {
            return Err(VarlabError::invalid("family members must share measure spaces"));
        }
        let matrices = members.into_iter().map(|m| m.values).collect();
        Self::from_matrices(grid, omega, sigma, matrices)
    }

    pub fn from_matrices(
        grid: Vec<f64>,
        omega: MeasureSpace,
        sigma: MeasureSpace,
        members: Vec<DMatrix<f64>>,
    ) -> Result<Self> {
        if members.is_empty() {
            return Err(VarlabError::invalid("family must have at least one member"));
        }
        if grid.len() != members.len() {
            return Err(VarlabError::invalid(format!(
                "{} grid points for {} members",
                grid.len(),
                members.len()
            )));
        }
        check_strictly_increasing(&grid)?;
        for m in &members {
            if m.nrows() != omega.len() || m.ncols() != sigma.len() {
                return Err(VarlabError::invalid("member shape does not match the spaces"));
            }
            if m.iter().any(|v| !v.is_finite()) {
                return Err(VarlabError::invalid("family entries must be finite"));
            }
        }
        Ok(LatticeFamily {
            grid,
            omega,
            sigma,
            members,
        })
    }

    pub fn grid(&self) -> &[f64] {
        &self.grid
    }

    pub fn members(&self) -> &[DMatrix<f64>] {
        &self.members
    }

    pub fn omega(&self) -> &MeasureSpace {
        &self.omega
    }

    pub fn sigma(&self) -> &MeasureSpace {
        &self.sigma
    }

    pub fn len(&self) -> usize {
        self.members.len()
    }

    pub fn is_empty(&self) -> bool {
        self.members.is_empty()
    }

    /// The scalar sequence `t ↦ F_t(ω, σ)`.
    pub fn trajectory(&self, omega: usize, sigma: usize) -> Vec<f64> {
        self.members.iter().map(|m| m[(omega, sigma)]).collect()
    }

    /// Applies `reduce` to every trajectory; returns an |Ω|×|Σ| matrix.
    pub fn pointwise<F>(&self, reduce: F) -> DMatrix<f64>
    where
        F: Fn(&[f64]) -> f64,
    {
        let (n_omega, n_sigma) = (self.omega.len(), self.sigma.len());
        let mut buf = vec![0.0; self.members.len()];
        DMatrix::from_fn(n_omega, n_sigma, |i, j| {
            for (slot, m) in buf.iter_mut().zip(&self.members) {
                *slot = m[(i, j)];
            }
            reduce(&buf)
        })
    }

    /// Pointwise v_q of every trajectory.
    pub fn pointwise_variation(&self, q: f64) -> Result<DMatrix<f64>> {
        check_q_family(q, self.len())?;
        Ok(self.pointwise(|traj| vq_norm_unchecked(traj, q)))
    }

    /// Pointwise `sup_t |F_t|`.
    pub fn pointwise_maximal(&self) -> DMatrix<f64> {
        self.pointwise(|traj| traj.iter().fold(0.0f64, |m, v| m.max(v.abs())))
    }
}

fn check_q_family(q: f64, len: usize) -> Result<()> {
    if !(q >= 1.0) || !q.is_finite() {
        return Err(VarlabError::invalid(format!("q must satisfy 1 ≤ q < ∞, got {q}")));
    }
    if len > variation::MAX_SEQUENCE_LEN {
        return Err(VarlabError::invalid("family longer than the variation limit"));
    }
    Ok(())
}

fn check_exponents(p: f64, r: f64) -> Result<()> {
    if !(p > 1.0) || !p.is_finite() {
        return Err(VarlabError::invalid(format!("p must satisfy 1 < p < ∞, got {p}")));
    }
    if !(r >= 1.0) || !r.is_finite() {
        return Err(VarlabError::invalid(format!("r must satisfy 1 ≤ r < ∞, got {r}")));
    }
    Ok(())
}

/// `(Σ_ω μ(ω) (Σ_σ ν(σ) |g(ω,σ)|^r)^{p/r})^{1/p}` for a raw matrix.
pub fn mixed_norm_values(
    omega: &MeasureSpace,
    sigma: &MeasureSpace,
    values: &DMatrix<f64>,
    p: f64,
    r: f64,
) -> Result<f64> {
    check_exponents(p, r)?;
    if values.nrows() != omega.len() || values.ncols() != sigma.len() {
        return Err(VarlabError::invalid("matrix shape does not match the spaces"));
    }
    let mut outer = 0.0;
    for (i, mu) in omega.weights().iter().enumerate() {
        let inner: f64 = values
            .row(i)
            .iter()
            .zip(sigma.weights())
            .map(|(v, nu)| nu * v.abs().powf(r))
            .sum();
        outer += mu * inner.powf(p / r);
    }
    Ok(outer.powf(1.0 / p))
}

/// `‖f‖_{L^p(Ω; L^r(Σ))}`.
pub fn mixed_norm(f: &LatticeFunction, p: f64, r: f64) -> Result<f64> {
    mixed_norm_values(&f.omega, &f.sigma, &f.values, p, r)
}

/// `‖(F_t)‖_{L^p(Ω; L^r(Σ; v_q))}`: v_q in t first, then `L^r` in σ, then `L^p` in ω.
pub fn lattice_variation_norm(fam: &LatticeFamily, p: f64, q: f64, r: f64) -> Result<f64> {
    check_exponents(p, r)?;
    let v = fam.pointwise_variation(q)?;
    mixed_norm_values(&fam.omega, &fam.sigma, &v, p, r)
}

/// `‖sup_t |F_t|‖_{L^p(Ω; L^r(Σ))}`.
pub fn lattice_maximal_norm(fam: &LatticeFamily, p: f64, r: f64) -> Result<f64> {
    check_exponents(p, r)?;
    let m = fam.pointwise_maximal();
    mixed_norm_values(&fam.omega, &fam.sigma, &m, p, r)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::variation::{oracle::vq_norm_oracle, ScalarSequence};
    use proptest::prelude::*;

    fn spaces() -> (MeasureSpace, MeasureSpace) {
        (
            MeasureSpace::from_weights(vec![0.5, 1.0, 2.0]).unwrap(),
            MeasureSpace::from_weights(vec![0.25, 3.0]).unwrap(),
        )
    }

    #[test]
    fn rejects_nonpositive_weight() {
        let err = MeasureSpace::from_weights(vec![1.0, -0.5]).unwrap_err();
        assert!(err.to_string().contains("positive"));
        assert!(MeasureSpace::from_weights(vec![1.0, 0.0]).is_err());
    }

    #[test]
    fn zero_function_has_zero_norm() {
        let (o, s) = spaces();
        let f = LatticeFunction::zeros(o, s);
        assert_eq!(mixed_norm(&f, 2.0, 3.0).unwrap(), 0.0);
    }

    #[test]
    fn constant_one_on_probability_spaces() {
        let f = LatticeFunction::new(
            MeasureSpace::uniform_probability(4),
            MeasureSpace::uniform_probability(5),
            DMatrix::from_element(4, 5, 1.0),
        )
        .unwrap();
        for (p, r) in [(1.5, 1.0), (2.0, 2.0), (4.0, 1.5), (1.1, 7.0)] {
            assert!((mixed_norm(&f, p, r).unwrap() - 1.0).abs() < 1e-14);
        }
    }

    #[test]
    fn single_atom_indicator_counting_measure() {
        let mut v = DMatrix::zeros(3, 4);
        v[(1, 2)] = 1.0;
        let f = LatticeFunction::new(MeasureSpace::counting(3), MeasureSpace::counting(4), v).unwrap();
        for (p, r) in [(1.5, 1.0), (2.0, 2.0), (3.0, 1.2)] {
            assert_eq!(mixed_norm(&f, p, r).unwrap(), 1.0);
        }
    }

    #[test]
    fn rejects_mismatched_shape() {
        let (o, s) = spaces();
        assert!(LatticeFunction::new(o, s, DMatrix::zeros(2, 2)).is_err());
    }

    #[test]
    fn constant_family_reduces_to_mixed_norm() {
        let (o, s) = spaces();
        let g = DMatrix::from_row_slice(3, 2, &[1.0, -2.0, 0.5, 0.0, -3.0, 4.0]);
        let fam = LatticeFamily::from_matrices(
            vec![0.0, 1.0, 2.0],
            o.clone(),
            s.clone(),
            vec![g.clone(); 3],
        )
        .unwrap();
        let want = mixed_norm_values(&o, &s, &g.abs(), 2.5, 1.5).unwrap();
        assert!((lattice_variation_norm(&fam, 2.5, 3.0, 1.5).unwrap() - want).abs() < 1e-14);
        assert!((lattice_maximal_norm(&fam, 2.5, 1.5).unwrap() - want).abs() < 1e-14);

        let two = LatticeFamily::from_matrices(
            vec![0.0, 1.0],
            o.clone(),
            s.clone(),
            vec![DMatrix::zeros(3, 2), g.clone()],
        )
        .unwrap();
        assert!((lattice_variation_norm(&two, 2.5, 3.0, 1.5).unwrap() - want).abs() < 1e-14);
    }

    #[test]
    fn composition_order_matters() {
        // |Ω| = 2, |Σ| = 2 with asymmetric weights; swapping the roles of
        // the two spaces must change the value.
        let o = MeasureSpace::from_weights(vec![1.0, 4.0]).unwrap();
        let s = MeasureSpace::from_weights(vec![0.5, 2.0]).unwrap();
        let members = vec![
            DMatrix::from_row_slice(2, 2, &[0.0, 1.0, 2.0, 0.0]),
            DMatrix::from_row_slice(2, 2, &[1.0, -1.0, 0.0, 3.0]),
        ];
        let fam = LatticeFamily::from_matrices(vec![0.0, 1.0], o.clone(), s.clone(), members.clone()).unwrap();
        let value = lattice_variation_norm(&fam, 3.0, 2.0, 1.5).unwrap();

        let swapped = LatticeFamily::from_matrices(
            vec![0.0, 1.0],
            s,
            o,
            members.iter().map(|m| m.transpose()).collect(),
        )
        .unwrap();
        let value_swapped = lattice_variation_norm(&swapped, 3.0, 2.0, 1.5).unwrap();
        assert!((value - value_swapped).abs() > 1e-3);

        // Hand-assembled from the exhaustive oracle.
        let v = |i: usize, j: usize| {
            let traj: Vec<f64> = members.iter().map(|m| m[(i, j)]).collect();
            vq_norm_oracle(&ScalarSequence::from_values(traj).unwrap(), 2.0).unwrap().norm
        };
        let row = |i: usize| (0.5 * v(i, 0).powf(1.5) + 2.0 * v(i, 1).powf(1.5)).powf(1.0 / 1.5);
        let want = (1.0 * row(0).powf(3.0) + 4.0 * row(1).powf(3.0)).powf(1.0 / 3.0);
        assert!((value - want).abs() < 1e-13 * want);
    }

    fn matrix(rows: usize, cols: usize) -> impl Strategy<Value = DMatrix<f64>> {
        prop::collection::vec(-5.0f64..5.0, rows * cols)
            .prop_map(move |v| DMatrix::from_row_slice(rows, cols, &v))
    }

    proptest! {
        #[test]
        fn mixed_norm_axioms(a in matrix(3, 2), b in matrix(3, 2), c in -4.0f64..4.0,
                             p in 1.05f64..5.0, r in 1.0f64..5.0) {
            let (o, s) = spaces();
            let n = |m: &DMatrix<f64>| mixed_norm_values(&o, &s, m, p, r).unwrap();
            let scaled = &a * c;
            prop_assert!((n(&scaled) - c.abs() * n(&a)).abs() <= 1e-10 * (1.0 + n(&a)));
            let sum = &a + &b;
            prop_assert!(n(&sum) <= n(&a) + n(&b) + 1e-10);
        }

        #[test]
        fn maximal_below_variation_and_monotone_in_q(ms in prop::collection::vec(matrix(3, 2), 1..6),
                                                     q in 1.0f64..4.0, dq in 0.0f64..3.0) {
            let (o, s) = spaces();
            let grid: Vec<f64> = (0..ms.len()).map(|i| i as f64).collect();
            let fam = LatticeFamily::from_matrices(grid, o, s, ms).unwrap();
            let max = lattice_maximal_norm(&fam, 2.0, 1.5).unwrap();
            let v1 = lattice_variation_norm(&fam, 2.0, q, 1.5).unwrap();
            let v2 = lattice_variation_norm(&fam, 2.0, q + dq, 1.5).unwrap();
            prop_assert!(max <= v2 * (1.0 + 1e-12));
            prop_assert!(v2 <= v1 * (1.0 + 1e-12));
        }
    }
}
