//! Projection onto the fixed space along the closed range.
//!
//! For a kernel `T` the fixed space is `N(T − I)`, for a generator `A` it is
//! `N(A)`. With `M` the relevant matrix, `V` a basis of `N(M)` and `W` a
//! basis of `N(Mᵀ)`, the projection along `R(M)` is `V (WᵀV)^{−1} Wᵀ`. It
//! exists exactly when the fixed eigenvalue is semisimple, which is what
//! the conditioning of `WᵀV` checks.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Result, VarlabError};
use crate::lattice::LatticeFunction;
use crate::operators::{Operator, RegularOperator};
use crate::operators::semigroup::Generator;

/// Singular values below this (relative to `max(1, σ_max)`) span the null space.
pub const NULL_TOL: f64 = 1e-8;
/// `P² = P` and `MP = 0` must hold to this accuracy.
pub const PROJECTION_TOL: f64 = 1e-10;

#[derive(Debug, Clone, PartialEq)]
pub struct Projection {
    pub matrix: DMatrix<f64>,
    /// Set when the semisimplicity check failed and a long Cesàro average was used.
    pub approximate: bool,
    /// Smallest singular value of `WᵀV` (0 when the check failed outright).
    pub defect: f64,
    pub fixed_dim: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ProjectionReport {
    pub approximate: bool,
    pub defect: f64,
    pub fixed_dim: usize,
}

impl Projection {
    pub fn report(&self) -> ProjectionReport {
        ProjectionReport {
            approximate: self.approximate,
            defect: self.defect,
            fixed_dim: self.fixed_dim,
        }
    }
}

fn spectral_projection(m: &DMatrix<f64>) -> std::result::Result<Projection, (f64, usize)> {
    let n = m.nrows();
    let svd = m.clone().svd(true, true);
    let u = svd.u.as_ref().expect("requested U");
    let v_t = svd.v_t.as_ref().expect("requested V^T");
    let smax = svd.singular_values.iter().copied().fold(0.0, f64::max);
    let cut = NULL_TOL * smax.max(1.0);
    let null: Vec<usize> = (0..svd.singular_values.len())
        .filter(|&i| svd.singular_values[i] <= cut)
        .collect();
    let k = null.len();
    if k == 0 {
        return Ok(Projection {
            matrix: DMatrix::zeros(n, n),
            approximate: false,
            defect: 1.0,
            fixed_dim: 0,
        });
    }
    let right = DMatrix::from_fn(n, k, |i, c| v_t[(null[c], i)]);
    let left = DMatrix::from_fn(n, k, |i, c| u[(i, null[c])]);
    let gram = left.transpose() * &right;
    let defect = gram.singular_values().min();
    if defect < NULL_TOL {
        return Err((defect, k));
    }
    let inv = gram.try_inverse().ok_or((0.0, k))?;
    let p = &right * inv * left.transpose();
    let idem = (&p * &p - &p).amax();
    let kill = (m * &p).amax().max((&p * m).amax());
    if idem > PROJECTION_TOL || kill > PROJECTION_TOL * smax.max(1.0) {
        return Err((defect, k));
    }
    Ok(Projection {
        matrix: p,
        approximate: false,
        defect,
        fixed_dim: k,
    })
}

/// `1 − max{|λ| : λ ∈ spec(T), |λ − 1| > NULL_TOL}`; 1 when no such λ exists.
pub fn spectral_gap_kernel(k: &DMatrix<f64>) -> f64 {
    let eig = k.clone().complex_eigenvalues();
    let second = eig
        .iter()
        .filter(|z| (**z - nalgebra::Complex::new(1.0, 0.0)).norm() > NULL_TOL)
        .map(|z| z.norm())
        .fold(0.0, f64::max);
    1.0 - second
}

/// `min{Re λ : λ ∈ spec(A), |λ| > NULL_TOL}`; `+∞` when `A` has no such eigenvalue.
pub fn spectral_gap_generator(a: &DMatrix<f64>) -> f64 {
    let eig = a.clone().complex_eigenvalues();
    eig.iter()
        .filter(|z| z.norm() > NULL_TOL)
        .map(|z| z.re)
        .fold(f64::INFINITY, f64::min)
}

/// `(1/2^k) Σ_{j<2^k} T^j` by repeated doubling.
fn long_cesaro(t: &DMatrix<f64>, gap: f64) -> DMatrix<f64> {
    let target = 1e6 / gap.abs().max(1e-12);
    let steps = target.log2().ceil().clamp(1.0, 60.0) as usize;
    let n = t.nrows();
    let mut sum = DMatrix::<f64>::identity(n, n);
    let mut power = t.clone();
    for _ in 0..steps {
        sum = &sum + &power * &sum;
        power = &power * &power;
    }
    sum / 2f64.powi(steps as i32)
}

/// Fixed-space projection of a kernel; falls back to a long Cesàro average
/// (flagged `approximate`) when 1 is not a semisimple eigenvalue.
pub fn fixed_space_projection_kernel(t: &RegularOperator) -> Result<Projection> {
    let n = t.dim();
    let m = t.kernel() - DMatrix::<f64>::identity(n, n);
    match spectral_projection(&m) {
        Ok(p) => Ok(p),
        Err((defect, k)) => Ok(Projection {
            matrix: long_cesaro(t.kernel(), spectral_gap_kernel(t.kernel())),
            approximate: true,
            defect,
            fixed_dim: k,
        }),
    }
}

/// Fixed-space projection of a generator, i.e. onto `N(A)`.
pub fn fixed_space_projection_generator(g: &Generator) -> Result<Projection> {
    match spectral_projection(g.matrix()) {
        Ok(p) => Ok(p),
        Err((defect, k)) => {
            let t = g.exp_neg(1.0)?;
            let gap = spectral_gap_kernel(&t);
            Ok(Projection {
                matrix: long_cesaro(&t, gap),
                approximate: true,
                defect,
                fixed_dim: k,
            })
        }
    }
}

/// `P_A f` for a kernel or a generator.
pub fn mean_projection(op: &Operator, f: &LatticeFunction) -> Result<(LatticeFunction, Projection)> {
    let p = match op {
        Operator::Kernel(t) => {
            t.check_function(f)?;
            fixed_space_projection_kernel(t)?
        }
        Operator::Generator(g) => {
            if f.omega() != g.space() {
                return Err(VarlabError::invalid("function and generator spaces differ"));
            }
            fixed_space_projection_generator(g)?
        }
    };
    let out = f.with_values(&p.matrix * f.values())?;
    Ok((out, p))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lattice::MeasureSpace;
    use crate::operators::{builtins, build_regular_operator, ergodic_average_discrete};

    fn column(values: &[f64]) -> LatticeFunction {
        LatticeFunction::new(
            MeasureSpace::counting(values.len()),
            MeasureSpace::counting(1),
            DMatrix::from_column_slice(values.len(), 1, values),
        )
        .unwrap()
    }

    #[test]
    fn identity_fixes_everything() {
        let op = Operator::Kernel(builtins::identity(4));
        let f = column(&[1.0, 2.0, -3.0, 0.5]);
        let (pf, p) = mean_projection(&op, &f).unwrap();
        assert!((pf.values() - f.values()).amax() < 1e-12);
        assert_eq!(p.fixed_dim, 4);
        assert!(!p.approximate);
    }

    #[test]
    fn irreducible_aperiodic_kernel_projects_to_the_mean() {
        let t = builtins::doubly_stochastic_random(6, 5);
        let f = column(&[1.0, 2.0, -3.0, 0.5, 4.0, 0.0]);
        let mean = 4.5 / 6.0;
        let (pf, p) = mean_projection(&Operator::Kernel(t.clone()), &f).unwrap();
        assert_eq!(p.fixed_dim, 1);
        for v in pf.values().iter() {
            assert!((v - mean).abs() < 1e-10);
        }
        let m = ergodic_average_discrete(&t, 10_000, &f).unwrap();
        assert!((m.values() - pf.values()).amax() < 1e-2);
        let pp = &p.matrix * &p.matrix;
        assert!((pp - &p.matrix).amax() < 1e-10);
        assert!((t.kernel() * &p.matrix - &p.matrix).amax() < 1e-10);
    }

    #[test]
    fn cyclic_shift_projects_to_the_mean() {
        let f = column(&[3.0, 0.0, 0.0]);
        let (pf, _) = mean_projection(&Operator::Kernel(builtins::shift(3)), &f).unwrap();
        for v in pf.values().iter() {
            assert!((v - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn generator_null_space() {
        let g = builtins::cycle_laplacian(5);
        let f = column(&[5.0, 0.0, 0.0, 0.0, 0.0]);
        let (pf, p) = mean_projection(&Operator::Generator(g), &f).unwrap();
        assert!(!p.approximate);
        for v in pf.values().iter() {
            assert!((v - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn jordan_block_falls_back_to_cesaro() {
        let k = DMatrix::from_row_slice(2, 2, &[1.0, 1.0, 0.0, 1.0]);
        let t = build_regular_operator(k, MeasureSpace::counting(2)).unwrap();
        let p = fixed_space_projection_kernel(&t).unwrap();
        assert!(p.approximate);
    }

    #[test]
    fn gaps() {
        let lazy = builtins::lazy_walk(8);
        let want = 1.0 - (1.0 + (2.0 * std::f64::consts::PI / 8.0).cos()) / 2.0;
        assert!((spectral_gap_kernel(lazy.kernel()) - want).abs() < 1e-10);
        let g = builtins::cycle_laplacian(8);
        let want = 2.0 * (1.0 - (2.0 * std::f64::consts::PI / 8.0).cos());
        assert!((spectral_gap_generator(g.matrix()) - want).abs() < 1e-10);
    }
}
