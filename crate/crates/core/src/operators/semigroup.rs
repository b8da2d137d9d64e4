use std::collections::HashMap;
use std::sync::{Arc, RwLock};

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Result, VarlabError};
use crate::lattice::{LatticeFunction, MeasureSpace};
use crate::operators::projection::fixed_space_projection_generator;
use crate::quadrature::adaptive_simpson;

/// Default absolute tolerance (relative to `max|f|`) of the time quadratures.
pub const QUAD_TOL: f64 = 1e-10;

/// Generator `A` of the matrix semigroup `T_t = e^{−tA}`.
///
/// Evaluations of `e^{−tA}` requested through [`Generator::semigroup_matrix`]
/// are cached by the bit pattern of `t`. Readers share the cache; the first
/// writer for a given `t` wins and later inserts are dropped, so results do
/// not depend on scheduling.
#[derive(Debug)]
pub struct Generator {
    space: MeasureSpace,
    matrix: DMatrix<f64>,
    cache: RwLock<HashMap<u64, Arc<DMatrix<f64>>>>,
}

impl Clone for Generator {
    fn clone(&self) -> Self {
        Generator {
            space: self.space.clone(),
            matrix: self.matrix.clone(),
            cache: RwLock::new(self.cache.read().expect("cache lock").clone()),
        }
    }
}

impl PartialEq for Generator {
    fn eq(&self, other: &Self) -> bool {
        self.space == other.space && self.matrix == other.matrix
    }
}

impl Generator {
    pub fn new(matrix: DMatrix<f64>, space: MeasureSpace) -> Result<Self> {
        let n = space.len();
        if matrix.nrows() != n || matrix.ncols() != n {
            return Err(VarlabError::invalid(format!(
                "generator is {}x{} but the space has {n} atoms",
                matrix.nrows(),
                matrix.ncols()
            )));
        }
        if matrix.iter().any(|v| !v.is_finite()) {
            return Err(VarlabError::invalid("generator entries must be finite"));
        }
        Ok(Generator {
            space,
            matrix,
            cache: RwLock::new(HashMap::new()),
        })
    }

    pub fn space(&self) -> &MeasureSpace {
        &self.space
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.matrix
    }

    pub fn dim(&self) -> usize {
        self.matrix.nrows()
    }

    pub fn cached_times(&self) -> usize {
        self.cache.read().expect("cache lock").len()
    }

    /// `e^{−tA}`, cached.
    pub fn semigroup_matrix(&self, t: f64) -> Result<Arc<DMatrix<f64>>> {
        let key = t.to_bits();
        if let Some(m) = self.cache.read().expect("cache lock").get(&key) {
            return Ok(Arc::clone(m));
        }
        let m = Arc::new(self.exp_neg(t)?);
        let mut cache = self.cache.write().expect("cache lock");
        Ok(Arc::clone(cache.entry(key).or_insert(m)))
    }

    /// `e^{−tA}` without touching the cache; for quadrature nodes.
    pub fn exp_neg(&self, t: f64) -> Result<DMatrix<f64>> {
        if !(t >= 0.0) || !t.is_finite() {
            return Err(VarlabError::invalid(format!("semigroup time must be ≥ 0, got {t}")));
        }
        let n = self.dim();
        if t == 0.0 {
            return Ok(DMatrix::identity(n, n));
        }
        let scaled = &self.matrix * (-t);
        let e = scaled.exp();
        if e.iter().any(|v| !v.is_finite()) {
            return Err(VarlabError::Overflow(format!(
                "e^(-tA) is not finite at t = {t} (t·‖A‖₁ = {:e})",
                t * self.matrix.column_iter().map(|c| c.abs().sum()).fold(0.0, f64::max)
            )));
        }
        Ok(e)
    }

    fn check_function(&self, f: &LatticeFunction) -> Result<()> {
        if f.omega() != &self.space {
            return Err(VarlabError::invalid(
                "function and generator live on different measure spaces",
            ));
        }
        Ok(())
    }
}

/// `T_t f = e^{−tA} f`, applied to every σ-column.
pub fn semigroup_eval(g: &Generator, t: f64, f: &LatticeFunction) -> Result<LatticeFunction> {
    g.check_function(f)?;
    let m = g.semigroup_matrix(t)?;
    f.with_values(m.as_ref() * f.values())
}

/// Quadrature bookkeeping attached to time-integrated quantities.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct QuadratureInfo {
    pub error_estimate: f64,
    pub evaluations: usize,
    pub tolerance: f64,
}

fn scale_of(f: &LatticeFunction) -> f64 {
    f.values().iter().fold(0.0f64, |m, v| m.max(v.abs())).max(f64::MIN_POSITIVE)
}

/// `M_t f = (1/t) ∫_0^t T_s f ds` by adaptive Simpson quadrature.
pub fn ergodic_average_continuous(
    g: &Generator,
    t: f64,
    f: &LatticeFunction,
    tol: f64,
) -> Result<(LatticeFunction, QuadratureInfo)> {
    g.check_function(f)?;
    if !(t > 0.0) || !t.is_finite() {
        return Err(VarlabError::invalid(format!("averaging time must be > 0, got {t}")));
    }
    let fv = f.values();
    let abs_tol = tol * scale_of(f) * t;
    let pieces = (t * spectral_scale(g)).ceil().clamp(1.0, 256.0) as usize;
    let q = adaptive_simpson(|s| Ok(g.exp_neg(s)? * fv), 0.0, t, abs_tol, pieces)?;
    let info = QuadratureInfo {
        error_estimate: q.error_estimate / t,
        evaluations: q.evaluations,
        tolerance: tol,
    };
    Ok((f.with_values(q.value / t)?, info))
}

/// `‖A‖₁`, the rate at which the fastest mode moves.
fn spectral_scale(g: &Generator) -> f64 {
    g.matrix
        .column_iter()
        .map(|c| c.abs().sum())
        .fold(0.0, f64::max)
}

/// Pointwise continuous square function together with its cutoffs.
#[derive(Debug, Clone)]
pub struct ContinuousSquareFunction {
    pub values: LatticeFunction,
    pub quadrature: QuadratureInfo,
    /// `[s_min, s_max]` actually integrated over.
    pub cutoffs: (f64, f64),
    /// Bound on the mass of `|s^{m+1} ∂^{m+1} T_s f|² ds/s` outside the cutoffs.
    pub truncation_bound: f64,
}

/// Pointwise `(∫_0^∞ |s^{m+1} ∂_s^{m+1} T_s f|² ds/s)^{1/2}`, with
/// `∂_s^{m+1} T_s = (−A)^{m+1} e^{−sA}`.
///
/// Integrated in `u = ln s`. The lower cutoff is chosen so that the
/// discarded mass, at most `(s‖A‖_∞)^{2m+2}‖H‖²/(2m+2)` with
/// `H = (−A)^{m+1} f`, is below the tolerance; the upper cutoff is pushed
/// out until the integrand has decayed below the tolerance. The fixed-space
/// component of `H`, which vanishes in exact arithmetic, is projected out
/// first so that roundoff does not produce a non-decaying tail.
pub fn square_function_continuous(
    g: &Generator,
    f: &LatticeFunction,
    m: usize,
    quad_tol: f64,
) -> Result<ContinuousSquareFunction> {
    g.check_function(f)?;
    if !(quad_tol > 0.0) {
        return Err(VarlabError::invalid("quad_tol must be positive"));
    }
    let order = m as i32 + 1;
    let neg_a = -g.matrix.clone();
    let mut h = f.values().clone();
    for _ in 0..order {
        h = &neg_a * h;
    }
    if let Ok(p) = fixed_space_projection_generator(g) {
        if !p.approximate {
            h -= &p.matrix * &h;
        }
    }
    let h_scale = h.iter().fold(0.0f64, |a, v| a.max(v.abs()));
    let f_scale = scale_of(f);
    let zero = || f.with_values(DMatrix::zeros(f.values().nrows(), f.values().ncols()));
    if h_scale == 0.0 {
        return Ok(ContinuousSquareFunction {
            values: zero()?,
            quadrature: QuadratureInfo {
                error_estimate: 0.0,
                evaluations: 0,
                tolerance: quad_tol,
            },
            cutoffs: (0.0, 0.0),
            truncation_bound: 0.0,
        });
    }
    let abs_tol = quad_tol * f_scale * f_scale;
    let a_inf = g
        .matrix
        .row_iter()
        .map(|r| r.abs().sum())
        .fold(0.0, f64::max)
        .max(f64::MIN_POSITIVE);

    // Below s_min: |s^{m+1} e^{−sA} H| ≤ s^{m+1} e^{s‖A‖} ‖H‖, and s‖A‖ ≤ 1/8 keeps e^{s‖A‖} < 1.2.
    let two_m2 = 2.0 * order as f64;
    let mut s_min = 0.125 / a_inf;
    let low_mass = |s: f64| 1.44 * s.powf(two_m2) * h_scale * h_scale / two_m2;
    while low_mass(s_min) > 0.25 * abs_tol && s_min > 1e-300 {
        s_min *= 0.5;
    }

    let integrand_at = |s: f64| -> Result<DMatrix<f64>> {
        let v = g.exp_neg(s)? * &h * s.powi(order);
        Ok(v.map(|x| x * x))
    };
    let peak = |s: f64| -> Result<f64> {
        Ok(integrand_at(s)?.iter().fold(0.0f64, |a, v| a.max(*v)))
    };
    let mut s_max = (1.0 / a_inf).max(2.0 * s_min);
    let mut steps = 0;
    loop {
        let here = peak(s_max)?;
        let further = peak(2.0 * s_max)?;
        if here <= 1e-3 * abs_tol && further <= here.max(1e-3 * abs_tol) {
            break;
        }
        s_max *= 2.0;
        steps += 1;
        if steps > 200 {
            return Err(VarlabError::Tail(format!(
                "square function integrand has not decayed by s = {s_max:e} (value {here:e})"
            )));
        }
    }
    let (u_lo, u_hi) = (s_min.ln(), s_max.ln());
    let pieces = ((u_hi - u_lo) * 2.0).ceil().clamp(1.0, 512.0) as usize;
    let q = adaptive_simpson(|u| integrand_at(u.exp()), u_lo, u_hi, abs_tol, pieces)?;
    let values = q.value.map(|x| x.max(0.0).sqrt());
    Ok(ContinuousSquareFunction {
        values: f.with_values(values)?,
        quadrature: QuadratureInfo {
            error_estimate: q.error_estimate,
            evaluations: q.evaluations,
            tolerance: quad_tol,
        },
        cutoffs: (s_min, s_max),
        truncation_bound: low_mass(s_min) + 1e-3 * abs_tol,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::operators::builtins;

    fn column(values: &[f64]) -> LatticeFunction {
        LatticeFunction::new(
            MeasureSpace::counting(values.len()),
            MeasureSpace::counting(1),
            DMatrix::from_column_slice(values.len(), 1, values),
        )
        .unwrap()
    }

    fn scalar_generator(a: f64) -> Generator {
        Generator::new(DMatrix::from_element(1, 1, a), MeasureSpace::counting(1)).unwrap()
    }

    #[test]
    fn zero_generator_is_identity() {
        let g = builtins::zero_generator(3);
        let f = column(&[1.0, -2.0, 5.0]);
        for t in [0.0, 0.5, 40.0] {
            assert_eq!(semigroup_eval(&g, t, &f).unwrap(), f);
        }
        let (m, _) = ergodic_average_continuous(&g, 3.0, &f, QUAD_TOL).unwrap();
        assert!((m.values() - f.values()).amax() < 1e-12);
        let sq = square_function_continuous(&g, &f, 0, 1e-10).unwrap();
        assert_eq!(sq.values.values().amax(), 0.0);
    }

    #[test]
    fn identity_generator_decays_exponentially() {
        let g = Generator::new(DMatrix::identity(2, 2), MeasureSpace::counting(2)).unwrap();
        let f = column(&[1.0, -3.0]);
        for t in [0.1, 1.0, 7.0] {
            let out = semigroup_eval(&g, t, &f).unwrap();
            let want = f.values() * (-t).exp();
            assert!((out.values() - want).amax() < 1e-14);
            let (m, _) = ergodic_average_continuous(&g, t, &f, QUAD_TOL).unwrap();
            let want = f.values() * ((1.0 - (-t).exp()) / t);
            assert!((m.values() - want).amax() < 1e-9);
        }
    }

    #[test]
    fn cycle_heat_flow_equilibrates() {
        let g = builtins::cycle_laplacian(4);
        let f = column(&[1.0, 0.0, 0.0, 0.0]);
        let out = semigroup_eval(&g, 60.0, &f).unwrap();
        for v in out.values().iter() {
            assert!((v - 0.25).abs() < 1e-12);
        }
        // Eigen-expansion at a moderate time: modes k = 0..3 with rates 2 − 2cos(πk/2).
        let t = 0.7;
        let out = semigroup_eval(&g, t, &f).unwrap();
        for j in 0..4 {
            let want: f64 = (0..4)
                .map(|k| {
                    let theta = std::f64::consts::PI * k as f64 / 2.0;
                    (-(2.0 - 2.0 * theta.cos()) * t).exp() * (theta * j as f64).cos() / 4.0
                })
                .sum();
            assert!((out.values()[(j, 0)] - want).abs() < 1e-13);
        }
    }

    #[test]
    fn continuous_average_of_cycle_flow_tends_to_mean() {
        let g = builtins::cycle_laplacian(4);
        let f = column(&[1.0, 0.0, 0.0, 0.0]);
        let (m, info) = ergodic_average_continuous(&g, 2000.0, &f, QUAD_TOL).unwrap();
        assert!(info.error_estimate < 1e-9);
        for v in m.values().iter() {
            assert!((v - 0.25).abs() < 1e-3);
        }
    }

    #[test]
    fn semigroup_law_and_cache() {
        let g = builtins::cycle_laplacian(6);
        let f = column(&[0.3, -1.0, 2.0, 0.0, 0.5, 1.5]);
        let (s, t) = (0.37, 1.21);
        let direct = semigroup_eval(&g, s + t, &f).unwrap();
        let composed = semigroup_eval(&g, s, &semigroup_eval(&g, t, &f).unwrap()).unwrap();
        assert!((direct.values() - composed.values()).amax() < 1e-12);
        assert_eq!(g.cached_times(), 3);
        let again = g.semigroup_matrix(s).unwrap();
        assert_eq!(g.cached_times(), 3);
        assert_eq!(*again, g.exp_neg(s).unwrap());
        assert!(g.exp_neg(-1.0).is_err());
    }

    #[test]
    fn overflow_is_reported() {
        let g = scalar_generator(-1.0);
        let err = g.exp_neg(1e6).unwrap_err();
        assert!(matches!(err, VarlabError::Overflow(_)));
    }

    #[test]
    fn scalar_square_function_closed_forms() {
        // ∫_0^∞ s·a² e^{−2as} ds = 1/4 and ∫_0^∞ s³ a⁴ e^{−2as} ds = 3/8, for any a > 0.
        for a in [0.3, 1.0, 5.0] {
            let g = scalar_generator(a);
            let f = column(&[1.0]);
            let m0 = square_function_continuous(&g, &f, 0, 1e-11).unwrap();
            assert!((m0.values.values()[(0, 0)] - 0.5).abs() < 1e-8, "a={a}");
            let m1 = square_function_continuous(&g, &f, 1, 1e-11).unwrap();
            assert!((m1.values.values()[(0, 0)] - 0.375f64.sqrt()).abs() < 1e-8);
        }
    }

    #[test]
    fn square_function_kills_constants() {
        let g = builtins::cycle_laplacian(8);
        let f = column(&[2.0; 8]);
        let sq = square_function_continuous(&g, &f, 1, 1e-10).unwrap();
        assert_eq!(sq.values.values().amax(), 0.0);

        let bump = column(&[1.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0]);
        let shifted = column(&[4.0, 3.0, 3.0, 3.0, 3.0, 3.0, 3.0, 3.0]);
        let a = square_function_continuous(&g, &bump, 0, 1e-10).unwrap();
        let b = square_function_continuous(&g, &shifted, 0, 1e-10).unwrap();
        assert!((a.values.values() - b.values.values()).amax() < 1e-7);
    }
}
