//! Convergence of averages and semigroups to the mean projection, and of
//! `T_t f` to `f` as `t → 0⁺`.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Result, VarlabError};
use crate::lab::config::ConvergenceConfig;
use crate::lattice::{LatticeFunction, MeasureSpace};
use crate::operators::projection::{
    fixed_space_projection_generator, fixed_space_projection_kernel, spectral_gap_generator, spectral_gap_kernel,
    ProjectionReport,
};
use crate::operators::semigroup::{ergodic_average_continuous, Generator};
use crate::operators::{Operator, RegularOperator};

/// Errors below this are treated as zero and excluded from fits.
const ERROR_FLOOR: f64 = 1e-13;
/// Mean-error slopes within this distance of −1 pass.
pub const SLOPE_TOLERANCE: f64 = 0.2;
/// Fitted decay exponents within this factor of the spectral rate pass.
pub const EXPONENT_FACTOR: f64 = 2.0;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ErrorPoint {
    pub x: f64,
    pub error: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConvergenceProfile {
    /// `"kernel"` or `"generator"`.
    pub operator_type: String,
    /// `1 − max{|λ| : λ ≠ 1}` for kernels, `min{Re λ : λ ≠ 0}` for generators.
    pub gap: f64,
    /// Expected exponential rate of `‖T f − P f‖`: `−ln(1 − gap)` per step, or `gap` per unit time.
    pub decay_rate: f64,
    pub projection: ProjectionReport,
    /// `sup |M f − P f|` over the mean grid.
    pub mean_errors: Vec<ErrorPoint>,
    pub mean_slope: Option<f64>,
    pub mean_slope_ok: Option<bool>,
    /// `sup |T f − P f|` over the power grid.
    pub power_errors: Vec<ErrorPoint>,
    pub power_exponent: Option<f64>,
    pub exponent_ratio: Option<f64>,
    pub exponent_ok: Option<bool>,
    /// `sup |T_t f − f|` for small `t` (generators only).
    pub small_t_errors: Vec<ErrorPoint>,
    pub small_t_slope: Option<f64>,
    /// `sup |M_t f − f|` for small `t` (generators only).
    pub small_t_mean_errors: Vec<ErrorPoint>,
}

/// Least-squares slope of `y` against `x`.
pub fn fit_slope(x: &[f64], y: &[f64]) -> Option<f64> {
    if x.len() < 2 {
        return None;
    }
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let sxx: f64 = x.iter().map(|a| (a - mx) * (a - mx)).sum();
    if sxx == 0.0 {
        return None;
    }
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    Some(sxy / sxx)
}

fn usable(points: &[ErrorPoint]) -> Vec<ErrorPoint> {
    points.iter().copied().filter(|p| p.error > ERROR_FLOOR).collect()
}

/// Slope of `ln error` against `ln x`.
fn loglog_slope(points: &[ErrorPoint]) -> Option<f64> {
    let pts = usable(points);
    let x: Vec<f64> = pts.iter().map(|p| p.x.ln()).collect();
    let y: Vec<f64> = pts.iter().map(|p| p.error.ln()).collect();
    fit_slope(&x, &y)
}

/// Negated slope of `ln error` against `x`.
fn exponential_rate(points: &[ErrorPoint]) -> Option<f64> {
    let pts = usable(points);
    let x: Vec<f64> = pts.iter().map(|p| p.x).collect();
    let y: Vec<f64> = pts.iter().map(|p| p.error.ln()).collect();
    fit_slope(&x, &y).map(|s| -s)
}

fn geometric(lo: f64, hi: f64, points: usize) -> Vec<f64> {
    (0..points)
        .map(|i| (lo.ln() + (hi.ln() - lo.ln()) * i as f64 / (points - 1) as f64).exp())
        .collect()
}

fn linear(lo: f64, hi: f64, points: usize) -> Vec<f64> {
    (0..points).map(|i| lo + (hi - lo) * i as f64 / (points - 1) as f64).collect()
}

fn rounded(grid: Vec<f64>) -> Vec<f64> {
    grid.into_iter().map(f64::round).collect()
}

fn integer_grid(grid: &[f64]) -> Result<Vec<usize>> {
    let mut out: Vec<usize> = Vec::with_capacity(grid.len());
    for &x in grid {
        let n = x.round();
        if (x - n).abs() > 1e-9 || n < 1.0 {
            return Err(VarlabError::Config(format!("kernel convergence grids need positive integers, got {x}")));
        }
        let n = n as usize;
        if out.last().is_some_and(|&last| last >= n) {
            continue;
        }
        out.push(n);
    }
    Ok(out)
}

fn sup_diff(a: &DMatrix<f64>, b: &DMatrix<f64>) -> f64 {
    (a - b).amax()
}

fn judge(profile: &mut ConvergenceProfile) {
    profile.mean_slope = loglog_slope(&profile.mean_errors);
    profile.mean_slope_ok = profile.mean_slope.map(|s| (s + 1.0).abs() <= SLOPE_TOLERANCE);
    profile.power_exponent = exponential_rate(&profile.power_errors);
    profile.exponent_ratio = profile.power_exponent.map(|e| e / profile.decay_rate);
    profile.exponent_ok = profile
        .exponent_ratio
        .map(|r| (1.0 / EXPONENT_FACTOR..=EXPONENT_FACTOR).contains(&r));
    profile.small_t_slope = loglog_slope(&profile.small_t_errors);
}

fn kernel_profile(t: &RegularOperator, f: &DMatrix<f64>, cfg: &ConvergenceConfig) -> Result<ConvergenceProfile> {
    let gap = spectral_gap_kernel(t.kernel());
    let proj = fixed_space_projection_kernel(t)?;
    let decay_rate = -(1.0 - gap).ln();
    let scale = decay_rate.clamp(1e-4, 1.0);
    let mean_grid = if cfg.mean_grid.is_empty() {
        integer_grid(&rounded(geometric((10.0 / scale).ceil(), (100.0 / scale).ceil(), 12)))?
    } else {
        integer_grid(&cfg.mean_grid)?
    };
    let power_grid = if cfg.power_grid.is_empty() {
        integer_grid(&rounded(linear((1.0 / scale).ceil(), (20.0 / scale).ceil(), 16)))?
    } else {
        integer_grid(&cfg.power_grid)?
    };
    let pf = &proj.matrix * f;
    let last = mean_grid.last().copied().unwrap_or(0).max(power_grid.last().copied().unwrap_or(0));
    let mut mean_errors = Vec::new();
    let mut power_errors = Vec::new();
    let mut power = f.clone();
    let mut sum = f.clone();
    let (mut mi, mut pi) = (0, 0);
    for n in 1..=last {
        power = t.kernel() * power;
        sum += &power;
        if mi < mean_grid.len() && mean_grid[mi] == n {
            let avg = &sum / (n + 1) as f64;
            mean_errors.push(ErrorPoint {
                x: n as f64,
                error: sup_diff(&avg, &pf),
            });
            mi += 1;
        }
        if pi < power_grid.len() && power_grid[pi] == n {
            power_errors.push(ErrorPoint {
                x: n as f64,
                error: sup_diff(&power, &pf),
            });
            pi += 1;
        }
    }
    let mut profile = ConvergenceProfile {
        operator_type: "kernel".into(),
        gap,
        decay_rate,
        projection: proj.report(),
        mean_errors,
        mean_slope: None,
        mean_slope_ok: None,
        power_errors,
        power_exponent: None,
        exponent_ratio: None,
        exponent_ok: None,
        small_t_errors: Vec::new(),
        small_t_slope: None,
        small_t_mean_errors: Vec::new(),
    };
    judge(&mut profile);
    Ok(profile)
}

fn generator_profile(
    g: &Generator,
    f: &DMatrix<f64>,
    cfg: &ConvergenceConfig,
    quad_tol: f64,
) -> Result<ConvergenceProfile> {
    let gap = spectral_gap_generator(g.matrix());
    let proj = fixed_space_projection_generator(g)?;
    let scale = if gap.is_finite() { gap.clamp(1e-3, 1e3) } else { 1.0 };
    let mean_grid = if cfg.mean_grid.is_empty() {
        geometric(10.0 / scale, 100.0 / scale, 12)
    } else {
        cfg.mean_grid.clone()
    };
    let power_grid = if cfg.power_grid.is_empty() {
        linear(1.0 / scale, 20.0 / scale, 16)
    } else {
        cfg.power_grid.clone()
    };
    let small_grid = if cfg.small_t_grid.is_empty() {
        geometric(1e-6, 1e-2, 5)
    } else {
        cfg.small_t_grid.clone()
    };
    let lf = LatticeFunction::new(g.space().clone(), MeasureSpace::counting(f.ncols()), f.clone())?;
    let pf = &proj.matrix * f;
    let mut mean_errors = Vec::with_capacity(mean_grid.len());
    for &t in &mean_grid {
        let (avg, _) = ergodic_average_continuous(g, t, &lf, quad_tol)?;
        mean_errors.push(ErrorPoint {
            x: t,
            error: sup_diff(avg.values(), &pf),
        });
    }
    let mut power_errors = Vec::with_capacity(power_grid.len());
    for &t in &power_grid {
        let e = g.exp_neg(t)?;
        power_errors.push(ErrorPoint {
            x: t,
            error: sup_diff(&(e * f), &pf),
        });
    }
    let mut small_t_errors = Vec::with_capacity(small_grid.len());
    let mut small_t_mean_errors = Vec::with_capacity(small_grid.len());
    for &t in &small_grid {
        let e = g.exp_neg(t)?;
        small_t_errors.push(ErrorPoint {
            x: t,
            error: sup_diff(&(e * f), f),
        });
        let (avg, _) = ergodic_average_continuous(g, t, &lf, quad_tol)?;
        small_t_mean_errors.push(ErrorPoint {
            x: t,
            error: sup_diff(avg.values(), f),
        });
    }
    let mut profile = ConvergenceProfile {
        operator_type: "generator".into(),
        gap,
        decay_rate: gap,
        projection: proj.report(),
        mean_errors,
        mean_slope: None,
        mean_slope_ok: None,
        power_errors,
        power_exponent: None,
        exponent_ratio: None,
        exponent_ok: None,
        small_t_errors,
        small_t_slope: None,
        small_t_mean_errors,
    };
    judge(&mut profile);
    Ok(profile)
}

/// Errors of the averages and of the powers (or semigroup) against the
/// mean projection, sup-normed over all columns of `f`, with fitted rates.
/// Empty grids are derived from the spectral gap.
pub fn convergence_profile(
    op: &Operator,
    f: &DMatrix<f64>,
    cfg: &ConvergenceConfig,
    quad_tol: f64,
) -> Result<ConvergenceProfile> {
    if f.nrows() != op.dim() {
        return Err(VarlabError::invalid("test functions do not match the operator"));
    }
    match op {
        Operator::Kernel(t) => kernel_profile(t, f, cfg),
        Operator::Generator(g) => generator_profile(g, f, cfg, quad_tol),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::operators::builtins;

    fn delta(n: usize) -> DMatrix<f64> {
        DMatrix::from_fn(n, 1, |i, _| if i == 0 { 1.0 } else { 0.0 })
    }

    #[test]
    fn slope_fit() {
        let x = [1.0, 2.0, 3.0];
        assert_eq!(fit_slope(&x, &[2.0, 4.0, 6.0]), Some(2.0));
        assert_eq!(fit_slope(&[1.0], &[1.0]), None);
    }

    #[test]
    fn zero_generator_has_no_error() {
        let g = builtins::zero_generator(3);
        let f = DMatrix::from_column_slice(3, 1, &[1.0, -2.0, 0.5]);
        let p = convergence_profile(&Operator::Generator(g), &f, &ConvergenceConfig::default(), 1e-10).unwrap();
        for e in p.mean_errors.iter().chain(&p.power_errors).chain(&p.small_t_errors) {
            assert!(e.error <= 4.0 * f64::EPSILON, "{e:?}");
        }
        assert_eq!(p.mean_slope, None);
    }

    #[test]
    fn scalar_generator_small_time_error_is_closed_form() {
        let a = 0.7;
        let g = builtins::scalar_generator(a);
        let f = DMatrix::from_element(1, 1, -1.5);
        let p = convergence_profile(&Operator::Generator(g), &f, &ConvergenceConfig::default(), 1e-10).unwrap();
        for e in &p.small_t_errors {
            let want = (-a * e.x).exp_m1().abs() * 1.5;
            assert!((e.error - want).abs() <= 1e-15 + 1e-12 * want, "{e:?} vs {want}");
        }
        assert!((p.small_t_slope.unwrap() - 1.0).abs() < 1e-3);
    }

    #[test]
    fn lazy_walk_rates() {
        let t = builtins::lazy_walk(32);
        let p = convergence_profile(&Operator::Kernel(t), &delta(32), &ConvergenceConfig::default(), 1e-10).unwrap();
        assert!(p.mean_slope_ok.unwrap(), "{:?}", p.mean_slope);
        assert!(p.exponent_ok.unwrap(), "{:?}", p.exponent_ratio);
    }

    #[test]
    fn heat_semigroup_rates() {
        let g = builtins::cycle_laplacian(16);
        let p = convergence_profile(&Operator::Generator(g), &delta(16), &ConvergenceConfig::default(), 1e-10).unwrap();
        let want = 2.0 * (1.0 - (2.0 * std::f64::consts::PI / 16.0).cos());
        assert!((p.gap - want).abs() < 1e-10);
        assert!(p.exponent_ok.unwrap(), "{:?}", p.exponent_ratio);
        assert!(p.mean_slope_ok.unwrap(), "{:?}", p.mean_slope);
    }
}
