use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Result, VarlabError};
use crate::lattice::{LatticeFunction, MeasureSpace};

/// Slack allowed in the contraction certificates for floating row/column sums.
pub const CERTIFICATE_SLACK: f64 = 1e-12;
/// Relative tolerance of the iterative operator-norm estimate.
pub const NORM_TOL: f64 = 1e-8;
/// Iteration cap of the iterative operator-norm estimate.
pub const NORM_MAX_ITER: usize = 10_000;

/// Contraction certificates computed from the absolute kernel.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Certificates {
    /// `Σ_i μ_i |K(i,j)| ≤ μ_j` for every `j`.
    pub l1_contractive: bool,
    /// `Σ_j |K(i,j)| ≤ 1` for every `i`.
    pub linf_contractive: bool,
    pub analyticity: Option<AnalyticityProfile>,
}

impl Certificates {
    /// Both contractions hold, hence `T` is contractively regular on every `L^p`.
    pub fn contractively_regular(&self) -> bool {
        self.l1_contractive && self.linf_contractive
    }
}

/// `n ‖T^n − T^{n−1}‖_{p→p}` for `n = 1..=n_used`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnalyticityProfile {
    pub p: f64,
    pub n_used: usize,
    /// Maximum of `trace`.
    pub index: f64,
    pub trace: Vec<f64>,
    /// Whether the second half of the trace stays within 5% of the first half's maximum.
    pub flat: bool,
}

/// A kernel operator `(Tf)(i) = Σ_j K(i,j) f(j)` on a finite measure space.
#[derive(Debug, Clone, PartialEq)]
pub struct RegularOperator {
    space: MeasureSpace,
    kernel: DMatrix<f64>,
    certificates: Certificates,
}

impl RegularOperator {
    pub fn space(&self) -> &MeasureSpace {
        &self.space
    }

    pub fn kernel(&self) -> &DMatrix<f64> {
        &self.kernel
    }

    pub fn certificates(&self) -> &Certificates {
        &self.certificates
    }

    pub fn dim(&self) -> usize {
        self.kernel.nrows()
    }

    /// Computes the analyticity profile and stores it in the certificates.
    pub fn certify_analyticity(&mut self, p: f64, n: usize) -> Result<&AnalyticityProfile> {
        let profile = analyticity_index(self, p, n)?;
        self.certificates.analyticity = Some(profile);
        Ok(self.certificates.analyticity.as_ref().expect("just set"))
    }

    /// Applies the kernel to every σ-column of `f`.
    pub fn apply(&self, f: &LatticeFunction) -> Result<LatticeFunction> {
        self.check_function(f)?;
        f.with_values(&self.kernel * f.values())
    }

    pub(crate) fn check_function(&self, f: &LatticeFunction) -> Result<()> {
        if f.omega() != &self.space {
            return Err(VarlabError::invalid(
                "function and operator live on different measure spaces",
            ));
        }
        Ok(())
    }

    /// Operator with the same space and a new kernel; certificates recomputed.
    pub fn with_kernel(&self, kernel: DMatrix<f64>) -> Result<Self> {
        build_regular_operator(kernel, self.space.clone())
    }
}

/// Builds the operator and its contraction certificates. Flags may be false;
/// only shape or finiteness problems are errors.
pub fn build_regular_operator(kernel: DMatrix<f64>, space: MeasureSpace) -> Result<RegularOperator> {
    let n = space.len();
    if kernel.nrows() != n || kernel.ncols() != n {
        return Err(VarlabError::invalid(format!(
            "kernel is {}x{} but the space has {n} atoms",
            kernel.nrows(),
            kernel.ncols()
        )));
    }
    if kernel.iter().any(|v| !v.is_finite()) {
        return Err(VarlabError::invalid("kernel entries must be finite"));
    }
    let certificates = Certificates {
        l1_contractive: l1_ratio(&kernel, &space) <= 1.0 + CERTIFICATE_SLACK,
        linf_contractive: linf_norm(&kernel) <= 1.0 + CERTIFICATE_SLACK,
        analyticity: None,
    };
    Ok(RegularOperator {
        space,
        kernel,
        certificates,
    })
}

/// `max_j Σ_i μ_i |K(i,j)| / μ_j`, the `L^1(μ)` norm of `K`.
fn l1_ratio(k: &DMatrix<f64>, space: &MeasureSpace) -> f64 {
    let w = space.weights();
    (0..k.ncols())
        .map(|j| (0..k.nrows()).map(|i| w[i] * k[(i, j)].abs()).sum::<f64>() / w[j])
        .fold(0.0, f64::max)
}

/// `max_i Σ_j |K(i,j)|`, the `L^∞` norm of `K`.
fn linf_norm(k: &DMatrix<f64>) -> f64 {
    k.row_iter()
        .map(|row| row.iter().map(|v| v.abs()).sum::<f64>())
        .fold(0.0, f64::max)
}

/// `‖K‖_{L^p(μ)→L^p(μ)}`.
///
/// Exact for `p ∈ {1, 2, ∞}` (the `p = 2` case is the top singular value
/// of `D^{1/2} K D^{−1/2}`). Other exponents use Boyd's nonlinear power
/// iteration, started from several vectors, which converges to the norm
/// from below; for nonnegative kernels the nonnegative start reaches the
/// true norm.
pub fn operator_norm(k: &DMatrix<f64>, space: &MeasureSpace, p: f64) -> Result<f64> {
    if !(p >= 1.0) {
        return Err(VarlabError::invalid(format!("operator norm needs p ≥ 1, got {p}")));
    }
    if p == 1.0 {
        return Ok(l1_ratio(k, space));
    }
    if p.is_infinite() {
        return Ok(linf_norm(k));
    }
    let b = conjugate_by_weights(k, space, p);
    if b.iter().all(|v| *v == 0.0) {
        return Ok(0.0);
    }
    if p == 2.0 {
        return Ok(b.singular_values().max());
    }
    boyd_norm(&b, p)
}

/// `D^{1/p} K D^{−1/p}`: turns `L^p(μ)` into plain `ℓ^p`.
fn conjugate_by_weights(k: &DMatrix<f64>, space: &MeasureSpace, p: f64) -> DMatrix<f64> {
    let w = space.weights();
    DMatrix::from_fn(k.nrows(), k.ncols(), |i, j| {
        k[(i, j)] * (w[i] / w[j]).powf(1.0 / p)
    })
}

fn lp(v: &DVector<f64>, p: f64) -> f64 {
    v.iter().map(|x| x.abs().powf(p)).sum::<f64>().powf(1.0 / p)
}

/// `sign(y) |y|^{p−1} / ‖y‖_p^{p−1}`: the unit dual vector of `y`.
fn dual(y: &DVector<f64>, p: f64) -> DVector<f64> {
    let norm = lp(y, p);
    y.map(|x| x.signum() * (x.abs() / norm).powf(p - 1.0))
}

fn boyd_norm(b: &DMatrix<f64>, p: f64) -> Result<f64> {
    let n = b.ncols();
    let p_dual = p / (p - 1.0);
    let mut starts = vec![
        DVector::from_element(n, 1.0),
        DVector::from_fn(n, |i, _| if i % 2 == 0 { 1.0 } else { -1.0 }),
    ];
    let svd = b.clone().svd(false, true);
    if let Some(v_t) = svd.v_t {
        let top = svd
            .singular_values
            .iter()
            .enumerate()
            .fold((0, f64::MIN), |acc, (i, &s)| if s > acc.1 { (i, s) } else { acc })
            .0;
        starts.push(v_t.row(top).transpose());
    }
    let mut best: f64 = 0.0;
    for start in starts {
        if start.iter().all(|v| *v == 0.0) {
            continue;
        }
        let mut x = &start / lp(&start, p);
        let mut estimate = lp(&(b * &x), p);
        let mut converged = false;
        for _ in 0..NORM_MAX_ITER {
            let y = b * &x;
            if y.iter().all(|v| *v == 0.0) {
                converged = true;
                break;
            }
            let z = b.transpose() * dual(&y, p);
            if z.iter().all(|v| *v == 0.0) {
                converged = true;
                break;
            }
            x = dual(&z, p_dual);
            let next = lp(&(b * &x), p);
            let change = (next - estimate).abs();
            estimate = next;
            if change <= NORM_TOL * estimate.max(f64::MIN_POSITIVE) {
                converged = true;
                break;
            }
        }
        if !converged {
            return Err(VarlabError::NonConvergence {
                iterations: NORM_MAX_ITER,
                detail: format!("power iteration for the L^{p} norm, last estimate {estimate}"),
            });
        }
        best = best.max(estimate);
    }
    Ok(best)
}

/// `max_{1≤n≤N} n ‖T^n − T^{n−1}‖_{L^p→L^p}` with its full trace.
pub fn analyticity_index(t: &RegularOperator, p: f64, n: usize) -> Result<AnalyticityProfile> {
    if n == 0 {
        return Err(VarlabError::invalid("analyticity index needs N ≥ 1"));
    }
    if !(p > 1.0) && p != 1.0 && !p.is_infinite() {
        return Err(VarlabError::invalid(format!("p must be > 1, got {p}")));
    }
    let dim = t.dim();
    let mut prev = DMatrix::<f64>::identity(dim, dim);
    let mut trace = Vec::with_capacity(n);
    for k in 1..=n {
        let cur = &t.kernel * &prev;
        let diff = &cur - &prev;
        trace.push(k as f64 * operator_norm(&diff, &t.space, p)?);
        prev = cur;
    }
    let index = trace.iter().copied().fold(0.0, f64::max);
    let half = trace[..n.div_ceil(2)].iter().copied().fold(0.0, f64::max);
    Ok(AnalyticityProfile {
        p,
        n_used: n,
        index,
        flat: index <= 1.05 * half + 1e-12,
        trace,
    })
}
