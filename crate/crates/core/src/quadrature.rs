//! Adaptive Simpson quadrature for matrix-valued integrands.

use nalgebra::DMatrix;

use crate::error::{Result, VarlabError};

const MAX_DEPTH: usize = 48;
const MAX_EVALUATIONS: usize = 2_000_000;

/// Integral value together with bookkeeping for reports.
#[derive(Debug, Clone)]
pub struct Quadrature {
    pub value: DMatrix<f64>,
    /// Sum of the local error estimates, in the max-entry norm.
    pub error_estimate: f64,
    pub evaluations: usize,
}

fn max_abs(m: &DMatrix<f64>) -> f64 {
    m.iter().fold(0.0f64, |a, v| a.max(v.abs()))
}

struct Simpson<'a, F> {
    f: &'a F,
    evaluations: usize,
    error: f64,
}

impl<F> Simpson<'_, F>
where
    F: Fn(f64) -> Result<DMatrix<f64>>,
{
    fn eval(&mut self, x: f64) -> Result<DMatrix<f64>> {
        self.evaluations += 1;
        if self.evaluations > MAX_EVALUATIONS {
            return Err(VarlabError::NonConvergence {
                iterations: self.evaluations,
                detail: "adaptive Simpson exceeded its evaluation budget".into(),
            });
        }
        (self.f)(x)
    }

    #[allow(clippy::too_many_arguments)]
    fn recurse(
        &mut self,
        a: f64,
        b: f64,
        fa: &DMatrix<f64>,
        fm: &DMatrix<f64>,
        fb: &DMatrix<f64>,
        whole: DMatrix<f64>,
        tol: f64,
        depth: usize,
    ) -> Result<DMatrix<f64>> {
        let m = 0.5 * (a + b);
        let h = b - a;
        let flm = self.eval(0.5 * (a + m))?;
        let frm = self.eval(0.5 * (m + b))?;
        let left = (fa + &flm * 4.0 + fm) * (h / 12.0);
        let right = (fm + &frm * 4.0 + fb) * (h / 12.0);
        let both = &left + &right;
        let delta = &both - &whole;
        let err = max_abs(&delta) / 15.0;
        if err <= tol {
            self.error += err;
            return Ok(both + delta / 15.0);
        }
        if depth >= MAX_DEPTH || h.abs() < 1e-14 * (a.abs() + b.abs()).max(1e-300) {
            return Err(VarlabError::NonConvergence {
                iterations: self.evaluations,
                detail: format!(
                    "adaptive Simpson stalled on [{a}, {b}] with local error {err:e} > {tol:e}"
                ),
            });
        }
        let l = self.recurse(a, m, fa, &flm, fm, left, 0.5 * tol, depth + 1)?;
        let r = self.recurse(m, b, fm, &frm, fb, right, 0.5 * tol, depth + 1)?;
        Ok(l + r)
    }
}

/// Integrates `f` over `[a, b]` to absolute tolerance `tol` in the
/// max-entry norm. The interval is first cut into `pieces` equal panels so
/// that narrow features near an endpoint are not missed by the first
/// five samples.
pub fn adaptive_simpson<F>(f: F, a: f64, b: f64, tol: f64, pieces: usize) -> Result<Quadrature>
where
    F: Fn(f64) -> Result<DMatrix<f64>>,
{
    if !(b > a) || !tol.is_finite() || !(tol > 0.0) {
        return Err(VarlabError::invalid("quadrature needs a < b and tol > 0"));
    }
    let pieces = pieces.max(1);
    let mut s = Simpson {
        f: &f,
        evaluations: 0,
        error: 0.0,
    };
    let width = (b - a) / pieces as f64;
    let mut fa = s.eval(a)?;
    let mut total: Option<DMatrix<f64>> = None;
    for k in 0..pieces {
        let lo = a + width * k as f64;
        let hi = if k + 1 == pieces { b } else { lo + width };
        let mid = 0.5 * (lo + hi);
        let fm = s.eval(mid)?;
        let fb = s.eval(hi)?;
        let whole = (&fa + &fm * 4.0 + &fb) * ((hi - lo) / 6.0);
        let piece = s.recurse(lo, hi, &fa, &fm, &fb, whole, tol / pieces as f64, 0)?;
        total = Some(match total {
            Some(t) => t + piece,
            None => piece,
        });
        fa = fb;
    }
    Ok(Quadrature {
        value: total.expect("at least one panel"),
        error_estimate: s.error,
        evaluations: s.evaluations,
    })
}
