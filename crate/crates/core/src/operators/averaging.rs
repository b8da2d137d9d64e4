//! The averages `A_n f(j) = (1/(n+1)) Σ_{k=0}^n f(j+k)` on the cyclic group
//! `ℤ_N` and `A_t f(s) = (1/t) ∫_0^t f(s+r) dr` on a sampled line.

use nalgebra::DMatrix;

use crate::error::{Result, VarlabError};
use crate::lattice::LatticeFunction;

/// `A_n f` on `ℤ_N × Σ`, indices taken modulo `N`.
pub fn averaging_z(f: &LatticeFunction, n: usize) -> Result<LatticeFunction> {
    let fam = averaging_z_family(f.values(), n);
    f.with_values(fam.into_iter().last().expect("n + 1 members"))
}

/// `A_0 f, …, A_{n_max} f`.
///
/// Each `A_n f(j)` is the left-to-right sum `f(j) + f(j+1) + … + f(j+n)`
/// divided by `n + 1`, with the same operation order at every `j`, so the
/// family commutes with the cyclic shift exactly.
pub fn averaging_z_family(f: &DMatrix<f64>, n_max: usize) -> Vec<DMatrix<f64>> {
    let rows = f.nrows();
    let mut sums = f.clone();
    let mut out = Vec::with_capacity(n_max + 1);
    out.push(f.clone());
    for n in 1..=n_max {
        for j in 0..rows {
            let src = (j + n) % rows;
            for c in 0..f.ncols() {
                sums[(j, c)] += f[(src, c)];
            }
        }
        out.push(&sums / (n + 1) as f64);
    }
    out
}

/// Samples `values[i] = f(start + i·step)` of a function on the line.
#[derive(Debug, Clone, PartialEq)]
pub struct UniformSamples {
    pub start: f64,
    pub step: f64,
    pub values: Vec<f64>,
}

impl UniformSamples {
    pub fn new(start: f64, step: f64, values: Vec<f64>) -> Result<Self> {
        if !(step > 0.0) || !step.is_finite() || !start.is_finite() {
            return Err(VarlabError::invalid("sample grid needs a finite start and step > 0"));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(VarlabError::invalid("samples must be finite"));
        }
        Ok(UniformSamples { start, step, values })
    }

    pub fn from_fn(start: f64, step: f64, len: usize, f: impl Fn(f64) -> f64) -> Result<Self> {
        Self::new(start, step, (0..len).map(|i| f(start + i as f64 * step)).collect())
    }

    pub fn point(&self, i: usize) -> f64 {
        self.start + i as f64 * self.step
    }
}

/// `A_t f` at every sample point `s` whose window `[s, s + t]` lies inside
/// the grid, by the trapezoid rule over whole steps plus a linearly
/// interpolated partial step. Exact for affine `f`, `O(h²)` for `C²` data.
pub fn averaging_r_sampled(f: &UniformSamples, t: f64) -> Result<UniformSamples> {
    let h = f.step;
    if !(t >= h) || !t.is_finite() {
        return Err(VarlabError::invalid(format!(
            "window t = {t} is shorter than the sample step {h}"
        )));
    }
    let ratio = t / h;
    let mut whole = ratio.floor() as usize;
    let mut frac = ratio - whole as f64;
    if frac < 1e-12 {
        frac = 0.0;
    } else if 1.0 - frac < 1e-12 {
        whole += 1;
        frac = 0.0;
    }
    let reach = whole + usize::from(frac > 0.0);
    let v = &f.values;
    if v.len() <= reach {
        return Err(VarlabError::invalid("sample grid is shorter than the averaging window"));
    }
    let out: Vec<f64> = (0..v.len() - reach)
        .map(|i| {
            let mut area = 0.0;
            for k in 0..whole {
                area += 0.5 * (v[i + k] + v[i + k + 1]);
            }
            area *= h;
            if frac > 0.0 {
                let a = v[i + whole];
                let b = a + frac * (v[i + whole + 1] - a);
                area += 0.5 * frac * h * (a + b);
            }
            area / t
        })
        .collect();
    UniformSamples::new(f.start, h, out)
}
