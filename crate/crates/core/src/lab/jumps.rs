//! Jump profiles: how much of `Ω × Σ` sees more than `K` jumps of size `λ`.

use nalgebra::DMatrix;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Result, VarlabError};
use crate::exec::Execution;
use crate::lab::ensemble::{member_rng, Member};
use crate::lab::estimate::ConstantEstimate;
use crate::lab::families::FamilyBuilder;
use crate::lattice::{mixed_norm_values, LatticeFamily, MeasureSpace};
use crate::variation::{jump_count_values, vq_power};

/// Relative slack for comparisons that are exact in real arithmetic.
const ROUNDOFF: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct JumpReportRow {
    pub member: usize,
    pub lambda: f64,
    pub k: usize,
    /// `(μ × ν){(ω, σ) : N(F(ω, σ), λ) > K}`.
    pub tail_mass: f64,
    /// `(C κ)^p ‖f‖^p / (λ^p K^{p/q})`.
    pub bound: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct JumpProfile {
    /// Constant `C` used in the bound (the ensemble supremum).
    pub constant: f64,
    /// `‖·‖_{L^p(L^p)} ≤ κ ‖·‖_{L^p(L^r)}` on this Σ.
    pub kappa: f64,
    pub total_mass: f64,
    pub rows: Vec<JumpReportRow>,
    pub max_tail_to_bound: f64,
    pub spot_checks: usize,
    pub spot_violations: usize,
}

/// `κ` with `‖h‖_{L^p(ν)} ≤ κ ‖h‖_{L^r(ν)}` for every `h` on Σ.
pub fn lp_lr_constant(sigma: &MeasureSpace, p: f64, r: f64) -> f64 {
    let e = 1.0 / p - 1.0 / r;
    if e >= 0.0 {
        sigma.total_mass().powf(e)
    } else {
        sigma.weights().iter().map(|w| w.powf(e)).fold(0.0, f64::max)
    }
}

/// Jump counts `N(F(ω, σ), λ)` for every λ, as matrices.
fn jump_counts(fam: &LatticeFamily, lambdas: &[f64]) -> Vec<DMatrix<f64>> {
    lambdas
        .iter()
        .map(|&l| fam.pointwise(|traj| jump_count_values(traj, l) as f64))
        .collect()
}

#[allow(clippy::too_many_arguments)]
pub fn jump_profile(
    builder: &FamilyBuilder,
    members: &[Member],
    omega: &MeasureSpace,
    sigma: &MeasureSpace,
    estimate: &ConstantEstimate,
    lambdas: &[f64],
    ks: &[usize],
    spot_checks: usize,
    seed: u64,
    exec: Execution,
) -> Result<JumpProfile> {
    if lambdas.iter().any(|l| !(*l > 0.0)) || ks.contains(&0) {
        return Err(VarlabError::invalid("jump profile needs λ > 0 and K > 0"));
    }
    let (p, q, r) = (estimate.p, estimate.q, estimate.r);
    let kappa = lp_lr_constant(sigma, p, r);
    let constant = estimate.sup_ratio;
    let total_mass = omega.total_mass() * sigma.total_mass();
    let grid = builder.grid().to_vec();
    let per_member = exec.try_map(members.len(), |i| -> Result<Vec<JumpReportRow>> {
        let f = &members[i].values;
        let norm = mixed_norm_values(omega, sigma, f, p, r)?;
        let fam = LatticeFamily::from_matrices(grid.clone(), omega.clone(), sigma.clone(), builder.evaluate(f))?;
        let counts = jump_counts(&fam, lambdas);
        let mut rows = Vec::with_capacity(lambdas.len() * ks.len());
        for (li, &lambda) in lambdas.iter().enumerate() {
            for &k in ks {
                let mut tail_mass = 0.0;
                for (w, mu) in omega.weights().iter().enumerate() {
                    for (s, nu) in sigma.weights().iter().enumerate() {
                        if counts[li][(w, s)] > k as f64 {
                            tail_mass += mu * nu;
                        }
                    }
                }
                let bound = (constant * kappa * norm).powf(p) / (lambda.powf(p) * (k as f64).powf(p / q));
                rows.push(JumpReportRow {
                    member: members[i].index,
                    lambda,
                    k,
                    tail_mass,
                    bound,
                });
            }
        }
        Ok(rows)
    })?;
    let rows: Vec<JumpReportRow> = per_member.into_iter().flatten().collect();
    let mut max_tail_to_bound: f64 = 0.0;
    for row in &rows {
        if row.tail_mass > 0.0 {
            max_tail_to_bound = max_tail_to_bound.max(row.tail_mass / row.bound);
        }
        if row.tail_mass > row.bound * (1.0 + ROUNDOFF) {
            return Err(VarlabError::Certificate {
                name: "jump bound".into(),
                detail: format!(
                    "member {} at λ = {}, K = {}: tail mass {:e} exceeds {:e}; the constant estimate is not a supremum, re-estimate with this member included",
                    row.member, row.lambda, row.k, row.tail_mass, row.bound
                ),
            });
        }
    }

    // Re-verify λ^q N ≤ v_q^q at random points.
    let mut rng = member_rng(seed, usize::MAX);
    let mut spot_violations = 0;
    if !members.is_empty() && !lambdas.is_empty() {
        for _ in 0..spot_checks {
            let m = rng.random_range(0..members.len());
            let w = rng.random_range(0..omega.len());
            let s = rng.random_range(0..sigma.len());
            let lambda = lambdas[rng.random_range(0..lambdas.len())];
            let traj: Vec<f64> = builder.evaluate(&members[m].values).iter().map(|x| x[(w, s)]).collect();
            let n = jump_count_values(&traj, lambda) as f64;
            if lambda.powf(q) * n > vq_power(&traj, q) * (1.0 + ROUNDOFF) {
                spot_violations += 1;
            }
        }
    }
    if spot_violations > 0 {
        return Err(VarlabError::Certificate {
            name: "jump inequality".into(),
            detail: format!("λ^q N ≤ v_q^q failed at {spot_violations} of {spot_checks} sampled points"),
        });
    }
    Ok(JumpProfile {
        constant,
        kappa,
        total_mass,
        rows,
        max_tail_to_bound,
        spot_checks,
        spot_violations,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn kappa_cases() {
        let counting = MeasureSpace::counting(4);
        assert_eq!(lp_lr_constant(&counting, 2.0, 2.0), 1.0);
        // p < r: Hölder with total mass 4
        assert!((lp_lr_constant(&counting, 2.0, 4.0) - 4f64.powf(0.25)).abs() < 1e-15);
        // p > r on counting measure: ℓ^r ⊂ ℓ^p
        assert_eq!(lp_lr_constant(&counting, 4.0, 2.0), 1.0);
        let prob = MeasureSpace::uniform_probability(4);
        assert!((lp_lr_constant(&prob, 4.0, 2.0) - 0.25f64.powf(0.25 - 0.5)).abs() < 1e-15);
    }
}
