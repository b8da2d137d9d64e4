//! Growth probes: the maximal inequality with `ℓ¹`-valued functions, and
//! weighted variational ratios against the `A_p` characteristic.

use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::exec::Execution;
use crate::lab::config::EnsembleConfig;
use crate::lab::ensemble;
use crate::lab::estimate::{estimate_family, ConstantEstimate, Measure};
use crate::lab::families::FamilyBuilder;
use crate::lattice::{mixed_norm_values, LatticeFamily, MeasureSpace};
use crate::weights::{ap_characteristic, ApCharacteristic, Weight};

/// Relative spread below which the `r = 2` arm counts as flat.
pub const FLAT_SPREAD: f64 = 0.05;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ProbePoint {
    pub sigma_dim: usize,
    pub r1_sup: f64,
    pub r2_sup: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Ell1Probe {
    pub p: f64,
    pub points: Vec<ProbePoint>,
    pub r1_nondecreasing: bool,
    /// `(max − min) / min` of the `r = 2` arm.
    pub r2_spread: f64,
    pub r2_flat: bool,
}

/// Maximal-norm ratios with `r = 1` and `r = 2` as `|Σ|` grows.
pub fn ell1_probe(
    builder: &FamilyBuilder,
    omega: &MeasureSpace,
    ensemble_cfg: &EnsembleConfig,
    sigma_dims: &[usize],
    p: f64,
    exec: Execution,
) -> Result<Ell1Probe> {
    let mut points = Vec::with_capacity(sigma_dims.len());
    for &d in sigma_dims {
        let sigma = MeasureSpace::counting(d);
        let members = ensemble::build(ensemble_cfg, omega.len(), d, exec);
        let pairs = exec.try_map(members.len(), |i| -> Result<(f64, f64)> {
            let f = &members[i].values;
            let fam = LatticeFamily::from_matrices(
                builder.grid().to_vec(),
                omega.clone(),
                sigma.clone(),
                builder.evaluate(f),
            )?;
            let sup = fam.pointwise_maximal();
            let arm = |r: f64| -> Result<f64> {
                let den = mixed_norm_values(omega, &sigma, f, p, r)?;
                let num = mixed_norm_values(omega, &sigma, &sup, p, r)?;
                Ok(if den > 0.0 { num / den } else { 0.0 })
            };
            Ok((arm(1.0)?, arm(2.0)?))
        })?;
        points.push(ProbePoint {
            sigma_dim: d,
            r1_sup: pairs.iter().map(|x| x.0).fold(f64::NEG_INFINITY, f64::max),
            r2_sup: pairs.iter().map(|x| x.1).fold(f64::NEG_INFINITY, f64::max),
        });
    }
    let r1_nondecreasing = points.windows(2).all(|w| w[1].r1_sup >= w[0].r1_sup);
    let lo = points.iter().map(|x| x.r2_sup).fold(f64::INFINITY, f64::min);
    let hi = points.iter().map(|x| x.r2_sup).fold(f64::NEG_INFINITY, f64::max);
    let r2_spread = if lo > 0.0 { (hi - lo) / lo } else { 0.0 };
    Ok(Ell1Probe {
        p,
        points,
        r1_nondecreasing,
        r2_spread,
        r2_flat: r2_spread <= FLAT_SPREAD,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WeightedRun {
    /// Exponent of a power weight, if the weight is one.
    pub alpha: Option<f64>,
    pub characteristic: ApCharacteristic,
    pub estimate: ConstantEstimate,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WeightedProbe {
    pub runs: Vec<WeightedRun>,
    /// Whether `sup_ratio` is nondecreasing when the runs are ordered by characteristic.
    pub sup_follows_characteristic: bool,
}

/// `‖(A_n f)_n‖_{L^p(w; v_q)} / ‖f‖_{L^p(w)}` on `ℤ_N` for each weight.
pub fn weighted_probe(
    builder: &FamilyBuilder,
    weights: &[(Option<f64>, Weight)],
    ensemble_cfg: &EnsembleConfig,
    measure: &Measure<'_>,
    max_len: usize,
    exec: Execution,
) -> Result<WeightedProbe> {
    let mut runs = Vec::with_capacity(weights.len());
    for (alpha, w) in weights {
        let omega = MeasureSpace::from_weights(w.values().to_vec())?;
        let members = ensemble::build(ensemble_cfg, omega.len(), measure.sigma.len(), exec);
        let m = Measure {
            omega: &omega,
            ..measure.clone()
        };
        let estimate = estimate_family(builder, &members, &m, exec)?;
        let characteristic = ap_characteristic(w, measure.p, max_len, exec)?;
        runs.push(WeightedRun {
            alpha: *alpha,
            characteristic,
            estimate,
        });
    }
    let mut order: Vec<&WeightedRun> = runs.iter().collect();
    order.sort_by(|a, b| a.characteristic.value.total_cmp(&b.characteristic.value));
    let sup_follows_characteristic = order
        .windows(2)
        .all(|w| w[1].estimate.sup_ratio >= w[0].estimate.sup_ratio);
    Ok(WeightedProbe {
        runs,
        sup_follows_characteristic,
    })
}
