//! Empirical constants: the ensemble supremum of `‖family‖ / ‖f‖`.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Result, VarlabError};
use crate::exec::Execution;
use crate::lab::ensemble::Member;
use crate::lab::families::FamilyBuilder;
use crate::lattice::{mixed_norm_values, LatticeFamily, MeasureSpace};

/// Quantile levels reported for the ratio ensemble.
pub const QUANTILE_LEVELS: [f64; 7] = [0.0, 0.1, 0.25, 0.5, 0.75, 0.9, 1.0];

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Quantile {
    pub level: f64,
    pub value: f64,
}

/// Which member attained the supremum.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Argmax {
    pub seed: u64,
    pub member: usize,
    pub generator: String,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SweepPoint {
    pub q: f64,
    pub sup_ratio: f64,
}

/// Supremum on the base time grid against the bisected grid.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RefinementCheck {
    pub coarse_points: usize,
    pub refined_points: usize,
    pub coarse_sup: f64,
    pub refined_sup: f64,
    pub relative_increase: f64,
}

/// Empirical lower bound for the constant of one inequality.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConstantEstimate {
    pub family: String,
    pub p: f64,
    pub q: f64,
    pub r: f64,
    pub grid_len: usize,
    pub size: usize,
    pub sup_ratio: f64,
    pub argmax: Argmax,
    pub quantiles: Vec<Quantile>,
    /// `max` of the first `k` ratios, for `k = 1..=size`.
    pub stability_trace: Vec<f64>,
    pub last_quarter_increase: f64,
    pub saturated: bool,
    pub ratios: Vec<f64>,
    pub generators: Vec<String>,
    /// `‖sup_t |F_t f|‖ / ‖f‖` per member; empty for square functions.
    pub maximal_ratios: Vec<f64>,
    pub maximal_sup: f64,
    /// Members whose maximal ratio exceeds their variational ratio.
    pub domination_violations: usize,
    pub q_sweep: Vec<SweepPoint>,
    pub refinement: Option<RefinementCheck>,
}

/// Prefix maxima and the relative growth over the last quarter.
pub fn stability(ratios: &[f64]) -> (Vec<f64>, f64) {
    let mut trace = Vec::with_capacity(ratios.len());
    let mut best = f64::NEG_INFINITY;
    for r in ratios {
        best = best.max(*r);
        trace.push(best);
    }
    let n = trace.len();
    if n == 0 {
        return (trace, 0.0);
    }
    let start = trace[(3 * n).div_ceil(4) - 1];
    let end = trace[n - 1];
    let increase = if start > 0.0 {
        (end - start) / start
    } else if end > 0.0 {
        f64::INFINITY
    } else {
        0.0
    };
    (trace, increase)
}

/// Nearest-rank quantiles.
pub fn quantiles(ratios: &[f64]) -> Vec<Quantile> {
    let mut sorted = ratios.to_vec();
    sorted.sort_by(f64::total_cmp);
    QUANTILE_LEVELS
        .iter()
        .map(|&level| Quantile {
            level,
            value: sorted[((sorted.len() - 1) as f64 * level).round() as usize],
        })
        .collect()
}

fn ratio(num: f64, den: f64) -> f64 {
    if den > 0.0 {
        num / den
    } else {
        0.0
    }
}

/// Per-member ratios on one grid.
struct MemberRatios {
    variational: Vec<f64>,
    coarse: Option<f64>,
    maximal: f64,
}

/// Measurement settings shared by the estimators.
#[derive(Debug, Clone)]
pub struct Measure<'a> {
    pub omega: &'a MeasureSpace,
    pub sigma: &'a MeasureSpace,
    pub p: f64,
    pub q: f64,
    pub r: f64,
    pub q_sweep: &'a [f64],
    pub seed: u64,
    pub saturation: f64,
    /// Report the supremum over every other grid point as well (the grid
    /// must then be one bisection round of a coarse grid).
    pub coarse_check: bool,
}

#[allow(clippy::too_many_arguments)]
fn finish(
    family: &str,
    grid_len: usize,
    measure: &Measure<'_>,
    members: &[Member],
    ratios: Vec<f64>,
    maximal_ratios: Vec<f64>,
    q_sweep: Vec<SweepPoint>,
    refinement: Option<RefinementCheck>,
) -> Result<ConstantEstimate> {
    if ratios.is_empty() {
        return Err(VarlabError::invalid("ensemble is empty"));
    }
    let (stability_trace, last_quarter_increase) = stability(&ratios);
    let mut arg = 0;
    for (i, r) in ratios.iter().enumerate() {
        if *r > ratios[arg] {
            arg = i;
        }
    }
    let domination_violations = maximal_ratios.iter().zip(&ratios).filter(|(m, v)| m > v).count();
    Ok(ConstantEstimate {
        family: family.into(),
        p: measure.p,
        q: measure.q,
        r: measure.r,
        grid_len,
        size: ratios.len(),
        sup_ratio: ratios[arg],
        argmax: Argmax {
            seed: measure.seed,
            member: members[arg].index,
            generator: members[arg].generator.name().into(),
        },
        quantiles: quantiles(&ratios),
        saturated: last_quarter_increase < measure.saturation,
        last_quarter_increase,
        stability_trace,
        generators: members.iter().map(|m| m.generator.name().to_string()).collect(),
        maximal_sup: maximal_ratios.iter().copied().fold(f64::NEG_INFINITY, f64::max),
        maximal_ratios,
        domination_violations,
        ratios,
        q_sweep,
        refinement,
    })
}

/// `‖(F_t f)‖_{L^p(Ω; L^r(Σ; v_q))} / ‖f‖_{L^p(Ω; L^r(Σ))}` for every member.
pub fn estimate_family(
    builder: &FamilyBuilder,
    members: &[Member],
    measure: &Measure<'_>,
    exec: Execution,
) -> Result<ConstantEstimate> {
    let grid = builder.grid().to_vec();
    let qs: Vec<f64> = std::iter::once(measure.q).chain(measure.q_sweep.iter().copied()).collect();
    let per_member = exec.try_map(members.len(), |i| -> Result<MemberRatios> {
        let f = &members[i].values;
        let norm = mixed_norm_values(measure.omega, measure.sigma, f, measure.p, measure.r)?;
        let fam = LatticeFamily::from_matrices(
            grid.clone(),
            measure.omega.clone(),
            measure.sigma.clone(),
            builder.evaluate(f),
        )?;
        let variational = qs
            .iter()
            .map(|&q| {
                let v = fam.pointwise_variation(q)?;
                Ok(ratio(mixed_norm_values(measure.omega, measure.sigma, &v, measure.p, measure.r)?, norm))
            })
            .collect::<Result<Vec<_>>>()?;
        let coarse = if measure.coarse_check {
            let coarse_members: Vec<DMatrix<f64>> = fam.members().iter().step_by(2).cloned().collect();
            let coarse_grid: Vec<f64> = grid.iter().step_by(2).copied().collect();
            let cf = LatticeFamily::from_matrices(coarse_grid, measure.omega.clone(), measure.sigma.clone(), coarse_members)?;
            let v = cf.pointwise_variation(measure.q)?;
            Some(ratio(mixed_norm_values(measure.omega, measure.sigma, &v, measure.p, measure.r)?, norm))
        } else {
            None
        };
        let m = fam.pointwise_maximal();
        let maximal = ratio(mixed_norm_values(measure.omega, measure.sigma, &m, measure.p, measure.r)?, norm);
        Ok(MemberRatios {
            variational,
            coarse,
            maximal,
        })
    })?;
    let ratios: Vec<f64> = per_member.iter().map(|m| m.variational[0]).collect();
    let maximal: Vec<f64> = per_member.iter().map(|m| m.maximal).collect();
    let q_sweep = measure
        .q_sweep
        .iter()
        .enumerate()
        .map(|(k, &q)| SweepPoint {
            q,
            sup_ratio: per_member.iter().map(|m| m.variational[k + 1]).fold(f64::NEG_INFINITY, f64::max),
        })
        .collect();
    let refinement = if measure.coarse_check {
        let coarse_sup = per_member.iter().filter_map(|m| m.coarse).fold(f64::NEG_INFINITY, f64::max);
        let refined_sup = ratios.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        Some(RefinementCheck {
            coarse_points: grid.len().div_ceil(2),
            refined_points: grid.len(),
            coarse_sup,
            refined_sup,
            relative_increase: ratio(refined_sup - coarse_sup, coarse_sup),
        })
    } else {
        None
    };
    finish(builder.kind.name(), grid.len(), measure, members, ratios, maximal, q_sweep, refinement)
}

/// Ensemble supremum of `‖S f‖ / ‖f‖` for precomputed square functions `S f`.
pub fn estimate_from_values(
    family: &str,
    grid_len: usize,
    members: &[Member],
    values: &[DMatrix<f64>],
    measure: &Measure<'_>,
) -> Result<ConstantEstimate> {
    let ratios = members
        .iter()
        .zip(values)
        .map(|(m, s)| {
            let norm = mixed_norm_values(measure.omega, measure.sigma, &m.values, measure.p, measure.r)?;
            Ok(ratio(mixed_norm_values(measure.omega, measure.sigma, s, measure.p, measure.r)?, norm))
        })
        .collect::<Result<Vec<_>>>()?;
    finish(family, grid_len, measure, members, ratios, Vec::new(), Vec::new(), None)
}
