//! Experiment engine: configs in, reports out.
//!
//! [`Lab::run`] validates a config, certifies the operator, draws the
//! seeded ensemble and dispatches on the experiment kind.

pub mod config;
pub mod convergence;
pub mod ensemble;
pub mod estimate;
pub mod families;
pub mod identities;
pub mod jumps;
pub mod probes;
pub mod report;

use std::collections::BTreeMap;

use nalgebra::DMatrix;

use crate::error::{Result, VarlabError};
use crate::exec::Execution;
use crate::lattice::{LatticeFunction, LatticeRegime, MeasureSpace};
use crate::operators::discrete::square_function_discrete;
use crate::operators::semigroup::square_function_continuous;
use crate::operators::Operator;
use crate::weights::Weight;

pub use config::{EnsembleGenerator, ExperimentConfig, ExperimentKind, WeightShape};
pub use estimate::{ConstantEstimate, Measure};
pub use families::{certify, CertificateSummary, FamilyBuilder, FamilyKind};
pub use report::{Details, Report, ReportRow};

use report::{certificate_rows, error_rows, estimate_rows};

/// Runs experiments with a fixed execution strategy.
#[derive(Debug, Clone, Copy, Default)]
pub struct Lab {
    pub execution: Execution,
}

/// Everything an estimate needs, resolved from a config.
struct Setup {
    builder: FamilyBuilder,
    omega: MeasureSpace,
    sigma: MeasureSpace,
    certificates: Option<CertificateSummary>,
}

impl Report {
    fn start(cfg: &ExperimentConfig, family: Option<&str>, certificates: Option<CertificateSummary>, details: Details) -> Self {
        let mut flags = Vec::new();
        if cfg.kind.needs_q_above_two() && cfg.params.q <= 2.0 {
            flags.push("q_override".to_string());
        }
        let mut rows = Vec::new();
        certificate_rows(&certificates, &mut rows);
        Report {
            kind: cfg.kind.name().into(),
            operator: cfg.operator.clone(),
            family: family.map(str::to_string),
            regime: LatticeRegime::for_exponent(cfg.params.r).tag().into(),
            seed: cfg.ensemble.seed,
            config: cfg.canonical(),
            flags,
            certificates,
            summary: BTreeMap::new(),
            details,
            rows,
        }
    }

    fn note_estimate(&mut self, e: &ConstantEstimate, saturation: f64) {
        if !e.saturated {
            self.flags.push("UNSATURATED".into());
        }
        if e.domination_violations > 0 {
            self.flags.push("maximal_exceeds_variational".into());
        }
        if let Some(r) = &e.refinement {
            if r.relative_increase > saturation {
                self.flags.push("grid_refinement_changes_estimate".into());
            }
            self.summary.insert("refinement_increase".into(), r.relative_increase);
        }
        self.summary.insert("sup_ratio".into(), e.sup_ratio);
        self.summary.insert("last_quarter_increase".into(), e.last_quarter_increase);
        if !e.maximal_ratios.is_empty() {
            self.summary.insert("maximal_sup".into(), e.maximal_sup);
            self.summary.insert("domination_violations".into(), e.domination_violations as f64);
        }
    }
}

fn stack_columns(members: &[ensemble::Member]) -> DMatrix<f64> {
    let rows = members.first().map_or(0, |m| m.values.nrows());
    let cols: Vec<_> = members.iter().flat_map(|m| m.values.column_iter().map(|c| c.into_owned())).collect();
    if cols.is_empty() {
        return DMatrix::zeros(rows, 0);
    }
    DMatrix::from_columns(&cols)
}

/// The weights a weighted run compares, on `{−N/2, …, N − 1 − N/2}`.
pub fn weights_for(cfg: &ExperimentConfig, n: usize) -> Result<Vec<(Option<f64>, Weight)>> {
    let offset = -((n / 2) as i64);
    let index = |j: usize| j as i64 + offset;
    match cfg.weight.shape {
        WeightShape::Constant => Ok(vec![(None, Weight::constant(offset, n, 1.0)?)]),
        WeightShape::Step => {
            let values = (0..n).map(|j| if index(j) < 0 { 1.0 } else { 2.0 }).collect();
            Ok(vec![(None, Weight::new(offset, values)?)])
        }
        WeightShape::Power => cfg
            .weight
            .alphas
            .iter()
            .map(|&a| {
                let values = (0..n).map(|j| (index(j).unsigned_abs().max(1) as f64).powf(a)).collect();
                Ok((Some(a), Weight::new(offset, values)?))
            })
            .collect(),
        WeightShape::File => {
            let w = Weight::try_from(cfg.read_weight_file()?)?;
            if w.len() != n {
                return Err(VarlabError::Config(format!(
                    "weight file has {} values but the operator acts on ℤ_{n}",
                    w.len()
                )));
            }
            Ok(vec![(None, w)])
        }
    }
}

impl Lab {
    pub fn new(execution: Execution) -> Self {
        Lab { execution }
    }

    /// Validates `cfg` and runs the experiment it names.
    pub fn run(&self, cfg: &ExperimentConfig) -> Result<Report> {
        cfg.validate()?;
        match cfg.kind {
            ExperimentKind::VariationalZ
            | ExperimentKind::VariationalErgodic
            | ExperimentKind::VariationalSemigroupContinuous
            | ExperimentKind::Maximal => self.estimate_variational_constant(cfg),
            ExperimentKind::VariationalSemigroupDiscrete => self.estimate_m_order_constant(cfg),
            ExperimentKind::SquareFunction => self.square_function(cfg),
            ExperimentKind::JumpProfile => self.jump_profile(cfg),
            ExperimentKind::Convergence => self.convergence_profile(cfg),
            ExperimentKind::WeightedVariational => self.weighted_variational_probe(cfg),
            ExperimentKind::Ell1Probe => self.ell1_probe(cfg),
        }
    }

    fn setup(&self, cfg: &ExperimentConfig, kind: Option<FamilyKind>) -> Result<Setup> {
        let op = cfg.resolve_operator()?;
        let kind = match kind {
            Some(k) => k,
            None => FamilyKind::for_config(cfg, &op)?,
        };
        let certificates = certify(kind, &op, cfg.params.p, cfg.grid.analyticity_n)?;
        let omega = op.space().clone();
        let g = &cfg.grid;
        let times = families::log_grid(g.t_min, g.t_max, g.t_points, g.refine);
        let builder = FamilyBuilder::new(kind, op, g.n_max, times)?;
        Ok(Setup {
            builder,
            omega,
            sigma: MeasureSpace::counting(cfg.space.sigma_dim),
            certificates,
        })
    }

    fn measure<'a>(cfg: &'a ExperimentConfig, s: &'a Setup) -> Measure<'a> {
        Measure {
            omega: &s.omega,
            sigma: &s.sigma,
            p: cfg.params.p,
            q: cfg.params.q,
            r: cfg.params.r,
            q_sweep: &cfg.params.q_sweep,
            seed: cfg.ensemble.seed,
            saturation: cfg.tolerances.saturation,
            coarse_check: cfg.grid.refine && s.builder.kind == FamilyKind::Semigroup,
        }
    }

    fn estimate_report(&self, cfg: &ExperimentConfig, kind: Option<FamilyKind>) -> Result<Report> {
        let s = self.setup(cfg, kind)?;
        let members = ensemble::build(&cfg.ensemble, s.omega.len(), s.sigma.len(), self.execution);
        let e = estimate::estimate_family(&s.builder, &members, &Self::measure(cfg, &s), self.execution)?;
        let mut report = Report::start(cfg, Some(s.builder.kind.name()), s.certificates, Details::Estimate(e.clone()));
        report.note_estimate(&e, cfg.tolerances.saturation);
        estimate_rows("estimate", &e, &mut report.rows);
        Ok(report)
    }

    /// Ensemble lower bound for the `q`-variational constant of the family
    /// the config names (also used for the maximal inequality).
    pub fn estimate_variational_constant(&self, cfg: &ExperimentConfig) -> Result<Report> {
        self.estimate_report(cfg, None)
    }

    /// Ensemble lower bound for the variation of `(n^m Δ_n^m f)_n`.
    pub fn estimate_m_order_constant(&self, cfg: &ExperimentConfig) -> Result<Report> {
        self.estimate_report(cfg, Some(FamilyKind::Powers { m: cfg.params.m }))
    }

    /// Ensemble lower bound for the square-function constant of order `m`.
    pub fn square_function(&self, cfg: &ExperimentConfig) -> Result<Report> {
        let op = cfg.resolve_operator()?;
        let (kind, family) = match op {
            Operator::Kernel(_) => (FamilyKind::Powers { m: cfg.params.m }, "square_function_discrete"),
            Operator::Generator(_) => (FamilyKind::Semigroup, "square_function_continuous"),
        };
        let certificates = certify(kind, &op, cfg.params.p, cfg.grid.analyticity_n)?;
        let omega = op.space().clone();
        let sigma = MeasureSpace::counting(cfg.space.sigma_dim);
        let members = ensemble::build(&cfg.ensemble, omega.len(), sigma.len(), self.execution);
        let (m, n_max, quad_tol, tail_limit) = (cfg.params.m, cfg.grid.n_max, cfg.tolerances.quad_tol, cfg.tolerances.tail_ratio);
        let per_member = self.execution.try_map(members.len(), |i| -> Result<(DMatrix<f64>, f64)> {
            let f = LatticeFunction::new(omega.clone(), sigma.clone(), members[i].values.clone())?;
            match &op {
                Operator::Kernel(t) => {
                    let s = square_function_discrete(t, &f, m, n_max)?;
                    if s.tail.tail_ratio > tail_limit {
                        return Err(VarlabError::Tail(format!(
                            "member {}: last term is {:.3e} of the sum at N = {n_max} (limit {tail_limit:e}); raise grid.n_max",
                            members[i].index, s.tail.tail_ratio
                        )));
                    }
                    Ok((s.values.into_values(), s.tail.tail_ratio))
                }
                Operator::Generator(g) => {
                    let s = square_function_continuous(g, &f, m, quad_tol)?;
                    Ok((s.values.into_values(), s.truncation_bound))
                }
            }
        })?;
        let (values, tails): (Vec<_>, Vec<_>) = per_member.into_iter().unzip();
        let measure = Measure {
            omega: &omega,
            sigma: &sigma,
            p: cfg.params.p,
            q: cfg.params.q,
            r: cfg.params.r,
            q_sweep: &[],
            seed: cfg.ensemble.seed,
            saturation: cfg.tolerances.saturation,
            coarse_check: false,
        };
        let grid_len = match op {
            Operator::Kernel(_) => n_max + 1,
            Operator::Generator(_) => 0,
        };
        let e = estimate::estimate_from_values(family, grid_len, &members, &values, &measure)?;
        let mut report = Report::start(cfg, Some(family), certificates, Details::Estimate(e.clone()));
        report.note_estimate(&e, cfg.tolerances.saturation);
        let worst_tail = tails.iter().copied().fold(0.0, f64::max);
        report.summary.insert("worst_tail".into(), worst_tail);
        if matches!(op, Operator::Generator(_)) && worst_tail > quad_tol {
            report.flags.push("truncation_above_tolerance".into());
        }
        estimate_rows("square_function", &e, &mut report.rows);
        for (i, t) in tails.iter().enumerate() {
            report.rows.push(ReportRow::new("square_function", "tail", *t).member(i));
        }
        Ok(report)
    }

    /// Jump counts against the bound implied by the estimated constant.
    pub fn jump_profile(&self, cfg: &ExperimentConfig) -> Result<Report> {
        let s = self.setup(cfg, None)?;
        let members = ensemble::build(&cfg.ensemble, s.omega.len(), s.sigma.len(), self.execution);
        let e = estimate::estimate_family(&s.builder, &members, &Self::measure(cfg, &s), self.execution)?;
        let profile = jumps::jump_profile(
            &s.builder,
            &members,
            &s.omega,
            &s.sigma,
            &e,
            &cfg.jump.lambdas,
            &cfg.jump.ks,
            cfg.jump.spot_checks,
            cfg.ensemble.seed,
            self.execution,
        )?;
        let mut report = Report::start(
            cfg,
            Some(s.builder.kind.name()),
            s.certificates,
            Details::Jump {
                estimate: e.clone(),
                profile: profile.clone(),
            },
        );
        report.note_estimate(&e, cfg.tolerances.saturation);
        report.summary.insert("kappa".into(), profile.kappa);
        report.summary.insert("max_tail_to_bound".into(), profile.max_tail_to_bound);
        estimate_rows("estimate", &e, &mut report.rows);
        for row in &profile.rows {
            report
                .rows
                .push(ReportRow::new("jump", "tail_mass", row.tail_mass).member(row.member).x1(row.lambda).x2(row.k as f64));
            report
                .rows
                .push(ReportRow::new("jump", "bound", row.bound).member(row.member).x1(row.lambda).x2(row.k as f64));
        }
        Ok(report)
    }

    /// Mean-ergodic convergence rates on the ensemble's test functions.
    pub fn convergence_profile(&self, cfg: &ExperimentConfig) -> Result<Report> {
        let op = cfg.resolve_operator()?;
        let members = ensemble::build(&cfg.ensemble, op.dim(), cfg.space.sigma_dim, self.execution);
        let f = stack_columns(&members);
        let profile = convergence::convergence_profile(&op, &f, &cfg.convergence, cfg.tolerances.quad_tol)?;
        let mut report = Report::start(cfg, None, None, Details::Convergence(profile.clone()));
        if profile.projection.approximate {
            report.flags.push("approximate_projection".into());
        }
        if profile.mean_slope_ok == Some(false) {
            report.flags.push("mean_slope_out_of_range".into());
        }
        if profile.exponent_ok == Some(false) {
            report.flags.push("exponent_out_of_range".into());
        }
        report.summary.insert("gap".into(), profile.gap);
        report.summary.insert("decay_rate".into(), profile.decay_rate);
        for (key, v) in [
            ("mean_slope", profile.mean_slope),
            ("power_exponent", profile.power_exponent),
            ("exponent_ratio", profile.exponent_ratio),
            ("small_t_slope", profile.small_t_slope),
        ] {
            if let Some(v) = v {
                report.summary.insert(key.into(), v);
            }
        }
        error_rows("mean_error", &profile.mean_errors, &mut report.rows);
        error_rows("power_error", &profile.power_errors, &mut report.rows);
        error_rows("small_t_error", &profile.small_t_errors, &mut report.rows);
        error_rows("small_t_mean_error", &profile.small_t_mean_errors, &mut report.rows);
        Ok(report)
    }

    /// Maximal-norm ratios with `r = 1` against `r = 2` as `|Σ|` grows.
    pub fn ell1_probe(&self, cfg: &ExperimentConfig) -> Result<Report> {
        let s = self.setup(cfg, None)?;
        let probe = probes::ell1_probe(
            &s.builder,
            &s.omega,
            &cfg.ensemble,
            &cfg.probe.sigma_dims,
            cfg.params.p,
            self.execution,
        )?;
        let mut report = Report::start(cfg, Some(s.builder.kind.name()), s.certificates, Details::Ell1Probe(probe.clone()));
        if !probe.r1_nondecreasing {
            report.flags.push("r1_not_monotone".into());
        }
        if !probe.r2_flat {
            report.flags.push("r2_not_flat".into());
        }
        report.summary.insert("r2_spread".into(), probe.r2_spread);
        for pt in &probe.points {
            report.rows.push(ReportRow::new("ell1_probe", "r1_sup", pt.r1_sup).x1(pt.sigma_dim as f64));
            report.rows.push(ReportRow::new("ell1_probe", "r2_sup", pt.r2_sup).x1(pt.sigma_dim as f64));
        }
        Ok(report)
    }

    /// Weighted variational ratios on `ℤ_N` for the configured weights.
    pub fn weighted_variational_probe(&self, cfg: &ExperimentConfig) -> Result<Report> {
        let s = self.setup(cfg, None)?;
        let weights = weights_for(cfg, s.omega.len())?;
        let probe = probes::weighted_probe(
            &s.builder,
            &weights,
            &cfg.ensemble,
            &Self::measure(cfg, &s),
            cfg.weight.max_len,
            self.execution,
        )?;
        let mut report = Report::start(cfg, Some(s.builder.kind.name()), s.certificates, Details::Weighted(probe.clone()));
        if probe.runs.len() > 1 && !probe.sup_follows_characteristic {
            report.flags.push("sup_not_monotone_in_characteristic".into());
        }
        if probe.runs.iter().any(|r| !r.estimate.saturated) {
            report.flags.push("UNSATURATED".into());
        }
        for (i, run) in probe.runs.iter().enumerate() {
            let x = run.alpha.unwrap_or(i as f64);
            report.rows.push(ReportRow::new("weighted", "characteristic", run.characteristic.value).x1(x));
            report.rows.push(ReportRow::new("weighted", "sup_ratio", run.estimate.sup_ratio).x1(x));
            for (m, r) in run.estimate.ratios.iter().enumerate() {
                report.rows.push(ReportRow::new("weighted", "ratio", *r).member(m).x1(x));
            }
        }
        if let Some(run) = probe.runs.first() {
            report.summary.insert("characteristic".into(), run.characteristic.value);
            report.summary.insert("sup_ratio".into(), run.estimate.sup_ratio);
        }
        Ok(report)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small(kind: ExperimentKind, op: &str) -> ExperimentConfig {
        let mut cfg = ExperimentConfig::new(kind, op);
        cfg.ensemble.count = 12;
        cfg.grid.n_max = 8;
        cfg.grid.t_points = 8;
        cfg
    }

    #[test]
    fn variational_z_report() {
        let report = Lab::default().run(&small(ExperimentKind::VariationalZ, "shift(32)")).unwrap();
        assert_eq!(report.family.as_deref(), Some("averages_Z"));
        assert_eq!(report.regime, "UMD regime");
        let Details::Estimate(e) = &report.details else { panic!() };
        assert_eq!(e.size, 12);
        assert_eq!(e.domination_violations, 0);
        assert!(e.sup_ratio >= 1.0);
        assert!(report.to_csv().lines().count() > 12);
    }

    #[test]
    fn sequential_and_parallel_agree() {
        let cfg = small(ExperimentKind::VariationalSemigroupContinuous, "cycle_laplacian(8)");
        let a = Lab::new(Execution::Sequential).run(&cfg).unwrap();
        let b = Lab::new(Execution::Parallel).run(&cfg).unwrap();
        assert_eq!(a.to_csv(), b.to_csv());
    }

    #[test]
    fn constant_weight_matches_unweighted() {
        let mut w = small(ExperimentKind::WeightedVariational, "shift(32)");
        w.weight.shape = WeightShape::Constant;
        let u = small(ExperimentKind::VariationalZ, "shift(32)");
        let lab = Lab::default();
        let Details::Weighted(probe) = lab.run(&w).unwrap().details else { panic!() };
        let Details::Estimate(e) = lab.run(&u).unwrap().details else { panic!() };
        assert_eq!(probe.runs[0].characteristic.value, 1.0);
        let a: Vec<u64> = probe.runs[0].estimate.ratios.iter().map(|x| x.to_bits()).collect();
        let b: Vec<u64> = e.ratios.iter().map(|x| x.to_bits()).collect();
        assert_eq!(a, b);
    }

    #[test]
    fn step_weight_characteristic() {
        let cfg = ExperimentConfig::new(ExperimentKind::WeightedVariational, "shift(16)");
        let mut cfg = cfg;
        cfg.weight.shape = WeightShape::Step;
        let w = weights_for(&cfg, 16).unwrap();
        assert_eq!(w[0].1.offset(), -8);
        assert_eq!(w[0].1.values()[7], 1.0);
        assert_eq!(w[0].1.values()[8], 2.0);
    }

    #[test]
    fn square_function_tail_error() {
        let mut cfg = small(ExperimentKind::SquareFunction, "lazy_walk(16)");
        cfg.grid.n_max = 4;
        let err = Lab::default().run(&cfg).unwrap_err();
        assert!(matches!(err, VarlabError::Tail(_)), "{err}");
        cfg.grid.n_max = 3000;
        let report = Lab::default().run(&cfg).unwrap();
        assert!(report.summary["sup_ratio"] > 0.0);
    }

    #[test]
    fn convergence_flags() {
        let mut cfg = small(ExperimentKind::Convergence, "lazy_walk(16)");
        cfg.ensemble.count = 4;
        let report = Lab::default().run(&cfg).unwrap();
        assert!(report.summary["gap"] > 0.0);
        assert!(!report.flags.contains(&"mean_slope_out_of_range".to_string()), "{:?}", report.flags);
    }
}
