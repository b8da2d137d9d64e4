//! Which family `(F_t f)_t` an experiment measures, and the operator
//! certificates that must hold before it is measured.

use std::sync::Arc;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Result, VarlabError};
use crate::lab::config::{ExperimentConfig, ExperimentKind};
use crate::operators::averaging::averaging_z_family;
use crate::operators::discrete::{ergodic_family, m_order_family};
use crate::operators::regular::{analyticity_index, build_regular_operator, AnalyticityProfile};
use crate::operators::{Generator, Operator, RegularOperator};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FamilyKind {
    /// `(A_n f)_{0 ≤ n ≤ N}` on the cyclic group.
    AveragesZ,
    /// `(M_n(T) f)_{0 ≤ n ≤ N}`.
    Ergodic,
    /// `(n^m Δ_n^m f)_{1 ≤ n ≤ N}`; `m = 0` gives the powers `T^n f`.
    Powers { m: usize },
    /// `(T_t f)` on the time grid.
    Semigroup,
}

impl FamilyKind {
    pub fn for_config(cfg: &ExperimentConfig, op: &Operator) -> Result<Self> {
        let kind = match cfg.kind {
            ExperimentKind::VariationalZ | ExperimentKind::WeightedVariational => FamilyKind::AveragesZ,
            ExperimentKind::VariationalErgodic => FamilyKind::Ergodic,
            ExperimentKind::VariationalSemigroupDiscrete => FamilyKind::Powers { m: cfg.params.m },
            ExperimentKind::VariationalSemigroupContinuous => FamilyKind::Semigroup,
            _ => match op {
                Operator::Kernel(t) if is_cyclic_shift(t) => FamilyKind::AveragesZ,
                Operator::Kernel(_) => FamilyKind::Ergodic,
                Operator::Generator(_) => FamilyKind::Semigroup,
            },
        };
        match (kind, op) {
            (FamilyKind::AveragesZ, Operator::Kernel(t)) if !is_cyclic_shift(t) => Err(VarlabError::Config(format!(
                "{} averages over ℤ_N and needs operator = \"shift(N)\"",
                cfg.kind.name()
            ))),
            (FamilyKind::AveragesZ | FamilyKind::Ergodic | FamilyKind::Powers { .. }, Operator::Generator(_)) => {
                Err(VarlabError::Config(format!("{} needs a kernel, not a generator", cfg.kind.name())))
            }
            (FamilyKind::Semigroup, Operator::Kernel(_)) => {
                Err(VarlabError::Config(format!("{} needs a generator, not a kernel", cfg.kind.name())))
            }
            _ => Ok(kind),
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            FamilyKind::AveragesZ => "averages_Z",
            FamilyKind::Ergodic => "ergodic_averages",
            FamilyKind::Powers { m: 0 } => "powers",
            FamilyKind::Powers { .. } => "m_order_differences",
            FamilyKind::Semigroup => "semigroup",
        }
    }
}

pub fn is_cyclic_shift(t: &RegularOperator) -> bool {
    let n = t.dim();
    t.space().weights().iter().all(|w| *w == 1.0)
        && t
            .kernel()
            .iter()
            .enumerate()
            .all(|(idx, v)| {
                let (i, j) = (idx % n, idx / n);
                *v == if j == (i + 1) % n { 1.0 } else { 0.0 }
            })
}

/// `t_min · (t_max/t_min)^{i/(P−1)}`, optionally with the geometric
/// midpoint of every consecutive pair inserted.
pub fn log_grid(t_min: f64, t_max: f64, points: usize, refine: bool) -> Vec<f64> {
    let (a, b) = (t_min.ln(), t_max.ln());
    let base: Vec<f64> = (0..points)
        .map(|i| {
            if i + 1 == points {
                t_max
            } else {
                (a + (b - a) * i as f64 / (points - 1) as f64).exp()
            }
        })
        .collect();
    if !refine {
        return base;
    }
    let mut out = Vec::with_capacity(2 * points - 1);
    for (i, t) in base.iter().enumerate() {
        out.push(*t);
        if let Some(next) = base.get(i + 1) {
            out.push((t * next).sqrt());
        }
    }
    out
}

/// Evaluates a family for one test function.
#[derive(Debug, Clone)]
pub struct FamilyBuilder {
    pub kind: FamilyKind,
    pub operator: Operator,
    pub n_max: usize,
    grid: Vec<f64>,
    semigroup: Vec<Arc<DMatrix<f64>>>,
}

impl FamilyBuilder {
    /// `times` is only used for [`FamilyKind::Semigroup`].
    pub fn new(kind: FamilyKind, operator: Operator, n_max: usize, times: Vec<f64>) -> Result<Self> {
        let (grid, semigroup) = match (&kind, &operator) {
            (FamilyKind::Semigroup, Operator::Generator(g)) => {
                let mats = times.iter().map(|&t| g.semigroup_matrix(t)).collect::<Result<Vec<_>>>()?;
                (times, mats)
            }
            (FamilyKind::Powers { .. }, _) => ((1..=n_max).map(|n| n as f64).collect(), Vec::new()),
            _ => ((0..=n_max).map(|n| n as f64).collect(), Vec::new()),
        };
        Ok(FamilyBuilder {
            kind,
            operator,
            n_max,
            grid,
            semigroup,
        })
    }

    pub fn from_config(cfg: &ExperimentConfig, operator: Operator) -> Result<Self> {
        let kind = FamilyKind::for_config(cfg, &operator)?;
        let g = &cfg.grid;
        Self::new(kind, operator, g.n_max, log_grid(g.t_min, g.t_max, g.t_points, g.refine))
    }

    pub fn grid(&self) -> &[f64] {
        &self.grid
    }

    pub fn evaluate(&self, f: &DMatrix<f64>) -> Vec<DMatrix<f64>> {
        match (&self.kind, &self.operator) {
            (FamilyKind::AveragesZ, _) => averaging_z_family(f, self.n_max),
            (FamilyKind::Ergodic, Operator::Kernel(t)) => ergodic_family(t.kernel(), f, self.n_max),
            (FamilyKind::Powers { m }, Operator::Kernel(t)) => m_order_family(t.kernel(), f, *m, self.n_max),
            (FamilyKind::Semigroup, Operator::Generator(_)) => {
                self.semigroup.iter().map(|e| e.as_ref() * f).collect()
            }
            _ => unreachable!("family kind and operator were matched at construction"),
        }
    }
}

/// Certificates checked before an experiment runs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CertificateSummary {
    /// Which operator was certified: the kernel itself or `e^{−A}`.
    pub subject: String,
    pub l1_contractive: bool,
    pub linf_contractive: bool,
    pub analyticity: Option<AnalyticityProfile>,
}

fn require_regular(t: &RegularOperator, subject: &str) -> Result<()> {
    let c = t.certificates();
    if !c.contractively_regular() {
        return Err(VarlabError::Certificate {
            name: "contractive regularity".into(),
            detail: format!(
                "{subject}: L1 contraction {}, L∞ contraction {}",
                c.l1_contractive, c.linf_contractive
            ),
        });
    }
    Ok(())
}

fn require_analytic(t: &RegularOperator, p: f64, n: usize, subject: &str) -> Result<AnalyticityProfile> {
    let profile = analyticity_index(t, p, n)?;
    if !profile.flat {
        return Err(VarlabError::Certificate {
            name: "analyticity".into(),
            detail: format!(
                "{subject}: n‖T^n − T^(n−1)‖ keeps growing up to n = {} (index {:.6e})",
                profile.n_used, profile.index
            ),
        });
    }
    Ok(profile)
}

/// `e^{−A}` as a kernel on the generator's space.
pub fn unit_time_kernel(g: &Generator) -> Result<RegularOperator> {
    build_regular_operator(g.exp_neg(1.0)?, g.space().clone())
}

/// Checks what the family needs: regularity for averages of `T`,
/// regularity and a flat analyticity trace for powers of `T` and for
/// semigroups (through `e^{−A}`).
pub fn certify(kind: FamilyKind, op: &Operator, p: f64, analyticity_n: usize) -> Result<Option<CertificateSummary>> {
    let summary = |subject: &str, t: &RegularOperator, analyticity| CertificateSummary {
        subject: subject.into(),
        l1_contractive: t.certificates().l1_contractive,
        linf_contractive: t.certificates().linf_contractive,
        analyticity,
    };
    match (kind, op) {
        (FamilyKind::AveragesZ, _) => Ok(None),
        (FamilyKind::Ergodic, Operator::Kernel(t)) => {
            require_regular(t, "T")?;
            Ok(Some(summary("T", t, None)))
        }
        (FamilyKind::Powers { .. }, Operator::Kernel(t)) => {
            require_regular(t, "T")?;
            let a = require_analytic(t, p, analyticity_n, "T")?;
            Ok(Some(summary("T", t, Some(a))))
        }
        (FamilyKind::Semigroup, Operator::Generator(g)) => {
            let t = unit_time_kernel(g)?;
            require_regular(&t, "e^(-A)")?;
            let a = require_analytic(&t, p, analyticity_n, "e^(-A)")?;
            Ok(Some(summary("e^(-A)", &t, Some(a))))
        }
        _ => Err(VarlabError::Config("family kind does not match the operator".into())),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::operators::builtins;

    #[test]
    fn shift_detection() {
        assert!(is_cyclic_shift(&builtins::shift(5)));
        assert!(!is_cyclic_shift(&builtins::lazy_walk(5)));
    }

    #[test]
    fn log_grid_endpoints_and_refinement() {
        let g = log_grid(1e-3, 1e2, 64, false);
        assert_eq!(g.len(), 64);
        assert!((g[0] - 1e-3).abs() < 1e-18);
        assert_eq!(*g.last().unwrap(), 1e2);
        let r = log_grid(1e-3, 1e2, 64, true);
        assert_eq!(r.len(), 127);
        assert!(r.windows(2).all(|w| w[1] > w[0]));
        assert_eq!(r[2], g[1]);
    }

    #[test]
    fn family_kinds_follow_operator() {
        let cfg = ExperimentConfig::new(ExperimentKind::Maximal, "shift(8)");
        let shift = Operator::Kernel(builtins::shift(8));
        assert_eq!(FamilyKind::for_config(&cfg, &shift).unwrap(), FamilyKind::AveragesZ);
        let lazy = Operator::Kernel(builtins::lazy_walk(8));
        assert_eq!(FamilyKind::for_config(&cfg, &lazy).unwrap(), FamilyKind::Ergodic);
        let zc = ExperimentConfig::new(ExperimentKind::VariationalZ, "lazy_walk(8)");
        assert!(FamilyKind::for_config(&zc, &lazy).is_err());
        let sc = ExperimentConfig::new(ExperimentKind::VariationalSemigroupContinuous, "lazy_walk(8)");
        assert!(FamilyKind::for_config(&sc, &lazy).is_err());
    }

    #[test]
    fn certificates() {
        let shift = Operator::Kernel(builtins::shift(8));
        assert!(certify(FamilyKind::Ergodic, &shift, 2.0, 32).unwrap().is_some());
        let err = certify(FamilyKind::Powers { m: 0 }, &shift, 2.0, 32).unwrap_err();
        assert!(matches!(err, VarlabError::Certificate { ref name, .. } if name == "analyticity"));
        let lazy = Operator::Kernel(builtins::lazy_walk(16));
        certify(FamilyKind::Powers { m: 1 }, &lazy, 2.0, 32).unwrap();
        let heat = Operator::Generator(builtins::cycle_laplacian(8));
        let s = certify(FamilyKind::Semigroup, &heat, 2.0, 32).unwrap().unwrap();
        assert_eq!(s.subject, "e^(-A)");
        let growing = Operator::Kernel(
            build_regular_operator(DMatrix::identity(3, 3) * 1.5, crate::lattice::MeasureSpace::counting(3)).unwrap(),
        );
        assert!(certify(FamilyKind::Ergodic, &growing, 2.0, 8).is_err());
    }

    #[test]
    fn semigroup_family_uses_grid() {
        let g = builtins::zero_generator(3);
        let b = FamilyBuilder::new(FamilyKind::Semigroup, Operator::Generator(g), 4, vec![0.5, 1.0, 2.0]).unwrap();
        let f = DMatrix::from_column_slice(3, 1, &[1.0, 2.0, 3.0]);
        let fam = b.evaluate(&f);
        assert_eq!(fam.len(), 3);
        assert!(fam.iter().all(|m| m == &f));
    }
}
