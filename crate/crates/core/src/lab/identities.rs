//! Seeded batches of the decomposition and doubling identities.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Result, VarlabError};
use crate::exec::Execution;
use crate::lab::config::EnsembleGenerator;
use crate::lab::ensemble::{draw, member_rng};
use crate::lattice::{LatticeFunction, MeasureSpace};
use crate::operators::discrete::{identity_residuals, DoublingPair};
use crate::operators::{build_regular_operator, Operator};

/// Residual threshold of an identity check.
pub const IDENTITY_TOLERANCE: f64 = 1e-10;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct IdentityInstance {
    pub n: usize,
    pub m: usize,
    /// Semigroup time, `None` for kernels.
    pub t: Option<f64>,
    pub decomposition_residual: f64,
    pub doubling_residual: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IdentityBatch {
    pub seed: u64,
    pub instances: Vec<IdentityInstance>,
    pub max_decomposition_residual: f64,
    pub max_doubling_residual: f64,
}

impl IdentityBatch {
    pub fn passes(&self, tol: f64) -> bool {
        self.max_decomposition_residual <= tol && self.max_doubling_residual <= tol
    }
}

/// `count` instances with `n ∈ [1, n_max]`, `m ∈ [0, m_max]` and a gaussian
/// `f`. Generators are checked through `T = e^{−tA}` with `t ∈ [0.05, 2]`.
pub fn identity_batch(
    op: &Operator,
    seed: u64,
    count: usize,
    n_max: usize,
    m_max: usize,
    exec: Execution,
) -> Result<IdentityBatch> {
    if n_max < 1 {
        return Err(VarlabError::invalid("identity batch needs n_max ≥ 1"));
    }
    let space = op.space().clone();
    let instances = exec.try_map(count, |i| -> Result<IdentityInstance> {
        let mut rng = member_rng(seed, i);
        let n = rng.random_range(1..=n_max);
        let m = rng.random_range(0..=m_max);
        let values = draw(EnsembleGenerator::Gaussian, space.len(), 1, &mut rng);
        let f = LatticeFunction::new(space.clone(), MeasureSpace::counting(1), values)?;
        let (res, t) = match op {
            Operator::Kernel(k) => (identity_residuals(k, &f, n, m, DoublingPair::Kernel)?, None),
            Operator::Generator(g) => {
                let t = rng.random_range(0.05..=2.0);
                let k = build_regular_operator(g.exp_neg(t)?, space.clone())?;
                (identity_residuals(&k, &f, n, m, DoublingPair::Semigroup { generator: g, t })?, Some(t))
            }
        };
        Ok(IdentityInstance {
            n,
            m,
            t,
            decomposition_residual: res.decomposition_residual,
            doubling_residual: res.doubling_residual,
        })
    })?;
    let max = |sel: fn(&IdentityInstance) -> f64| instances.iter().map(sel).fold(0.0, f64::max);
    Ok(IdentityBatch {
        seed,
        max_decomposition_residual: max(|x| x.decomposition_residual),
        max_doubling_residual: max(|x| x.doubling_residual),
        instances,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::operators::builtins;

    #[test]
    fn kernel_and_generator_batches_pass() {
        let k = Operator::Kernel(builtins::doubly_stochastic_random(8, 42));
        let b = identity_batch(&k, 1, 20, 10, 2, Execution::default()).unwrap();
        assert_eq!(b.instances.len(), 20);
        assert!(b.passes(IDENTITY_TOLERANCE), "{b:?}");
        let g = Operator::Generator(builtins::cycle_laplacian(8));
        let b = identity_batch(&g, 1, 20, 10, 2, Execution::default()).unwrap();
        assert!(b.passes(IDENTITY_TOLERANCE), "{b:?}");
        assert!(b.instances.iter().all(|x| x.t.is_some()));
    }
}
