//! Averages, regular operators, matrix semigroups and the objects built on them.

pub mod averaging;
pub mod builtins;
pub mod discrete;
pub mod projection;
pub mod regular;
pub mod semigroup;

pub use averaging::{averaging_r_sampled, averaging_z, averaging_z_family, UniformSamples};
pub use discrete::{
    delta_power, ergodic_average_discrete, identity_residuals, square_function_discrete, DeltaSpec,
    DoublingPair, IdentityResiduals,
};
pub use projection::{mean_projection, Projection};
pub use regular::{analyticity_index, build_regular_operator, operator_norm, RegularOperator};
pub use semigroup::{ergodic_average_continuous, semigroup_eval, square_function_continuous, Generator};

use crate::lattice::MeasureSpace;

/// A discrete-time kernel or a continuous-time generator.
#[derive(Debug, Clone, PartialEq)]
pub enum Operator {
    Kernel(RegularOperator),
    Generator(Generator),
}

impl Operator {
    pub fn space(&self) -> &MeasureSpace {
        match self {
            Operator::Kernel(t) => t.space(),
            Operator::Generator(g) => g.space(),
        }
    }

    pub fn dim(&self) -> usize {
        self.space().len()
    }
}
