//! Thermal toric-code memory with long-range repulsive anyon interactions.
//!
//! Plaquette-sector stochastic dynamics, matching readout, equilibrium
//! statistics and closed-form lifetime predictions.

// `!(x > 0.0)` style guards are deliberate: they also reject NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod analytics;
pub mod bath;
pub mod cavity;
pub mod decoder;
pub mod dynamics;
pub mod energy;
pub mod equilibrium;
pub mod error;
pub mod experiment;
pub mod lattice;
pub mod scalar;

pub use bath::BathSpec;
pub use energy::{ErrorPattern, Hamiltonian, InteractionSpec};
pub use error::{Error, Result};
pub use lattice::Lattice;
pub use scalar::Scalar;

pub type Interaction = InteractionSpec<f64>;
pub type Interaction32 = InteractionSpec<f32>;
pub type Bath = BathSpec<f64>;
pub type Bath32 = BathSpec<f32>;
