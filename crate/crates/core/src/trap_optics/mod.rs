//! Intracavity Gaussian modes, ring-cavity bookkeeping and the ground-state
//! dipole potential.
//!
//! The cavity axis is x and every mode is focused at the origin.

mod beam;
mod cavity;
mod potential;

pub use beam::{Propagation, ToneField};
pub use cavity::{
    backscatter_modulation, free_spectral_range, linewidth_from_finesse, CavityMode, CavityParams, LinewidthSource,
    ModePolarization, LINEWIDTH_CONSISTENCY_TOLERANCE,
};
pub use potential::{ground_potential, trap_shape, write_potential_grid, Gravity, GroundPotential, TrapShape};
