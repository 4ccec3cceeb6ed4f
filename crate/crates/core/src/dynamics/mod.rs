//! Monte-Carlo loading of the intracavity trap from a neighbouring MOT.
//!
//! Macro-atoms are injected at the edge of the MOT and cooled by six beams
//! whose detuning is corrected by the local differential light shift.
//! Optical pumping moves them between the two ground manifolds. Dark (F=1) atoms
//! move conservatively in the dipole potential.

mod atom;
mod config;
mod engine;
mod force;
mod trace;

pub use atom::{inject, thermal_velocity, Atom};
pub use config::{
    CaptureRegion, CoolingConfig, InjectionGeometry, MolassesConfig, PowerSchedule, SimulationSpec, SourceConfig,
    SubDoppler,
};
pub use engine::{run_accumulation, run_molasses, run_ramp_protocol, Engine, MolassesOutcome};
pub use force::{max_timestep, pump, step, step_atom, ForceField, LightField, LocalDynamics};
pub use trace::{Counts, EnsembleTrace, TraceRow};
