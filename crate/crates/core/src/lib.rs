//! Simulation and analysis toolkit for continuous loading of laser-cooled
//! ⁸⁷Rb into a two-tone (1560 nm + 1527 nm) intracavity dipole trap.
//!
//! The crate is organised bottom-up:
//!
//! * [`atomic_data`]: constants and polarizabilities of the levels involved.
//! * [`trap_optics`]: Gaussian cavity modes and the ground-state potential.
//! * [`lightshift`]: light shifts of every level, including the
//!   compensation condition and synthetic shift spectra.
//! * [`dynamics`]: semiclassical Monte-Carlo loading engine.
//! * [`readout`]: dispersive cavity shifts and probe scans.
//! * [`analysis`]: time-of-flight and Lorentzian fits.
//! * [`app`]: scenario files and the output bundles built from them.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod analysis;
pub mod app;
pub mod atomic_data;
pub mod dynamics;
pub mod lightshift;
pub mod numeric;
pub mod readout;
pub mod trap_optics;

mod error;

pub use error::{Error, Result};
