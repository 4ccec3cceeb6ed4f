//! Fitting of emulated measurements: time-of-flight temperatures and
//! Lorentzian line shapes.

mod fit;
pub mod lm;
mod lorentzian;
mod tof;

pub use fit::{FitResult, FitWarning};
pub use lorentzian::{fit_lorentzian, fit_lorentzian_xy, lorentzian, MULTI_PEAK_THRESHOLD};
pub use tof::{fit_tof, fit_tof_axis, tof_expand, PhaseSpacePoint, TofSeries};
