//! Light shifts of the cooling transition, resolved per level or per Zeeman
//! sublevel, with the 1527-nm compensation condition and synthetic
//! fluorescence spectra built on them.
//!
//! Energies are in joules internally; the `*_hz`/`*_mhz` helpers divide by
//! Planck's constant.

mod shifts;
mod spectrum;
mod sublevel;

pub use shifts::{
    compensation_template, differential_shift, level_shift, solve_compensation, solve_compensation_with,
    LevelShiftResult, ShiftMap,
};
pub use spectrum::{
    ensemble_mean_shift, sample_boltzmann, synthesize_spectrum, EnsembleSample, SampleRegion, ShiftSpectrum,
    SpectrumMeta, SpectrumOptions,
};
pub use sublevel::{sublevel_shifts, write_sublevel_csv, SublevelOperator};
