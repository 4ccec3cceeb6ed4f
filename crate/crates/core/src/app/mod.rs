//! Scenario files, and the runs and sweeps that turn them into output
//! bundles.
//!
//! A bundle is a directory holding the serialized scenario, CSV outputs,
//! `results.json` and a `manifest.json` that lists every file with its
//! SHA-256. [`report`] refuses bundles whose files no longer match.

pub mod checks;
mod config;
mod report;
mod run;

pub use config::{
    AnalysisSection, Axis, CavitySection, CoolingSection, Direction, DynamicsSection, Geometry, GravitySection, Knot,
    LightshiftSection, ModeSection, MolassesSection, ReadoutSection, Scenario, ScenarioSection, SourceSection,
    SweepSection, ToneSection, TrapOpticsSection, BUNDLED, MAX_SEED, UNIT_SUFFIXES,
};
pub use report::{
    dynamic_checks, lightshift_checks, report, static_checks, LoadedBundle, Report, Table, MONOTONE_TOLERANCE,
    PLATEAU_MIN_LOADING_MS, SMOOTHING_WINDOW, TAIL_FRACTION, THRESHOLD_LIMIT, TRANSIT_LIMIT,
};
pub use run::{
    point_seed, run, sha256_hex, simulate, spread_powers, sweep, verify_bundle, Bundle, BundleKind, DynamicsResults,
    FileEntry, Manifest, RowSummary, RunResults, SimulationOutput, SpectrumSummary, StaticScalars, SweepResults,
    SweepRow, CRATE_VERSION, MANIFEST, SPECTRUM_POWERS,
};
