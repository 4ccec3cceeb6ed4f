use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("no polarizability data for {level} at {wavelength_nm:.3} nm")]
    UnknownLevel { level: String, wavelength_nm: f64 },

    #[error("missing reduced matrix elements for {level}: {}", .missing.join(", "))]
    MissingMatrixElement { level: String, missing: Vec<String> },

    #[error("invalid level: {0}")]
    InvalidLevel(String),

    #[error("atomic data file: {0}")]
    AtomicData(String),

    #[error("potential does not trap: {0}")]
    NotTrapping(String),

    #[error("timestep {dt:.3e} s exceeds the maximum of {max:.3e} s")]
    TimestepTooLarge { dt: f64, max: f64 },

    #[error("sample is empty")]
    EmptySample,

    #[error("ensemble is empty")]
    EmptyEnsemble,

    #[error("dispersive detuning must be nonzero")]
    ZeroDetuning,

    #[error("dip at {shift:.1} Hz lies outside the scan range [{start:.1}, {end:.1}] Hz")]
    DipOutOfRange { shift: f64, start: f64, end: f64 },

    #[error("fit failed: {0}")]
    FitFailure(String),

    #[error("fit did not converge after {0} iterations")]
    NonConvergence(usize),

    #[error("need at least {need} points, got {got}")]
    TooFewPoints { need: usize, got: usize },

    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("{path}: {message}")]
    Parse { path: String, message: String },

    #[error("scenario validation failed:\n  {}", .0.join("\n  "))]
    Validation(Vec<String>),

    #[error("unknown parameter `{0}`")]
    UnknownParameter(String),

    #[error("missing artifact: {0}")]
    MissingArtifact(String),

    #[error("checksum mismatch for {0}")]
    ChecksumMismatch(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}
