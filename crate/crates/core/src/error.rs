use thiserror::Error;

/// Errors raised anywhere in the simulation, DSP, metric or model layers.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("empty signal")]
    EmptySignal,

    #[error("polarization tributaries differ in length ({x} vs {y})")]
    LengthMismatch { x: usize, y: usize },

    #[error("PSD resolution {resolution} Hz needs {needed} samples but only {available} are available")]
    ResolutionTooFine { resolution: f64, needed: usize, available: usize },

    #[error("composite bandwidth {occupied} Hz exceeds the sample rate {sample_rate} Hz")]
    Aliasing { occupied: f64, sample_rate: f64 },

    #[error("bit count {bits} is not a multiple of {per_symbol} bits per symbol")]
    IndivisibleBits { bits: usize, per_symbol: usize },

    #[error("Zadoff-Chu root {root} is not coprime with length {length}")]
    NotCoprime { root: u64, length: usize },

    #[error("passbands overlap: [{a_lo}, {a_hi}] and [{b_lo}, {b_hi}]")]
    OverlappingPassbands { a_lo: f64, a_hi: f64, b_lo: f64, b_hi: f64 },

    #[error("no fresh copy supplied for interferer slot {0}")]
    MissingFreshChannel(i32),

    #[error("split-step integration failed in span {span} at z = {z} m: {reason}")]
    Integration { span: usize, z: f64, reason: String },

    #[error("equalizer estimate is singular at bin {bin}")]
    SingularBin { bin: usize },

    #[error("equalizer grid incompatible: {0}")]
    IncompatibleGrid(String),

    #[error("symbol alignment failed: {0}")]
    AlignmentFailed(String),

    #[error("no stored equalizer coefficients for seed {seed}, span count {spans}")]
    MissingCoefficients { seed: u64, spans: usize },

    #[error("coefficient file is malformed: {0}")]
    CorruptCoefficients(String),

    #[error("frame contains no noise; the monitor signal is undefined")]
    ZeroNoise,

    #[error("frame too short: {0}")]
    FrameTooShort(String),

    #[error("reports cannot be averaged: {0}")]
    MixedReports(String),

    #[error("quadrature grid too coarse: refinement changed the result by {change:.3}%")]
    GridTooCoarse { change: f64 },

    #[error("unsupported configuration: {0}")]
    Unsupported(String),

    #[error("configuration error: {0}")]
    Config(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

impl Error {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidArgument(msg.into())
    }
}
