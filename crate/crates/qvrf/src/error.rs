use thiserror::Error;

/// Crate-wide error type.
#[derive(Debug, Error)]
pub enum Error {
    #[error("regulator a = {0} is out of range [{min}, {max}] or not finite", min = crate::entropy::A_MIN, max = crate::entropy::A_MAX)]
    InvalidRegulator(f64),

    #[error("invalid Gaussian parameters mu = {mu}, sigma = {sigma}")]
    InvalidGaussian { mu: f64, sigma: f64 },

    #[error("coefficient {0} cannot be quantized at this regulator (symbol overflow)")]
    CoefficientOverflow(f64),

    #[error("symbol window of {requested} symbols exceeds the limit of {limit}")]
    WindowTooWide { requested: usize, limit: usize },

    #[error("bitstream ended before the decoder was done")]
    StreamExhausted,

    #[error("bad magic bytes at the start of the container")]
    BadMagic,

    #[error("unsupported container version {0}")]
    BadVersion(u8),

    #[error("corrupt header: {0}")]
    CorruptHeader(&'static str),

    #[error("invalid image: {0}")]
    BadImage(String),

    #[error("unsupported block size {0} (expected 4, 8 or 16)")]
    BadBlockSize(usize),

    #[error("image dimensions differ: {0}x{1} vs {2}x{3}")]
    DimensionMismatch(usize, usize, usize, usize),

    #[error("image too small for a 5-scale similarity measure: min dimension {0} < 176")]
    TooSmallForMsSsim(usize),

    #[error("rate-distortion curve needs at least 4 points, got {0}")]
    CurveTooShort(usize),

    #[error("rate-distortion curve must have strictly increasing {0}")]
    CurveNotMonotone(&'static str),

    #[error("rate-distortion curves share no quality range")]
    NoQualityOverlap,

    #[error("polynomial fit is ill-conditioned (pivot {0:e})")]
    IllConditionedFit(f64),

    #[error("line fit is singular: all regulator values are equal")]
    SingularFit,

    #[error("lambda set must be positive and strictly increasing")]
    BadLambdaSet,

    #[error("regulator vector must be strictly increasing and within bounds")]
    BadRegulatorVector,

    #[error("optimized regulators are not monotone in lambda; cost surface anomaly")]
    NonMonotoneRegulators,

    #[error("empty calibration or input set")]
    EmptyInput,

    #[error("cannot parse {what}: {detail}")]
    Parse { what: &'static str, detail: String },

    #[error("{image} at a = {a}: {source}")]
    SweepItem {
        image: String,
        a: f64,
        #[source]
        source: Box<Error>,
    },

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
