use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("empty grid")]
    EmptyGrid,

    #[error("invalid grid: {0}")]
    InvalidGrid(String),

    #[error("grid mismatch: maps are defined on different grids")]
    GridMismatch,

    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },

    #[error("line {line}: non-positive permeability")]
    NonPositivePermeability { line: usize },

    #[error("duplicate well id `{0}`")]
    DuplicateWell(String),

    #[error("saturation out of range: {s_w} not in [{lo}, {hi}]")]
    SaturationOutOfRange { s_w: f64, lo: f64, hi: f64 },

    #[error("zero total mobility")]
    ZeroTotalMobility,

    #[error("size mismatch: expected {expected} samples, found {actual}")]
    SizeMismatch { expected: usize, actual: usize },

    #[error("horizon outside volume z-range: z = {z} not in [0, {max}]")]
    HorizonOutOfRange { z: f64, max: usize },

    #[error("degenerate sample: {0}")]
    DegenerateSample(String),

    #[error("non-positive value {0} cannot be log-transformed")]
    NonPositive(f64),

    #[error("uncovered grid point {index}")]
    UncoveredGridPoint { index: usize },

    #[error("degenerate normalization")]
    DegenerateNormalization,

    #[error("constant synthetic tests")]
    ConstantSyntheticTests,

    #[error("too few wells: {found}, need at least {required}")]
    TooFewWells { found: usize, required: usize },

    #[error("zero variance: r2 undefined")]
    ZeroVariance,

    #[error("length mismatch: {0} vs {1}")]
    LengthMismatch(usize, usize),

    #[error("objective failed on every initial candidate (last error: {0})")]
    AllCandidatesFailed(String),

    #[error("cube out of volume")]
    CubeOutOfVolume,

    #[error("empty training set")]
    EmptyTrainingSet,

    #[error("numerical blow-up")]
    NumericalBlowUp,

    #[error("training diverged at epoch {0}")]
    Diverged(usize),

    #[error("zero denominator at indices {0:?}")]
    ZeroDenominator(Vec<usize>),

    #[error("no grid point admits a seismic cube")]
    NoExtractablePoints,

    #[error("empty results: nothing to report")]
    EmptyResults,

    #[error("invalid config: {0}")]
    InvalidConfig(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl Error {
    /// Stable machine-readable identifier for the error variant.
    pub fn kind(&self) -> &'static str {
        match self {
            Error::EmptyGrid => "empty_grid",
            Error::InvalidGrid(_) => "invalid_grid",
            Error::GridMismatch => "grid_mismatch",
            Error::Parse { .. } => "parse",
            Error::NonPositivePermeability { .. } => "non_positive_permeability",
            Error::DuplicateWell(_) => "duplicate_well",
            Error::SaturationOutOfRange { .. } => "saturation_out_of_range",
            Error::ZeroTotalMobility => "zero_total_mobility",
            Error::SizeMismatch { .. } => "size_mismatch",
            Error::HorizonOutOfRange { .. } => "horizon_out_of_range",
            Error::DegenerateSample(_) => "degenerate_sample",
            Error::NonPositive(_) => "non_positive",
            Error::UncoveredGridPoint { .. } => "uncovered_grid_point",
            Error::DegenerateNormalization => "degenerate_normalization",
            Error::ConstantSyntheticTests => "constant_synthetic_tests",
            Error::TooFewWells { .. } => "too_few_wells",
            Error::ZeroVariance => "zero_variance",
            Error::LengthMismatch(..) => "length_mismatch",
            Error::AllCandidatesFailed(_) => "all_candidates_failed",
            Error::CubeOutOfVolume => "cube_out_of_volume",
            Error::EmptyTrainingSet => "empty_training_set",
            Error::NumericalBlowUp => "numerical_blow_up",
            Error::Diverged(_) => "diverged",
            Error::ZeroDenominator(_) => "zero_denominator",
            Error::NoExtractablePoints => "no_extractable_points",
            Error::EmptyResults => "empty_results",
            Error::InvalidConfig(_) => "invalid_config",
            Error::Io(_) => "io",
            Error::Json(_) => "json",
            Error::Csv(_) => "csv",
        }
    }
}
