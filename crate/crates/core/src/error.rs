use thiserror::Error;

/// Errors produced by the decomposition, interpolation and export routines.
#[derive(Debug, Error)]
pub enum Error {
    #[error("empty point cloud")]
    EmptyCloud,

    #[error("zero-extent axis {axis}")]
    ZeroExtentAxis { axis: usize },

    #[error("degenerate split: one side of x[{axis}] <= {threshold} is empty")]
    DegenerateSplit { axis: usize, threshold: f64 },

    #[error("zero-norm reference in sample {sample}")]
    ZeroNormReference { sample: usize },

    #[error("point cloud has no channel values")]
    MissingValues,

    #[error("point {id} lies outside the grid box")]
    OutsideBox { id: usize },

    #[error("point id {id} is not covered by the partition")]
    UncoveredPoint { id: usize },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),

    #[error("malformed file: {0}")]
    Format(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl Error {
    /// Stable machine-readable tag for the error variant.
    pub fn kind(&self) -> &'static str {
        match self {
            Error::EmptyCloud => "empty_cloud",
            Error::ZeroExtentAxis { .. } => "zero_extent_axis",
            Error::DegenerateSplit { .. } => "degenerate_split",
            Error::ZeroNormReference { .. } => "zero_norm_reference",
            Error::MissingValues => "missing_values",
            Error::OutsideBox { .. } => "outside_box",
            Error::UncoveredPoint { .. } => "uncovered_point",
            Error::InvalidArgument(_) => "invalid_argument",
            Error::ShapeMismatch(_) => "shape_mismatch",
            Error::Format(_) => "format",
            Error::Io(_) => "io",
            Error::Json(_) => "json",
            Error::Csv(_) => "csv",
        }
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
