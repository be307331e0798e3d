use std::path::PathBuf;

/// Errors produced anywhere in the depthsight pipeline.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("degenerate disparity: denominator {denominator:e} is too close to zero")]
    DegenerateDisparity { denominator: f64 },

    #[error("pixel ({u}, {v}) is outside the {width}x{height} image")]
    OutOfBounds {
        u: f64,
        v: f64,
        width: u32,
        height: u32,
    },

    #[error("non-positive depth {0}")]
    NonPositiveDepth(f64),

    #[error("invalid stereo rig: {0}")]
    InvalidRig(String),

    #[error("invalid depth value {value} at index {index}")]
    InvalidDepth { index: usize, value: f64 },

    #[error("dimension mismatch: expected {expected} values, got {actual}")]
    DimensionMismatch { expected: usize, actual: usize },

    #[error("invalid quantization range [{z_min}, {z_max}]")]
    InvalidQuantization { z_min: f64, z_max: f64 },

    #[error("pixel ({x}, {y}) has unequal channels")]
    ChannelMismatch { x: u32, y: u32 },

    #[error("box does not intersect the image")]
    BoxOutsideImage,

    #[error("malformed {format} data: {message}")]
    Format {
        format: &'static str,
        message: String,
    },

    #[error("unknown or unsupported format: {0}")]
    UnknownFormat(String),

    #[error("invalid scene: {0}")]
    InvalidScene(String),

    #[error("no primitive is in front of the camera")]
    EmptyScene,

    #[error("trajectory is empty")]
    EmptyTrajectory,

    #[error("depth map has no valid depth")]
    NoValidDepth,

    #[error("invalid detector parameters: {0}")]
    InvalidParams(String),

    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },

    #[error("line {line}: box has negative dimension")]
    NegativeDimension { line: usize },

    #[error("bounding box contains no valid depth")]
    NoDepthInBox,

    #[error("empty input: {0}")]
    EmptyInput(&'static str),

    #[error("{found} of {required} samples produced a detection at hover distance {hover_distance_mm} mm")]
    InsufficientDetections {
        hover_distance_mm: u32,
        found: usize,
        required: usize,
    },

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("{}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{}: {source}", path.display())]
    Json {
        path: PathBuf,
        #[source]
        source: serde_json::Error,
    },

    #[error("{}: {source}", path.display())]
    Image {
        path: PathBuf,
        #[source]
        source: image::ImageError,
    },

    #[error("internal invariant violated: {0}")]
    Invariant(String),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn json(path: impl Into<PathBuf>, source: serde_json::Error) -> Self {
        Error::Json {
            path: path.into(),
            source,
        }
    }

    /// Process exit code for this error: 1 configuration, 2 data, 3 internal invariant.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::InvalidRig(_)
            | Error::InvalidQuantization { .. }
            | Error::InvalidScene(_)
            | Error::InvalidParams(_)
            | Error::EmptyTrajectory
            | Error::Config(_)
            | Error::Json { .. }
            | Error::UnknownFormat(_) => 1,
            Error::Io { source, .. } if source.kind() == std::io::ErrorKind::NotFound => 1,
            Error::Invariant(_) => 3,
            _ => 2,
        }
    }
}
