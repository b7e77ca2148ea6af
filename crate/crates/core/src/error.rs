use thiserror::Error;

/// Errors raised across the tracking pipeline.
#[derive(Debug, Error)]
pub enum Error {
    #[error("non-positive depth {0}")]
    NonPositiveDepth(f64),

    #[error("non-positive predicted depth at point {point}, frame {frame}")]
    NonPositivePrediction { point: usize, frame: usize },

    #[error("non-positive disparity {0}")]
    NonPositiveDisparity(f64),

    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),

    #[error("missing weight tensor `{0}`")]
    MissingWeight(String),

    #[error("weight tensor `{name}` has shape {found:?}, expected {expected:?}")]
    WeightShape {
        name: String,
        expected: Vec<usize>,
        found: Vec<usize>,
    },

    #[error("channel count {0} is not even")]
    OddChannelCount(usize),

    #[error("channel count {0} is not divisible by 4")]
    BadChannelCount(usize),

    #[error("video has {frames} frames, shorter than window size {window}")]
    VideoTooShort { frames: usize, window: usize },

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("window {0} needs the previous window's trajectories")]
    MissingPrevious(usize),

    #[error("empty window loss list")]
    EmptyList,

    #[error("perturbed coordinate sits within {residual:e} of an L1 kink (step {step:e})")]
    KinkProximity { residual: f64, step: f64 },

    #[error("no valid points to evaluate")]
    NoValidPoints,

    #[error("frame {frame} out of range (0..{len})")]
    FrameOutOfRange { frame: usize, len: usize },

    #[error("unknown box id `{0}`")]
    UnknownBox(String),

    #[error("sparse depth set is empty")]
    EmptySparseSet,

    #[error("frame {0} has no valid depth pixels")]
    NoValidDepth(usize),

    #[error("degenerate scene: {0}")]
    DegenerateSpec(String),

    #[error("corrupt container: {0}")]
    CorruptManifest(String),

    #[error("parse error at line {line}: {msg}")]
    Parse { line: usize, msg: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
