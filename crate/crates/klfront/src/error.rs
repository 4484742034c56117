use thiserror::Error;

/// Everything that can go wrong in this crate.
#[derive(Debug, Error)]
#[non_exhaustive]
pub enum Error {
    /// A dataset, table, or record list was empty where at least one element
    /// is required.
    #[error("empty input: {0}")]
    EmptyInput(&'static str),

    /// A reward value was NaN or infinite.
    #[error("non-finite reward in record {index} (channel {channel:?})")]
    NonFiniteReward { index: usize, channel: String },

    /// A record's channel set differs from the first record's.
    #[error(
        "inconsistent channels in record {index}: expected [{}], got [{}]",
        expected.join(", "),
        got.join(", ")
    )]
    InconsistentChannels {
        index: usize,
        expected: Vec<String>,
        got: Vec<String>,
    },

    /// A record carries a different prompt id than the group it sits in.
    #[error("mixed prompt ids in record {index}: expected {expected:?}, got {got:?}")]
    MixedPromptIds {
        index: usize,
        expected: String,
        got: String,
    },

    /// A reward channel name was requested that the model / samples lack.
    #[error("unknown channel {0:?}")]
    UnknownChannel(String),

    /// Tried to add a channel under a name that is already taken.
    #[error("channel {0:?} already exists")]
    DuplicateChannel(String),

    /// Two vectors that must be index-aligned have different lengths.
    #[error("dimension mismatch: {left} vs {right} ({context})")]
    DimensionMismatch {
        left: usize,
        right: usize,
        context: &'static str,
    },

    /// Best-of-n draw count outside its domain.
    #[error("invalid best-of-n count {0}: need n >= 1")]
    InvalidN(u64),

    /// An estimator was handed zero samples.
    #[error("empty samples")]
    EmptySamples,

    /// An operation needs more samples than were provided.
    #[error("insufficient samples: need at least {needed}, got {got}")]
    InsufficientSamples { needed: usize, got: usize },

    /// Frontier tables built on different lambda grids cannot be aggregated.
    #[error("lambda grids differ between frontier tables")]
    GridMismatch,

    /// A cluster assignment does not partition the model's outcomes.
    #[error("bad cluster partition: {0}")]
    BadPartition(String),

    /// A residual spec that is not mean-zero was used where an unbiased one
    /// is required.
    #[error("residual spec is biased: {0}")]
    BiasedSpec(&'static str),

    /// A line of serialized input failed to parse. Lines are 1-based.
    #[error("parse error at line {line}: {message}")]
    Parse { line: usize, message: String },

    /// A parsed record failed semantic validation. Lines are 1-based.
    #[error("validation error at line {line}: {message}")]
    Validation { line: usize, message: String },

    /// Checkpoint indices regressed within one algorithm's training log.
    #[error(
        "monotonicity error at line {line}: algorithm {algorithm:?} repeats or regresses \
         checkpoint {checkpoint}"
    )]
    Monotonicity {
        algorithm: String,
        checkpoint: u64,
        line: usize,
    },

    /// A discrete model violated its structural invariants.
    #[error("invalid model: {0}")]
    InvalidModel(String),

    /// Lambda must be finite and strictly positive.
    #[error("invalid lambda: {0} (must be finite and > 0)")]
    InvalidLambda(f64),

    /// A lambda grid violated its ordering/positivity invariants.
    #[error("invalid lambda grid: {0}")]
    InvalidGrid(String),

    /// Catch-all for scalar parameters outside their documented domain.
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
