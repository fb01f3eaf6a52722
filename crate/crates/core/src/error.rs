use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("kernel order {order} outside supported range [{min}, {max}]")]
    OrderOutOfRange { order: usize, min: usize, max: usize },

    #[error("order {0} must be even for this kernel")]
    OddOrder(usize),

    #[error("expected {expected} arguments, got {got}")]
    Arity { expected: usize, got: usize },

    #[error("binomial coefficient C({n}, {j}) undefined: j > n")]
    Binomial { n: u32, j: u32 },

    #[error("enumeration of {states} product states exceeds cap {cap}")]
    EnumerationCap { states: f64, cap: u64 },

    #[error("invalid distribution: {0}")]
    InvalidDistribution(String),

    #[error("sample too small: need at least {needed} observations, got {got}")]
    SampleTooSmall { needed: usize, got: usize },

    #[error("length mismatch: {0} vs {1}")]
    LengthMismatch(usize, usize),

    #[error("non-finite value at index {0}")]
    NonFinite(usize),

    #[error("degenerate input: {0}")]
    Degenerate(&'static str),

    #[error("{what}: algebraic route gave {fast}, pairwise route gave {slow}")]
    RouteMismatch { what: &'static str, fast: f64, slow: f64 },

    #[error("unknown identity `{0}`")]
    UnknownIdentity(String),

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("parse error: {0}")]
    Parse(String),
}
