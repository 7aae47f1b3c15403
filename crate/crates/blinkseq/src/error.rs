use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("sequence length mismatch: {0} vs {1}")]
    LengthMismatch(usize, usize),
    #[error("invalid sequence length {0} (supported: 1..={max})", max = crate::seqcore::MAX_LEN)]
    InvalidLength(usize),
    #[error("invalid parameter: {0}")]
    InvalidParam(String),
    #[error("L = {len} exceeds the exhaustive enumeration cap {cap}")]
    OverCap { len: usize, cap: usize },
    #[error("receiver tick {0} precedes the first transmitter edge")]
    PreBirth(u64),
    #[error("parse error: {0}")]
    Parse(String),
}

pub type Result<T> = std::result::Result<T, Error>;
