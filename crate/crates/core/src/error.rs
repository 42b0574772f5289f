use alloc::string::String;
use core::fmt;

pub type Result<T, E = Error> = core::result::Result<T, E>;

#[derive(Debug, Clone, PartialEq)]
pub enum Error {
    /// Operand shapes are incompatible for the requested operation.
    Dimension(String),
    /// A value became NaN or infinite.
    Numeric(String),
    /// A precondition on the arguments was violated.
    Contract(String),
    /// The input data cannot support the requested fit (e.g. constant losses).
    Degenerate(String),
    /// A configuration value is out of range; carries the field name.
    Config { field: &'static str, reason: String },
}

impl fmt::Display for Error {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Error::Dimension(msg) => write!(f, "dimension error: {msg}"),
            Error::Numeric(msg) => write!(f, "numeric error: {msg}"),
            Error::Contract(msg) => write!(f, "contract violation: {msg}"),
            Error::Degenerate(msg) => write!(f, "degenerate data: {msg}"),
            Error::Config { field, reason } => write!(f, "invalid config field `{field}`: {reason}"),
        }
    }
}

impl core::error::Error for Error {}

macro_rules! contract {
    ($($arg:tt)*) => { $crate::error::Error::Contract(alloc::format!($($arg)*)) };
}
macro_rules! dim_err {
    ($($arg:tt)*) => { $crate::error::Error::Dimension(alloc::format!($($arg)*)) };
}
pub(crate) use contract;
pub(crate) use dim_err;
