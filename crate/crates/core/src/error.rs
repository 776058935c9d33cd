use alloc::string::String;

pub type Result<T, E = Error> = core::result::Result<T, E>;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum Error {
    /// An input violated an operation's precondition.
    #[error("rejected input: {0}")]
    Rejected(String),
    /// The objective family does not support the requested operation.
    #[error("unsupported operation: {0}")]
    Unsupported(String),
}

impl Error {
    pub fn rejected(msg: impl Into<String>) -> Self {
        Error::Rejected(msg.into())
    }

    pub fn unsupported(msg: impl Into<String>) -> Self {
        Error::Unsupported(msg.into())
    }
}

macro_rules! ensure {
    ($cond:expr, $($arg:tt)+) => {{
        // bound first so `x > 0.0`-style conditions also reject NaN
        let holds: bool = $cond;
        if !holds {
            return Err($crate::error::Error::Rejected(alloc::format!($($arg)+)));
        }
    }};
}
pub(crate) use ensure;
