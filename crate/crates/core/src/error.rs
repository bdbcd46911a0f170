use std::fmt;

/// Crate-wide error type.
#[derive(Debug)]
pub enum Error {
    /// A residue is not a member of the order-q subgroup.
    NotInSubgroup { residue: u64 },
    /// No prime of the form k*q + 1 was found within the search bound.
    ParamSearchExhausted { q: u64 },
    /// More keys requested at setup than distinct tags exist (limit is q).
    TooManyKeys { requested: usize, q: u64 },
    /// Every tag value has already been issued; no further key can be added.
    KeySpaceExhausted { q: u64 },
    /// Class count does not fit the group order (need 2 <= classes <= q).
    TooManyClasses { classes: usize, q: u64 },
    /// Label index is outside 0..classes.
    LabelOutOfRange { label: usize, classes: usize },
    /// A label vector does not have the expected length.
    BadLength { expected: usize, actual: usize },
    /// A feature vector does not match the model or dataset dimension.
    DimensionMismatch { expected: usize, actual: usize },
    /// Random draws kept colliding; could not produce per-key-distinct
    /// decryptions for a verification record.
    DegenerateFake,
    /// A record index does not exist in the arbitration context.
    UnknownRecord { index: usize },
    /// Dataset has no rows.
    EmptyDataset,
    /// Caller passed a structurally invalid argument.
    InvalidArgument(String),
    Io(std::io::Error),
    /// File contents could not be parsed or failed validation on load.
    Format(String),
}

pub type Result<T> = std::result::Result<T, Error>;

impl fmt::Display for Error {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Error::NotInSubgroup { residue } => {
                write!(f, "residue {residue} is not in the order-q subgroup")
            }
            Error::ParamSearchExhausted { q } => {
                write!(f, "no prime k*{q}+1 found within the search bound")
            }
            Error::TooManyKeys { requested, q } => {
                write!(f, "{requested} keys requested but the group supports at most {q}")
            }
            Error::KeySpaceExhausted { q } => {
                write!(f, "all {q} key tags are already issued")
            }
            Error::TooManyClasses { classes, q } => {
                write!(f, "{classes} classes do not fit group order {q} (need 2 <= classes <= q)")
            }
            Error::LabelOutOfRange { label, classes } => {
                write!(f, "label {label} is outside 0..{classes}")
            }
            Error::BadLength { expected, actual } => {
                write!(f, "expected a vector of length {expected}, got {actual}")
            }
            Error::DimensionMismatch { expected, actual } => {
                write!(f, "expected dimension {expected}, got {actual}")
            }
            Error::DegenerateFake => {
                write!(f, "could not sample a record with per-key-distinct decryptions")
            }
            Error::UnknownRecord { index } => {
                write!(f, "no verification record at index {index}")
            }
            Error::EmptyDataset => write!(f, "dataset has no rows"),
            Error::InvalidArgument(msg) => write!(f, "{msg}"),
            Error::Io(e) => write!(f, "io error: {e}"),
            Error::Format(msg) => write!(f, "format error: {msg}"),
        }
    }
}

impl std::error::Error for Error {
    fn source(&self) -> Option<&(dyn std::error::Error + 'static)> {
        match self {
            Error::Io(e) => Some(e),
            _ => None,
        }
    }
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e)
    }
}

impl From<serde_json::Error> for Error {
    fn from(e: serde_json::Error) -> Self {
        Error::Format(e.to_string())
    }
}

impl From<csv::Error> for Error {
    fn from(e: csv::Error) -> Self {
        Error::Format(e.to_string())
    }
}
