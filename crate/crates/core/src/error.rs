use std::fmt;

use thiserror::Error;

/// One offending row found while validating tabular input.
#[derive(Debug, Clone, PartialEq)]
pub struct RowIssue {
    /// 1-based data row (header excluded).
    pub row: usize,
    pub message: String,
}

impl fmt::Display for RowIssue {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "row {} (line {}): {}", self.row, self.row + 1, self.message)
    }
}

fn summarize(issues: &[RowIssue]) -> String {
    const SHOWN: usize = 5;
    let mut out = issues
        .iter()
        .take(SHOWN)
        .map(ToString::to_string)
        .collect::<Vec<_>>()
        .join("; ");
    if issues.len() > SHOWN {
        out.push_str(&format!("; and {} more", issues.len() - SHOWN));
    }
    out
}

#[derive(Debug, Error)]
pub enum Error {
    #[error("domain error: {0}")]
    Domain(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("invalid schema: {0}")]
    Schema(String),

    #[error("missing required column `{0}`")]
    MissingColumn(String),

    #[error("invalid data: {}", summarize(.0))]
    InvalidRows(Vec<RowIssue>),

    #[error("unknown feature `{0}`")]
    UnknownFeature(String),

    #[error("insufficient data for {litmus}: {reason}")]
    Insufficient { litmus: String, reason: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    TomlDe(#[from] toml::de::Error),

    #[error(transparent)]
    TomlSer(#[from] toml::ser::Error),
}

impl Error {
    pub(crate) fn insufficient(litmus: &str, reason: impl Into<String>) -> Self {
        Error::Insufficient {
            litmus: litmus.to_string(),
            reason: reason.into(),
        }
    }

    /// True for errors caused by the input data rather than by the caller.
    pub fn is_data_error(&self) -> bool {
        matches!(
            self,
            Error::MissingColumn(_)
                | Error::InvalidRows(_)
                | Error::Schema(_)
                | Error::UnknownFeature(_)
                | Error::Csv(_)
                | Error::Domain(_)
        )
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
