use cxrtrees::Error;

pub type CliResult<T> = Result<T, CliError>;

/// A failure reported as one JSON line on stderr.
#[derive(Debug)]
pub struct CliError {
    pub kind: &'static str,
    pub message: String,
}

impl CliError {
    pub fn new(kind: &'static str, message: impl Into<String>) -> Self {
        CliError {
            kind,
            message: message.into(),
        }
    }

    pub fn config(message: impl Into<String>) -> Self {
        Self::new("invalid_config", message)
    }

    pub fn io(path: &std::path::Path, e: std::io::Error) -> Self {
        Self::new("io", format!("{}: {e}", path.display()))
    }

    pub fn line(&self) -> String {
        serde_json::json!({ "error": self.kind, "message": self.message }).to_string()
    }
}

impl From<Error> for CliError {
    fn from(e: Error) -> Self {
        let kind = match &e {
            Error::Io { .. } => "io",
            Error::Csv(_) => "csv",
            Error::MissingColumn(_) => "missing_column",
            Error::BadCell { .. } => "bad_cell",
            Error::InvalidConfig(_) => "invalid_config",
            Error::HierarchyCycle(_) => "hierarchy_cycle",
            Error::DanglingParent { .. } => "dangling_parent",
            Error::UnknownLabel(_) => "unknown_label",
            Error::BadMagic { .. } => "bad_magic",
            Error::Truncated(_) => "truncated",
            Error::Malformed(_) => "malformed",
            Error::NonFinite { .. } => "non_finite",
            Error::DimMismatch { .. } => "dim_mismatch",
            Error::LengthMismatch(_) => "length_mismatch",
            Error::Empty(_) => "empty",
            Error::DegenerateTruth { .. } => "degenerate_truth",
            Error::ClassifierMismatch(_) => "classifier_mismatch",
        };
        CliError::new(kind, e.to_string())
    }
}
