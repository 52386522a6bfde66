use std::fmt;

use serde::Serialize;

use crate::error::Error;

/// Stable machine-readable error codes printed on stderr.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum ErrorCode {
    Usage,
    ConfigNotFound,
    ConfigInvalid,
    DatasetNotFound,
    ArtifactNotFound,
    IoError,
    MalformedCsv,
    UnknownLabelColumn,
    EmptyDataset,
    ClassTooSmall,
    InvalidParams,
    DimensionMismatch,
    LengthMismatch,
    VersionMismatch,
    CorruptPayload,
    TooManyFeatures,
    EmptyBackground,
    IndexOutOfRange,
    EmptyPrototypeSet,
    MTooLarge,
    EmptyTestSet,
    DegenerateClass,
    AllZeroDifferences,
    EmptyInput,
    UnknownInstanceId,
}

impl ErrorCode {
    pub fn as_str(self) -> String {
        serde_json::to_value(self)
            .ok()
            .and_then(|v| v.as_str().map(str::to_string))
            .unwrap_or_default()
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CliError {
    pub code: ErrorCode,
    pub message: String,
}

impl CliError {
    pub fn new(code: ErrorCode, message: impl Into<String>) -> Self {
        Self {
            code,
            message: message.into(),
        }
    }

    /// `{"error":{"code":...,"message":...}}`
    pub fn to_json(&self) -> String {
        serde_json::json!({
            "error": { "code": self.code, "message": self.message }
        })
        .to_string()
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}: {}", self.code.as_str(), self.message)
    }
}

impl std::error::Error for CliError {}

impl From<Error> for CliError {
    fn from(e: Error) -> Self {
        let code = match &e {
            Error::Io { .. } => ErrorCode::IoError,
            Error::MalformedCsv { .. } => ErrorCode::MalformedCsv,
            Error::UnknownLabelColumn(_) => ErrorCode::UnknownLabelColumn,
            Error::EmptyDataset(_) => ErrorCode::EmptyDataset,
            Error::ClassTooSmall { .. } => ErrorCode::ClassTooSmall,
            Error::InvalidParams(_) => ErrorCode::InvalidParams,
            Error::DimensionMismatch { .. } => ErrorCode::DimensionMismatch,
            Error::LengthMismatch { .. } => ErrorCode::LengthMismatch,
            Error::VersionMismatch { .. } => ErrorCode::VersionMismatch,
            Error::CorruptPayload(_) => ErrorCode::CorruptPayload,
            Error::TooManyFeatures { .. } => ErrorCode::TooManyFeatures,
            Error::EmptyBackground => ErrorCode::EmptyBackground,
            Error::IndexOutOfRange { .. } => ErrorCode::IndexOutOfRange,
            Error::EmptyPrototypeSet => ErrorCode::EmptyPrototypeSet,
            Error::MTooLarge { .. } => ErrorCode::MTooLarge,
            Error::EmptyTestSet => ErrorCode::EmptyTestSet,
            Error::DegenerateClass(_) => ErrorCode::DegenerateClass,
            Error::AllZeroDifferences => ErrorCode::AllZeroDifferences,
            Error::EmptyInput(_) => ErrorCode::EmptyInput,
            Error::UnknownInstanceId { .. } => ErrorCode::UnknownInstanceId,
        };
        Self::new(code, e.to_string())
    }
}

pub type CliResult<T> = std::result::Result<T, CliError>;
