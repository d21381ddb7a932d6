use serde::Serialize;

use datapricer_core::Error as CoreError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum ErrorKind {
    Verification,
    Input,
    Numeric,
}

impl ErrorKind {
    pub fn exit_code(self) -> i32 {
        match self {
            ErrorKind::Verification => 1,
            ErrorKind::Input => 2,
            ErrorKind::Numeric => 3,
        }
    }
}

#[derive(Debug, Clone, thiserror::Error, Serialize)]
#[error("{}{message}", stage.as_ref().map(|s| format!("[{s}] ")).unwrap_or_default())]
pub struct CliError {
    pub kind: ErrorKind,
    pub stage: Option<String>,
    pub message: String,
}

pub type CliResult<T> = std::result::Result<T, CliError>;

impl CliError {
    pub fn input(message: impl Into<String>) -> Self {
        Self { kind: ErrorKind::Input, stage: None, message: message.into() }
    }

    pub fn verification(message: impl Into<String>) -> Self {
        Self { kind: ErrorKind::Verification, stage: None, message: message.into() }
    }

    pub fn at(mut self, stage: impl Into<String>) -> Self {
        if self.stage.is_none() {
            self.stage = Some(stage.into());
        }
        self
    }

    pub fn exit_code(&self) -> i32 {
        self.kind.exit_code()
    }

    /// `{"error": {...}}` as written to standard error.
    pub fn to_json(&self) -> String {
        serde_json::json!({ "error": self }).to_string()
    }
}

impl From<CoreError> for CliError {
    fn from(e: CoreError) -> Self {
        let kind = if e.is_numeric() { ErrorKind::Numeric } else { ErrorKind::Input };
        Self { kind, stage: None, message: e.to_string() }
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        Self::input(e.to_string())
    }
}
