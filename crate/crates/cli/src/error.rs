use std::fmt;
use std::path::Path;

use serde::Serialize;

/// Failure reported on stderr as one JSON object.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CliError {
    pub kind: &'static str,
    pub message: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub path: Option<String>,
}

impl CliError {
    pub fn config(message: impl Into<String>) -> Self {
        Self {
            kind: "config",
            message: message.into(),
            path: None,
        }
    }

    pub fn io(path: &Path, err: std::io::Error) -> Self {
        Self {
            kind: "io",
            message: err.to_string(),
            path: Some(path.display().to_string()),
        }
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(self).unwrap_or_else(|_| format!("{{\"kind\":\"{}\"}}", self.kind))
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match &self.path {
            Some(p) => write!(f, "{}: {} ({p})", self.kind, self.message),
            None => write!(f, "{}: {}", self.kind, self.message),
        }
    }
}

impl std::error::Error for CliError {}

impl From<rclqr_core::Error> for CliError {
    fn from(e: rclqr_core::Error) -> Self {
        use rclqr_core::Error as E;
        let kind = match e {
            E::Stability { .. } => "stability",
            E::Stabilizability { .. } => "stabilizability",
            E::Divergence { .. } => "divergence",
            E::Numerical { .. } => "numerical",
            E::Dimension { .. } => "dimension",
            E::InvalidArgument(_) => "invalid-argument",
            E::BatchFailure { .. } => "batch-failure",
            E::StepRejected { .. } => "step-rejected",
            E::Initialization { .. } => "initialization",
        };
        Self {
            kind,
            message: e.to_string(),
            path: None,
        }
    }
}
