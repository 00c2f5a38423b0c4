use std::fmt;

use serde_json::{json, Value};

/// A stage failure, printed as one JSON line on stderr.
#[derive(Debug)]
pub enum CliError {
    Config { key: Option<&'static str>, message: String },
    MissingInput { key: &'static str, path: String },
    MissingDependency { stage: &'static str, artifact: String, producer: &'static str },
    Invalid { stage: &'static str, message: String },
    Io { path: String, message: String },
}

impl CliError {
    pub fn invalid(stage: &'static str, e: impl fmt::Display) -> Self {
        CliError::Invalid {
            stage,
            message: e.to_string(),
        }
    }

    pub fn io(path: &std::path::Path, e: impl fmt::Display) -> Self {
        CliError::Io {
            path: path.display().to_string(),
            message: e.to_string(),
        }
    }

    pub fn to_value(&self) -> Value {
        match self {
            CliError::Config { key, message } => json!({"error": "config", "key": key, "message": message}),
            CliError::MissingInput { key, path } => json!({"error": "missing_input", "key": key, "path": path}),
            CliError::MissingDependency {
                stage,
                artifact,
                producer,
            } => json!({"error": "missing_dependency", "stage": stage, "artifact": artifact, "producer": producer}),
            CliError::Invalid { stage, message } => json!({"error": "invalid", "stage": stage, "message": message}),
            CliError::Io { path, message } => json!({"error": "io", "path": path, "message": message}),
        }
    }

    pub fn to_json(&self) -> String {
        self.to_value().to_string()
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.to_json())
    }
}

impl std::error::Error for CliError {}
