use std::path::Path;

use radgaze_core::gaze::GazeError;
use radgaze_core::model::ModelError;
use radgaze_core::train::TrainError;
use serde_json::json;

/// A failed command: exit code 2 for bad flags, configs or input schemas,
/// exit code 1 for failures while running.
#[derive(Debug)]
pub struct Failure {
    pub code: i32,
    pub kind: &'static str,
    pub message: String,
}

impl Failure {
    pub fn usage(message: String) -> Self {
        Failure {
            code: 2,
            kind: "usage",
            message,
        }
    }

    pub fn runtime(kind: &'static str, message: String) -> Self {
        Failure { code: 1, kind, message }
    }

    /// The single stderr line.
    pub fn to_json_line(&self) -> String {
        json!({"error": {"kind": self.kind, "code": self.code, "message": self.message}}).to_string()
    }
}

pub fn require_file(path: &Path) -> Result<(), Failure> {
    if path.is_file() {
        Ok(())
    } else {
        Err(Failure::usage(format!("{}: no such file", path.display())))
    }
}

impl From<GazeError> for Failure {
    fn from(e: GazeError) -> Self {
        let message = e.to_string();
        match e {
            GazeError::Record { .. } | GazeError::Invalid { .. } => Failure {
                code: 2,
                kind: "schema",
                message,
            },
            GazeError::Config(_) => Failure {
                code: 2,
                kind: "config",
                message,
            },
            GazeError::Io { .. } => Failure::runtime("io", message),
        }
    }
}

impl From<ModelError> for Failure {
    fn from(e: ModelError) -> Self {
        let message = e.to_string();
        match e {
            ModelError::Config(_) => Failure {
                code: 2,
                kind: "config",
                message,
            },
            ModelError::Input(_) | ModelError::Checkpoint(_) => Failure {
                code: 2,
                kind: "schema",
                message,
            },
            ModelError::Io { .. } => Failure::runtime("io", message),
            ModelError::Tensor(_) | ModelError::MissingParam(_) => Failure::runtime("internal", message),
        }
    }
}

impl From<TrainError> for Failure {
    fn from(e: TrainError) -> Self {
        match e {
            TrainError::Model(m) => m.into(),
            TrainError::Config(_) => Failure {
                code: 2,
                kind: "config",
                message: e.to_string(),
            },
            TrainError::Shape(_) | TrainError::EmptyDataset(_) => Failure {
                code: 2,
                kind: "schema",
                message: e.to_string(),
            },
            TrainError::Diverged { .. } => Failure::runtime("diverged", e.to_string()),
        }
    }
}

impl From<std::io::Error> for Failure {
    fn from(e: std::io::Error) -> Self {
        Failure::runtime("io", e.to_string())
    }
}
