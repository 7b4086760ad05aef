use std::fs;
use std::path::Path;

use thiserror::Error;

use super::Scenario;

#[derive(Debug, Error)]
pub enum ScenarioIoError {
    #[error("cannot access {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("invalid scenario file {path}: {message}")]
    Parse { path: String, message: String },
    #[error("cannot encode scenario: {0}")]
    Encode(#[from] toml::ser::Error),
}

pub fn write_scenario_string(s: &Scenario) -> Result<String, ScenarioIoError> {
    Ok(toml::to_string(s)?)
}

pub fn write_scenario(s: &Scenario, path: &Path) -> Result<(), ScenarioIoError> {
    let text = write_scenario_string(s)?;
    fs::write(path, text).map_err(|source| ScenarioIoError::Io {
        path: path.display().to_string(),
        source,
    })
}

/// Parses a scenario document. Unknown fields are rejected.
pub fn read_scenario_str(text: &str, origin: &str) -> Result<Scenario, ScenarioIoError> {
    toml::from_str(text).map_err(|e| ScenarioIoError::Parse {
        path: origin.to_string(),
        message: e.to_string(),
    })
}

pub fn read_scenario(path: &Path) -> Result<Scenario, ScenarioIoError> {
    let text = fs::read_to_string(path).map_err(|source| ScenarioIoError::Io {
        path: path.display().to_string(),
        source,
    })?;
    read_scenario_str(&text, &path.display().to_string())
}
