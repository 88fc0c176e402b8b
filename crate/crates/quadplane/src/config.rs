//! TOML configuration: the simulation setup plus the warm-start study.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;
use toml::{Table, Value};

use quadplane_core::actuation::{ActuatorConfig, ActuatorLimits};
use quadplane_core::controller::ControllerParams;
use quadplane_core::params::VehicleParams;
use quadplane_core::sim::{SimConfig, SimSetup};
use quadplane_core::study::StudyConfig;

/// The shipped default configuration.
pub const DEFAULT_TOML: &str = include_str!("../config/default.toml");

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Config {
    pub vehicle: VehicleParams,
    pub actuators: ActuatorConfig,
    pub actuator_limits: ActuatorLimits,
    pub controller: ControllerParams,
    pub sim: SimConfig,
    pub study: StudyConfig,
}

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot read config `{path}`: {source}")]
    Read {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("{origin}: {message}")]
    Parse { origin: String, message: String },
    #[error("override `{0}` is not of the form key.path=value")]
    OverrideSyntax(String),
    #[error("override `{key}`: `{segment}` is not a table")]
    OverridePath { key: String, segment: String },
    #[error(transparent)]
    Invalid(#[from] quadplane_core::Error),
}

impl Config {
    pub fn setup(&self) -> SimSetup {
        SimSetup {
            vehicle: self.vehicle.clone(),
            actuators: self.actuators.clone(),
            actuator_limits: self.actuator_limits,
            controller: self.controller.clone(),
            sim: self.sim,
        }
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        self.setup().validate()?;
        self.study.validate()?;
        Ok(())
    }

    /// Parses TOML text. `origin` names the source in diagnostics.
    pub fn parse(text: &str, origin: &str) -> Result<Self, ConfigError> {
        toml::from_str(text).map_err(|e| ConfigError::Parse {
            origin: origin.into(),
            message: e.to_string(),
        })
    }

    /// Reads `path` (or the built-in defaults when `None`) and applies the
    /// dotted overrides in order.
    pub fn load(path: Option<&Path>, overrides: &[String]) -> Result<Self, ConfigError> {
        let (text, origin) = match path {
            Some(p) => (
                fs::read_to_string(p).map_err(|source| ConfigError::Read {
                    path: p.to_path_buf(),
                    source,
                })?,
                p.display().to_string(),
            ),
            None => (DEFAULT_TOML.to_string(), "built-in defaults".to_string()),
        };
        // Parse once as typed config so that errors carry line numbers.
        let config = Self::parse(&text, &origin)?;
        if overrides.is_empty() {
            return Ok(config);
        }
        let mut table: Table = toml::from_str(&text).map_err(|e| ConfigError::Parse {
            origin: origin.clone(),
            message: e.to_string(),
        })?;
        for o in overrides {
            apply_override(&mut table, o)?;
        }
        Config::deserialize(Value::Table(table)).map_err(|e| ConfigError::Parse {
            origin: format!("{origin} with overrides"),
            message: e.to_string(),
        })
    }
}

/// Sets `a.b.c=value` in `table`. The value is read as a TOML value and
/// falls back to a plain string.
pub fn apply_override(table: &mut Table, spec: &str) -> Result<(), ConfigError> {
    let (key, raw) = spec
        .split_once('=')
        .ok_or_else(|| ConfigError::OverrideSyntax(spec.into()))?;
    let key = key.trim();
    let path: Vec<&str> = key.split('.').collect();
    if path.iter().any(|s| s.is_empty()) {
        return Err(ConfigError::OverrideSyntax(spec.into()));
    }
    let value = parse_value(raw.trim());
    let (last, parents) = path.split_last().expect("split yields at least one segment");
    let mut node = table;
    for seg in parents {
        let entry = node
            .entry(seg.to_string())
            .or_insert_with(|| Value::Table(Table::new()));
        node = match entry {
            Value::Table(t) => t,
            _ => {
                return Err(ConfigError::OverridePath {
                    key: key.into(),
                    segment: seg.to_string(),
                })
            }
        };
    }
    node.insert(last.to_string(), value);
    Ok(())
}

fn parse_value(raw: &str) -> Value {
    match toml::from_str::<Table>(&format!("v = {raw}")) {
        Ok(mut t) => t.remove("v").unwrap_or_else(|| Value::String(raw.into())),
        Err(_) => Value::String(raw.into()),
    }
}
