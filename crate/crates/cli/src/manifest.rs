use std::fs;
use std::path::{Path, PathBuf};

use pt_orbits::dynamics::IntegrationControls;
use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};

/// Everything needed to reproduce one output file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub command: String,
    pub version: String,
    pub argv: Vec<String>,
    pub parameters: Map<String, Value>,
    pub controls: Option<ControlsRecord>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ControlsRecord {
    pub rel_tol: f64,
    pub abs_tol: f64,
    pub energy_tol: f64,
    pub closure_tol: f64,
    pub t_budget: f64,
    /// `null` when escape detection is off.
    pub escape_radius: Option<f64>,
    pub origin_floor: f64,
    pub max_steps: usize,
}

impl From<&IntegrationControls> for ControlsRecord {
    fn from(c: &IntegrationControls) -> Self {
        Self {
            rel_tol: c.rel_tol,
            abs_tol: c.abs_tol,
            energy_tol: c.energy_tol,
            closure_tol: c.closure_tol,
            t_budget: c.t_budget,
            escape_radius: c.escape_radius.is_finite().then_some(c.escape_radius),
            origin_floor: c.origin_floor,
            max_steps: c.max_steps,
        }
    }
}

impl RunManifest {
    pub fn new(command: &str, argv: &[String]) -> Self {
        Self {
            command: command.to_string(),
            version: env!("CARGO_PKG_VERSION").to_string(),
            argv: argv.to_vec(),
            parameters: Map::new(),
            controls: None,
        }
    }

    pub fn param(&mut self, name: &str, value: impl Into<Value>) -> &mut Self {
        self.parameters.insert(name.to_string(), value.into());
        self
    }

    pub fn controls(&mut self, ctl: &IntegrationControls) -> &mut Self {
        self.controls = Some(ctl.into());
        self
    }

    /// Written next to `output` as `<output>.manifest.json`.
    pub fn path_for(output: &Path) -> PathBuf {
        let mut name = output.as_os_str().to_owned();
        name.push(".manifest.json");
        PathBuf::from(name)
    }

    pub fn write_beside(&self, output: &Path) -> std::io::Result<PathBuf> {
        let path = Self::path_for(output);
        let mut text = serde_json::to_string_pretty(self).expect("manifest serialises");
        text.push('\n');
        fs::write(&path, text)?;
        Ok(path)
    }
}
