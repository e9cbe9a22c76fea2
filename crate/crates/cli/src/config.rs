//! Run configuration file.

use std::path::{Path, PathBuf};

use arrivalcast::ingest::SplitSpec;
use arrivalcast::synth::{default_start, ProfileParams, WeatherParams};
use arrivalcast::{HourStamp, ModelKind, ModelSettings};
use serde::{Deserialize, Serialize};

use crate::CliError;

fn default_models() -> Vec<String> {
    ModelKind::ALL.iter().map(|k| k.name().to_string()).collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    #[serde(default)]
    pub seed: u64,
    /// Excluded from the configuration hash.
    #[serde(default, skip_serializing)]
    pub out_dir: Option<PathBuf>,
    #[serde(default = "default_models")]
    pub models: Vec<String>,
    pub data: DataSource,
    /// Defaults to the built-in 2004–2007 split for file sources; synthetic
    /// sources split by week counts instead.
    #[serde(default)]
    pub split: Option<SplitSpec>,
    #[serde(default)]
    pub settings: ModelSettings,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DataSource {
    #[serde(default)]
    pub events: Option<PathBuf>,
    #[serde(default)]
    pub hourly: Option<PathBuf>,
    #[serde(default)]
    pub synth: Option<SynthSource>,
    /// Hourly maximum temperature CSV.
    #[serde(default)]
    pub weather: Option<PathBuf>,
    /// Generate temperature instead of reading it.
    #[serde(default)]
    pub synth_weather: Option<WeatherParams>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SynthSource {
    pub weeks: usize,
    /// Trailing weeks held out for testing when no split is given.
    #[serde(default = "default_test_weeks")]
    pub test_weeks: usize,
    #[serde(default = "default_start")]
    pub start: HourStamp,
    #[serde(default)]
    pub profile: ProfileParams,
}

fn default_test_weeks() -> usize {
    20
}

/// The one configured source of arrival counts.
pub enum Source<'a> {
    Events(&'a Path),
    Hourly(&'a Path),
    Synth(&'a SynthSource),
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::usage(format!("cannot read config {}: {e}", path.display())))?;
        let mut cfg: RunConfig =
            toml::from_str(&text).map_err(|e| CliError::usage(format!("invalid config {}: {e}", path.display())))?;
        cfg.resolve_paths(path.parent().unwrap_or(Path::new(".")));
        cfg.validate()?;
        Ok(cfg)
    }

    /// Relative data paths are taken relative to the config file.
    fn resolve_paths(&mut self, base: &Path) {
        for p in [&mut self.data.events, &mut self.data.hourly, &mut self.data.weather]
            .into_iter()
            .flatten()
        {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        }
        if let Some(out) = &mut self.out_dir {
            if out.is_relative() {
                *out = base.join(&*out);
            }
        }
    }

    pub fn validate(&self) -> Result<(), CliError> {
        self.source()?;
        self.model_kinds()?;
        if self.data.weather.is_some() && self.data.synth_weather.is_some() {
            return Err(CliError::usage(
                "give either data.weather or data.synth_weather, not both",
            ));
        }
        if let Some(s) = &self.split {
            s.validate().map_err(|e| CliError::usage(e.to_string()))?;
        }
        if let Some(s) = &self.data.synth {
            if s.weeks == 0 || (self.split.is_none() && s.test_weeks >= s.weeks) {
                return Err(CliError::usage("synth.weeks must exceed synth.test_weeks"));
            }
        }
        Ok(())
    }

    pub fn source(&self) -> Result<Source<'_>, CliError> {
        let d = &self.data;
        match (&d.events, &d.hourly, &d.synth) {
            (Some(p), None, None) => Ok(Source::Events(p)),
            (None, Some(p), None) => Ok(Source::Hourly(p)),
            (None, None, Some(s)) => Ok(Source::Synth(s)),
            _ => Err(CliError::usage(
                "exactly one of data.events, data.hourly or data.synth must be set",
            )),
        }
    }

    pub fn model_kinds(&self) -> Result<Vec<ModelKind>, CliError> {
        if self.models.is_empty() {
            return Err(CliError::usage("no models listed"));
        }
        self.models
            .iter()
            .map(|m| m.parse::<ModelKind>().map_err(|e| CliError::usage(e.to_string())))
            .collect()
    }

    /// Stable text the configuration hash is taken over.
    pub fn canonical(&self) -> String {
        serde_json::to_string(self).expect("config serializes")
    }
}
