//! Run configuration: which columns feed which predictor block, categorical
//! reference levels, model kind and inference settings. Can be read from a
//! TOML file and overridden by command-line flags.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::{CliError, Result};

/// Data-side configuration: column roles and encodings.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(default)]
pub struct DataConfig {
    pub time_column: String,
    pub status_column: String,
    /// Covariates entering the failure-level predictor x'beta.
    pub beta_covariates: Vec<String>,
    /// Covariates entering the time-effect predictor x*'alpha.
    pub alpha_covariates: Vec<String>,
    /// Categorical covariates and their reference level; everything else is
    /// parsed as a continuous number.
    pub categorical: BTreeMap<String, String>,
}

impl Default for DataConfig {
    fn default() -> Self {
        Self {
            time_column: "time".into(),
            status_column: "status".into(),
            beta_covariates: Vec::new(),
            alpha_covariates: Vec::new(),
            categorical: BTreeMap::new(),
        }
    }
}

impl DataConfig {
    /// All covariates referenced by either block, deduplicated in order.
    pub fn used_covariates(&self) -> Vec<String> {
        let mut out = Vec::new();
        for name in self
            .beta_covariates
            .iter()
            .chain(self.alpha_covariates.iter())
        {
            if !out.contains(name) {
                out.push(name.clone());
            }
        }
        out
    }
}

/// Inference settings shared by the fitting subcommands.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(default)]
pub struct ModelConfig {
    /// "gtdl" or "frailty".
    pub kind: String,
    pub ci_level: f64,
    pub seed: u64,
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self {
            kind: "gtdl".into(),
            ci_level: 0.90,
            seed: 0,
        }
    }
}

impl ModelConfig {
    pub fn model_kind(&self) -> Result<gtdl::ModelKind> {
        match self.kind.as_str() {
            "gtdl" => Ok(gtdl::ModelKind::Gtdl),
            "frailty" | "gtdl_frailty" => Ok(gtdl::ModelKind::GtdlFrailty),
            other => Err(CliError::Config(format!(
                "unknown model kind '{other}' (expected 'gtdl' or 'frailty')"
            ))),
        }
    }
}

/// A run configuration file: `[data]` and `[model]` tables.
#[derive(Debug, Clone, Default, Serialize, Deserialize, PartialEq)]
#[serde(default)]
pub struct RunConfig {
    pub data: DataConfig,
    pub model: ModelConfig,
}

impl RunConfig {
    pub fn from_toml_file(path: &std::path::Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        toml::from_str(&text).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))
    }
}

/// Parse repeated `NAME=REF` flags into the categorical map.
pub fn parse_categorical_flags(flags: &[String]) -> Result<BTreeMap<String, String>> {
    let mut map = BTreeMap::new();
    for flag in flags {
        let (name, reference) = flag.split_once('=').ok_or_else(|| {
            CliError::Config(format!(
                "--categorical expects NAME=REFERENCE, got '{flag}'"
            ))
        })?;
        map.insert(name.trim().to_string(), reference.trim().to_string());
    }
    Ok(map)
}
