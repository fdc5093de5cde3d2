//! Experiment configuration: what to build, which objective, how to optimize.

use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use divmin_core::objectives::{build, Family, Objective, Problem};
use divmin_core::optim::OptimSettings;
use divmin_core::systems::{preset, Horizon, PresetOptions, SystemDecl};
use serde::{Deserialize, Serialize};

pub const CONFIG_SCHEMA_VERSION: u32 = 1;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    #[serde(default = "schema_version")]
    pub schema_version: u32,
    /// Named preset; exclusive with `system`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub preset: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub preset_options: Option<PresetOptions>,
    /// Inline system, target and horizon declaration.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub system: Option<SystemDecl>,
    /// Overrides the preset's or declaration's horizon.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub horizon: Option<Horizon>,
    pub objective: ObjectiveConfig,
    #[serde(default)]
    pub optim: OptimSettings,
    #[serde(default)]
    pub init: Init,
    pub seed: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub out: Option<PathBuf>,
}

fn schema_version() -> u32 {
    CONFIG_SCHEMA_VERSION
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ObjectiveConfig {
    pub family: Family,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub options: Option<serde_json::Value>,
}

/// Starting parameters.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Init {
    /// The logits written in the system declaration.
    #[default]
    Declared,
    /// Logits drawn uniformly from [−2, 2) using the seed.
    Random,
}

impl ExperimentConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        let config: Self = serde_json::from_str(text).context("invalid config")?;
        config.validate()?;
        Ok(config)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).with_context(|| format!("cannot read {}", path.display()))?;
        Self::from_json(&text).with_context(|| format!("in {}", path.display()))
    }

    /// Structural checks that need no computation.
    pub fn validate(&self) -> Result<()> {
        if self.schema_version != CONFIG_SCHEMA_VERSION {
            bail!("unsupported schema_version {} (expected {CONFIG_SCHEMA_VERSION})", self.schema_version);
        }
        match (&self.preset, &self.system) {
            (Some(_), Some(_)) => bail!("give either `preset` or `system`, not both"),
            (None, None) => bail!("one of `preset` or `system` is required"),
            (None, Some(_)) if self.preset_options.is_some() => bail!("`preset_options` needs a `preset`"),
            _ => {}
        }
        self.optim.validate()?;
        if let Some(h) = &self.horizon {
            h.validate()?;
        }
        Ok(())
    }

    pub fn problem(&self) -> Result<Problem> {
        let mut problem: Problem = match (&self.preset, &self.system) {
            (Some(name), _) => preset(name, &self.preset_options.clone().unwrap_or_default())?.into(),
            (None, Some(decl)) => {
                let (system, target, horizon) = decl.build()?;
                Problem::new(system, target, horizon)
            }
            (None, None) => unreachable!("validated"),
        };
        if let Some(h) = self.horizon {
            h.partition(problem.system.scope())?;
            problem.horizon = h;
        }
        Ok(problem)
    }

    pub fn objective(&self) -> Result<Objective> {
        Ok(build(self.objective.family, &self.problem()?, self.objective.options.as_ref())?)
    }

    /// Output directory: the command-line override, then the config, then `divmin-out`.
    pub fn out_dir(&self, cli: Option<&Path>) -> PathBuf {
        cli.map(Path::to_path_buf)
            .or_else(|| self.out.clone())
            .unwrap_or_else(|| PathBuf::from("divmin-out"))
    }
}
