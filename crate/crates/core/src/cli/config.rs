use std::fmt;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::mesh::RefineParams;
use crate::sdf::DEFAULT_CLIP_MM;
use crate::synth::GeneratorConfig;

/// Hemisphere selection.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum Side {
    #[default]
    Left,
    Right,
    Both,
}

impl Side {
    /// Hemisphere tags in output order.
    pub fn hemis(self) -> &'static [&'static str] {
        match self {
            Side::Left => &["lh"],
            Side::Right => &["rh"],
            Side::Both => &["lh", "rh"],
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Side::Left => "left",
            Side::Right => "right",
            Side::Both => "both",
        }
    }
}

impl fmt::Display for Side {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Side {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "left" => Ok(Side::Left),
            "right" => Ok(Side::Right),
            "both" => Ok(Side::Both),
            _ => Err(Error::arg(format!("unknown side {s:?} (expected left, right or both)"))),
        }
    }
}

/// Settings shared by all subcommands, read from `--config`.
///
/// Command-line flags override `side`, `seed` and `threads`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PipelineConfig {
    pub generator: GeneratorConfig,
    pub refine: RefineParams,
    pub clip_mm: f64,
    pub side: Option<Side>,
    pub seed: Option<u64>,
    pub threads: Option<usize>,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        PipelineConfig {
            generator: GeneratorConfig::default(),
            refine: RefineParams::default(),
            clip_mm: DEFAULT_CLIP_MM,
            side: None,
            seed: None,
            threads: None,
        }
    }
}

impl PipelineConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        let c: PipelineConfig = serde_json::from_str(text)?;
        c.validate()?;
        Ok(c)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }

    pub fn validate(&self) -> Result<()> {
        self.generator.validate()?;
        if !(self.clip_mm > 0.0 && self.clip_mm.is_finite()) {
            return Err(Error::arg(format!("clip_mm must be positive, got {}", self.clip_mm)));
        }
        let r = &self.refine;
        if !(r.step_mm > 0.0 && r.step_mm.is_finite()) || !(r.lambda_smooth >= 0.0 && r.lambda_smooth.is_finite()) {
            return Err(Error::arg("refine.step_mm must be positive and refine.lambda_smooth non-negative"));
        }
        if self.threads == Some(0) {
            return Err(Error::arg("threads must be at least 1"));
        }
        Ok(())
    }

    /// Canonical JSON of everything that can influence outputs. Thread count is excluded.
    pub fn canonical_json(&self) -> String {
        let c = PipelineConfig { threads: None, ..self.clone() };
        serde_json::to_string(&c).expect("serialisable")
    }
}
