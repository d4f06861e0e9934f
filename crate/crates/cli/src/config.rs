//! Run configuration: the TOML file, command-line overrides, and the fully
//! resolved form stored in manifests.

use std::path::{Path, PathBuf};

use epmap::model::DEFAULT_MAX_LENGTH;
use epmap::ModelParams;
use serde::{Deserialize, Serialize};

/// A configuration problem, anchored to a line of the config file if known.
#[derive(Debug)]
pub struct ConfigError {
    pub file: Option<PathBuf>,
    pub line: Option<usize>,
    pub message: String,
}

impl ConfigError {
    pub fn new(message: impl Into<String>) -> Self {
        Self {
            file: None,
            line: None,
            message: message.into(),
        }
    }
}

impl std::fmt::Display for ConfigError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match (&self.file, self.line) {
            (Some(p), Some(l)) => write!(f, "{}:{}: {}", p.display(), l, self.message),
            (Some(p), None) => write!(f, "{}: {}", p.display(), self.message),
            (None, _) => write!(f, "{}", self.message),
        }
    }
}

impl std::error::Error for ConfigError {}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MindistSection {
    pub re: Option<[f64; 2]>,
    pub im: Option<[f64; 2]>,
    pub res: Option<[usize; 2]>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BraidSection {
    pub path: Option<String>,
    pub vertices: Option<PathBuf>,
    pub base_steps: Option<usize>,
    pub max_depth: Option<u32>,
    pub safety: Option<f64>,
    pub toy: Option<bool>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CensusSection {
    pub lengths: Option<Vec<usize>>,
    pub re: Option<[f64; 2]>,
    pub im_max: Option<f64>,
    pub columns: Option<usize>,
    pub split_above: Option<usize>,
    pub base_steps: Option<usize>,
    pub localize: Option<bool>,
    pub localize_im_max: Option<f64>,
    pub tol: Option<f64>,
    pub classify: Option<bool>,
    pub heights: Option<Vec<f64>>,
    pub anchor: Option<[f64; 2]>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ErgodicitySection {
    pub z: Option<f64>,
    pub observable: Option<String>,
    pub window: Option<f64>,
    pub bins: Option<usize>,
    pub gue_samples: Option<usize>,
    pub gue_dim: Option<usize>,
    pub poisson: Option<bool>,
    pub poisson_n: Option<usize>,
}

/// Raw config file: model keys at the top level, one table per command.
#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FileConfig {
    #[serde(rename = "L")]
    pub length: Option<usize>,
    #[serde(rename = "Jx")]
    pub jx: Option<f64>,
    #[serde(rename = "Jy")]
    pub jy: Option<f64>,
    #[serde(rename = "Jz")]
    pub jz: Option<f64>,
    pub gxz: Option<f64>,
    pub gxy: Option<f64>,
    pub gyz: Option<f64>,
    pub h1: Option<[f64; 3]>,
    #[serde(rename = "hL")]
    pub hl: Option<[f64; 3]>,
    pub max_length: Option<usize>,
    pub threads: Option<usize>,
    pub seed: Option<u64>,
    #[serde(default)]
    pub mindist: MindistSection,
    #[serde(default)]
    pub braid: BraidSection,
    #[serde(default)]
    pub census: CensusSection,
    #[serde(default)]
    pub ergodicity: ErgodicitySection,
}

/// A loaded config file with its text, for line lookups.
#[derive(Debug, Default)]
pub struct Loaded {
    pub file: Option<PathBuf>,
    pub text: String,
    pub config: FileConfig,
}

impl Loaded {
    pub fn read(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|e| ConfigError {
            file: Some(path.to_path_buf()),
            line: None,
            message: e.to_string(),
        })?;
        Self::parse(&text, Some(path.to_path_buf()))
    }

    pub fn parse(text: &str, file: Option<PathBuf>) -> Result<Self, ConfigError> {
        let config: FileConfig = toml::from_str(text).map_err(|e| ConfigError {
            file: file.clone(),
            line: e.span().map(|s| line_of_offset(text, s.start)),
            message: e.message().to_string(),
        })?;
        Ok(Self {
            file,
            text: text.to_string(),
            config,
        })
    }

    /// Error anchored at the first line assigning `key`.
    pub fn error_at(&self, key: &str, message: impl Into<String>) -> ConfigError {
        ConfigError {
            file: self.file.clone(),
            line: self.line_of_key(key),
            message: message.into(),
        }
    }

    fn line_of_key(&self, key: &str) -> Option<usize> {
        self.text.lines().position(|l| {
            l.trim_start()
                .strip_prefix(key)
                .is_some_and(|rest| rest.trim_start().starts_with('='))
        })
        .map(|i| i + 1)
    }

    pub fn model(&self, length_override: Option<usize>) -> ModelParams {
        let c = &self.config;
        let d = ModelParams::default();
        ModelParams {
            length: length_override.or(c.length).unwrap_or(d.length),
            jx: c.jx.unwrap_or(d.jx),
            jy: c.jy.unwrap_or(d.jy),
            jz: c.jz.unwrap_or(d.jz),
            gxz: c.gxz.unwrap_or(d.gxz),
            gxy: c.gxy.unwrap_or(d.gxy),
            gyz: c.gyz.unwrap_or(d.gyz),
            h1: c.h1.unwrap_or(d.h1),
            hl: c.hl.unwrap_or(d.hl),
        }
    }

    /// Checks the model and maps the failure to the offending key's line.
    pub fn check_model(&self, model: &ModelParams, max_length: usize) -> Result<(), ConfigError> {
        model.validate(max_length).map_err(|e| {
            let msg = e.to_string();
            let key = ["Jx", "Jy", "Jz", "gxz", "gxy", "gyz", "h1", "hL"]
                .into_iter()
                .find(|k| msg.starts_with(&format!("invalid parameter: {k} ")))
                .unwrap_or("L");
            self.error_at(key, msg)
        })
    }
}

fn line_of_offset(text: &str, offset: usize) -> usize {
    text[..offset.min(text.len())].matches('\n').count() + 1
}

/// Fully resolved job, as recorded in manifests.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "command", rename_all = "lowercase")]
pub enum Job {
    Mindist(MindistJob),
    Braid(BraidJob),
    Census(CensusJob),
    Ergodicity(ErgodicityJob),
    Toy(ToyJob),
}

impl Job {
    pub fn name(&self) -> &'static str {
        match self {
            Job::Mindist(_) => "mindist",
            Job::Braid(_) => "braid",
            Job::Census(_) => "census",
            Job::Ergodicity(_) => "ergodicity",
            Job::Toy(_) => "toy",
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MindistJob {
    pub model: ModelParams,
    pub re: [f64; 2],
    pub im: [f64; 2],
    pub res: [usize; 2],
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BraidJob {
    /// `None` for the 2x2 oracle model.
    pub model: Option<ModelParams>,
    pub path: epmap::tracking::PathSpec,
    pub max_depth: u32,
    pub safety: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CensusJob {
    pub model: ModelParams,
    pub lengths: Vec<usize>,
    pub re: [f64; 2],
    /// Upper edge of the Im window; `None` means `1.5 L` per length.
    pub im_max: Option<f64>,
    /// Re columns per bin; `None` means the `2^-L` default.
    pub columns: Option<usize>,
    pub split_above: usize,
    pub base_steps: usize,
    pub localize: bool,
    pub localize_im_max: Option<f64>,
    pub tol: f64,
    pub classify: bool,
    pub heights: Vec<f64>,
    pub anchor: [f64; 2],
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ErgodicityJob {
    pub model: ModelParams,
    pub z: f64,
    pub observable: Option<String>,
    /// Central fraction of levels; 1 means the full spectrum.
    pub window: f64,
    pub bins: usize,
    pub gue_samples: usize,
    pub gue_dim: usize,
    pub poisson: bool,
    pub poisson_n: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ToyJob {
    pub center: [f64; 2],
    pub radius: f64,
    pub tol: f64,
}

/// Everything needed to rerun a job.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunConfig {
    pub job: Job,
    pub threads: usize,
    pub seed: u64,
    pub max_length: usize,
}

pub fn default_max_length(loaded: &Loaded) -> usize {
    loaded.config.max_length.unwrap_or(DEFAULT_MAX_LENGTH)
}
