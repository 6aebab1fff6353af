//! Run configuration: versioned JSON, unknown keys rejected, validated before
//! any work starts.

use crate::error::{CliError, CliResult};
use nclab_core::data::{load_idx, synth_gaussian, Dataset};
use nclab_core::network::NetworkConfig;
use nclab_core::trainer::TrainConfig;
use serde::{Deserialize, Serialize};
use std::path::{Path, PathBuf};

pub const SCHEMA_VERSION: u32 = 1;
pub const SCHEMA_JSON: &str = include_str!("../schema/run_config.schema.json");
pub const DATA_DIR_ENV: &str = "NCLAB_DATA_DIR";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub schema_version: u32,
    pub network: NetworkConfig,
    pub train: TrainConfig,
    pub data: DataConfig,
    #[serde(default)]
    pub bounds: BoundsConfig,
    #[serde(default)]
    pub output: OutputConfig,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "source", rename_all = "snake_case", deny_unknown_fields)]
pub enum DataConfig {
    Synthetic {
        dim: usize,
        classes: usize,
        per_class: usize,
        class_sep: f64,
        noise: f64,
        seed: u64,
    },
    Idx {
        images: PathBuf,
        labels: PathBuf,
        /// Keep the first `per_class` samples of each selected class.
        #[serde(default)]
        per_class: Option<usize>,
        classes: Vec<usize>,
    },
}

fn default_eps2() -> f64 {
    1e-2
}

fn default_true() -> bool {
    true
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BoundsConfig {
    /// Interpolation target of the training schedule; the schedule checks are
    /// skipped without it.
    #[serde(default)]
    pub eps1: Option<f64>,
    #[serde(default = "default_eps2")]
    pub eps2: f64,
    #[serde(default = "default_true")]
    pub ntk: bool,
    /// Number of head layers scanned by the large-step conditioning check;
    /// defaults to `l2`.
    #[serde(default)]
    pub prop3_m: Option<usize>,
}

impl Default for BoundsConfig {
    fn default() -> Self {
        Self {
            eps1: None,
            eps2: default_eps2(),
            ntk: true,
            prop3_m: None,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputConfig {
    #[serde(default)]
    pub dir: Option<PathBuf>,
    /// Step cadence of metrics.csv; defaults to `train.record_every`.
    #[serde(default)]
    pub report_every: Option<usize>,
}

impl RunConfig {
    pub fn report_every(&self) -> usize {
        self.output.report_every.unwrap_or(self.train.record_every)
    }

    pub fn validate(&self) -> CliResult<()> {
        if self.schema_version != SCHEMA_VERSION {
            return Err(CliError::Config(format!(
                "schema_version: expected {SCHEMA_VERSION}, got {}",
                self.schema_version
            )));
        }
        let field = |section: &str, e: nclab_core::Error| CliError::Config(format!("{section}: {e}"));
        self.network.validate().map_err(|e| field("network", e))?;
        self.train.validate(&self.network).map_err(|e| field("train", e))?;
        let (dim, classes) = match &self.data {
            DataConfig::Synthetic { dim, classes, per_class, .. } => {
                if *per_class == 0 || *classes == 0 {
                    return Err(CliError::Config("data: classes and per_class must be positive".into()));
                }
                (Some(*dim), *classes)
            }
            DataConfig::Idx { classes, per_class, .. } => {
                if classes.is_empty() || *per_class == Some(0) {
                    return Err(CliError::Config("data: classes must be non-empty, per_class positive".into()));
                }
                (None, classes.len())
            }
        };
        if let Some(d) = dim {
            if d != self.network.input_dim {
                return Err(CliError::Config(format!(
                    "data.dim: {d} does not match network.input_dim {}",
                    self.network.input_dim
                )));
            }
        }
        if classes != self.network.num_classes() {
            return Err(CliError::Config(format!(
                "data: {classes} classes but the network has {} outputs",
                self.network.num_classes()
            )));
        }
        if self.output.report_every == Some(0) {
            return Err(CliError::Config("output.report_every: must be at least 1".into()));
        }
        if let Some(e) = self.bounds.eps1 {
            if !(e.is_finite() && e > 0.0) {
                return Err(CliError::Config("bounds.eps1: must be positive".into()));
            }
        }
        if !(self.bounds.eps2.is_finite() && self.bounds.eps2 > 0.0) {
            return Err(CliError::Config("bounds.eps2: must be positive".into()));
        }
        if let Some(m) = self.bounds.prop3_m {
            if m == 0 || m > self.network.l2 {
                return Err(CliError::Config("bounds.prop3_m: must lie in 1..=l2".into()));
            }
        }
        Ok(())
    }

    /// Makes dataset paths absolute: relative paths are taken against
    /// `NCLAB_DATA_DIR` when set, else against `base`.
    pub fn resolve_paths(&mut self, base: &Path) {
        if let DataConfig::Idx { images, labels, .. } = &mut self.data {
            let root = std::env::var_os(DATA_DIR_ENV)
                .map(PathBuf::from)
                .unwrap_or_else(|| base.to_path_buf());
            for p in [images, labels] {
                if p.is_relative() {
                    *p = root.join(&*p);
                }
            }
        }
    }

    pub fn load_dataset(&self) -> CliResult<Dataset> {
        let ds = match &self.data {
            DataConfig::Synthetic {
                dim,
                classes,
                per_class,
                class_sep,
                noise,
                seed,
            } => synth_gaussian(*dim, *classes, *per_class, *class_sep, *noise, *seed)?,
            DataConfig::Idx {
                images,
                labels,
                per_class,
                classes,
            } => load_idx(images, labels, *per_class, classes).map_err(|e| match e {
                nclab_core::Error::Io(io) => CliError::io(images, io),
                other => CliError::Core(other),
            })?,
        };
        if ds.x.rows() != self.network.input_dim {
            return Err(CliError::Config(format!(
                "data has dimension {} but network.input_dim is {}",
                ds.x.rows(),
                self.network.input_dim
            )));
        }
        Ok(ds)
    }
}

/// Parses a config, reporting the JSON path of the first offending field.
pub fn parse_config(text: &str) -> CliResult<RunConfig> {
    let de = &mut serde_json::Deserializer::from_str(text);
    let cfg: RunConfig = serde_path_to_error::deserialize(de).map_err(|e| {
        let path = e.path().to_string();
        CliError::Config(format!("{path}: {}", e.into_inner()))
    })?;
    cfg.validate()?;
    Ok(cfg)
}

/// Reads, parses, validates and resolves a config file.
pub fn load_config(path: &Path) -> CliResult<RunConfig> {
    let text = std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
    let mut cfg = parse_config(&text)?;
    let base = path.parent().map(Path::to_path_buf).unwrap_or_default();
    cfg.resolve_paths(&base);
    Ok(cfg)
}
