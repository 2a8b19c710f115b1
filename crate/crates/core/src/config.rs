//! Run configuration: a flat TOML file, unknown keys rejected.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::data::{AffinityTransform, LoadOptions};
use crate::objective::LossWeights;
use crate::protein::CnnShape;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}: {message}")]
    Parse { path: PathBuf, message: String },
    #[error("invalid config: {0}")]
    Invalid(String),
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Precision {
    F32,
    #[default]
    F64,
}

/// Tuning grid searched on validation folds, `(key, values)`.
pub const SEARCH_GRID: &[(&str, &[f64])] = &[
    ("learning_rate", &[0.0001, 0.0005, 0.001, 0.005]),
    ("batch_size", &[128.0, 256.0, 512.0, 1024.0]),
    ("gcn_layers", &[1.0, 2.0, 3.0, 4.0, 5.0]),
    ("drug_dim", &[64.0, 128.0, 256.0, 512.0]),
    ("target_dim", &[64.0, 128.0, 256.0, 512.0]),
    ("alpha", &[0.0, 0.01, 0.1, 0.5, 1.0]),
    ("beta", &[0.0, 0.01, 0.1, 0.5, 1.0]),
];

fn default_epochs() -> usize {
    1000
}
fn default_embed() -> usize {
    128
}
fn default_channels() -> Vec<usize> {
    vec![32, 64, 96]
}
fn default_kernel() -> usize {
    8
}
fn default_max_len() -> usize {
    1000
}
fn default_checkpoint_every() -> usize {
    10
}
fn default_out_dir() -> PathBuf {
    PathBuf::from("runs")
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub learning_rate: f64,
    pub batch_size: usize,
    pub gcn_layers: usize,
    pub drug_dim: usize,
    pub target_dim: usize,
    /// Contrastive loss weight.
    pub alpha: f64,
    /// Uniformity loss weight.
    pub beta: f64,
    /// Noise radius of the contrastive views.
    pub epsilon: f64,
    /// Contrastive temperature.
    pub tau: f64,
    #[serde(default = "default_epochs")]
    pub epochs: usize,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub precision: Precision,

    #[serde(default)]
    pub drugs: Option<PathBuf>,
    #[serde(default)]
    pub targets: Option<PathBuf>,
    #[serde(default)]
    pub affinities: Option<PathBuf>,
    #[serde(default = "default_out_dir")]
    pub out_dir: PathBuf,
    #[serde(default)]
    pub affinity_transform: AffinityTransform,

    #[serde(default = "default_embed")]
    pub protein_embed_dim: usize,
    #[serde(default = "default_channels")]
    pub protein_channels: Vec<usize>,
    #[serde(default = "default_kernel")]
    pub protein_kernel: usize,
    #[serde(default = "default_max_len")]
    pub max_protein_len: usize,
    /// Cosine instead of raw dot-product similarity in the contrastive term.
    #[serde(default)]
    pub cosine_similarity: bool,
    /// Epochs between checkpoint writes; the final epoch is always written.
    #[serde(default = "default_checkpoint_every")]
    pub checkpoint_every: usize,
}

/// Command-line replacements for individual keys.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Overrides {
    pub learning_rate: Option<f64>,
    pub batch_size: Option<usize>,
    pub alpha: Option<f64>,
    pub beta: Option<f64>,
    pub epsilon: Option<f64>,
    pub tau: Option<f64>,
    pub epochs: Option<usize>,
    pub seed: Option<u64>,
    pub out_dir: Option<PathBuf>,
    pub affinity_transform: Option<AffinityTransform>,
}

impl RunConfig {
    pub fn from_toml(text: &str, origin: &Path) -> Result<Self, ConfigError> {
        let cfg: RunConfig = toml::from_str(text).map_err(|e| ConfigError::Parse {
            path: origin.to_path_buf(),
            message: e.to_string(),
        })?;
        cfg.validate()?;
        Ok(cfg)
    }

    /// Reads and validates a config; relative paths resolve against its directory.
    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Io {
            path: path.to_path_buf(),
            source,
        })?;
        let mut cfg = Self::from_toml(&text, path)?;
        let base = path.parent().unwrap_or(Path::new(""));
        let resolve = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        };
        for p in [&mut cfg.drugs, &mut cfg.targets, &mut cfg.affinities].into_iter().flatten() {
            resolve(p);
        }
        resolve(&mut cfg.out_dir);
        Ok(cfg)
    }

    pub fn apply(&mut self, o: &Overrides) -> Result<(), ConfigError> {
        macro_rules! set {
            ($($field:ident),*) => {$(
                if let Some(v) = o.$field.clone() {
                    self.$field = v;
                }
            )*};
        }
        set!(learning_rate, batch_size, alpha, beta, epsilon, tau, epochs, seed, out_dir, affinity_transform);
        self.validate()
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        let fail = |m: String| Err(ConfigError::Invalid(m));
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return fail(format!("learning_rate must be positive, got {}", self.learning_rate));
        }
        for (name, v) in [
            ("batch_size", self.batch_size),
            ("gcn_layers", self.gcn_layers),
            ("drug_dim", self.drug_dim),
            ("target_dim", self.target_dim),
            ("protein_embed_dim", self.protein_embed_dim),
            ("protein_kernel", self.protein_kernel),
            ("checkpoint_every", self.checkpoint_every),
        ] {
            if v == 0 {
                return fail(format!("{name} must be at least 1"));
            }
        }
        if self.drug_dim != self.target_dim {
            return fail(format!(
                "drug_dim ({}) and target_dim ({}) must match",
                self.drug_dim, self.target_dim
            ));
        }
        if self.protein_channels.is_empty() || self.protein_channels.contains(&0) {
            return fail(format!("protein_channels must be nonzero, got {:?}", self.protein_channels));
        }
        if let Err(e) = self.loss_weights().check() {
            return fail(e.to_string());
        }
        if let Err(e) = self.cnn_shape().check() {
            return fail(e.to_string());
        }
        for &(key, grid) in SEARCH_GRID {
            let value = self.grid_value(key);
            if !grid.contains(&value) {
                log::debug!("{key} = {value} is outside the tuning grid {grid:?}");
            }
        }
        Ok(())
    }

    fn grid_value(&self, key: &str) -> f64 {
        match key {
            "learning_rate" => self.learning_rate,
            "batch_size" => self.batch_size as f64,
            "gcn_layers" => self.gcn_layers as f64,
            "drug_dim" => self.drug_dim as f64,
            "target_dim" => self.target_dim as f64,
            "alpha" => self.alpha,
            "beta" => self.beta,
            _ => f64::NAN,
        }
    }

    pub fn loss_weights(&self) -> LossWeights {
        LossWeights {
            alpha: self.alpha,
            beta: self.beta,
            tau: self.tau,
            epsilon: self.epsilon,
        }
    }

    pub fn cnn_shape(&self) -> CnnShape {
        CnnShape {
            embed_dim: self.protein_embed_dim,
            channels: self.protein_channels.clone(),
            kernel: self.protein_kernel,
            max_len: self.max_protein_len,
            out_dim: self.target_dim,
        }
    }

    pub fn load_options(&self) -> LoadOptions {
        LoadOptions {
            max_protein_len: self.max_protein_len,
            transform: self.affinity_transform,
        }
    }

    pub fn data_paths(&self) -> Result<(&Path, &Path, &Path), ConfigError> {
        match (&self.drugs, &self.targets, &self.affinities) {
            (Some(d), Some(t), Some(a)) => Ok((d, t, a)),
            _ => Err(ConfigError::Invalid(
                "drugs, targets and affinities paths are required for this command".into(),
            )),
        }
    }

    /// SHA-256 over every setting, hex, first 16 digits.
    pub fn digest(&self) -> String {
        digest_json(&serde_json::to_value(self).expect("config serializes"))
    }

    /// Digest of the settings that determine a training trajectory. The
    /// epoch budget and output directory are left out so that a run can be
    /// resumed with a larger budget or from a moved directory.
    pub fn trajectory_digest(&self) -> String {
        let mut v = serde_json::to_value(self).expect("config serializes");
        let obj = v.as_object_mut().expect("config is an object");
        for key in ["epochs", "out_dir", "checkpoint_every"] {
            obj.remove(key);
        }
        digest_json(&v)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }
}

fn digest_json(v: &serde_json::Value) -> String {
    let bytes = Sha256::digest(v.to_string().as_bytes());
    bytes[..8].iter().map(|b| format!("{b:02x}")).collect()
}
