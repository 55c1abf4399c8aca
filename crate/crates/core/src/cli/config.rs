//! Flat `key = value` run configuration.
//!
//! Blank lines and `#` comments are ignored. Every key is optional; an
//! empty file reproduces the default analysis (50 ms frames with 50%
//! overlap, 1024-point FFT, 40 filterbank channels, 13 MFCCs, 4 outer and
//! 5 inner folds).
//!
//! | key | default |
//! |-----|---------|
//! | `manifest` | none (relative paths resolve against the config file) |
//! | `models` | `lr,svm,mlp` |
//! | `k_outer`, `k_inner` | `4`, `5` |
//! | `seed` | `0` |
//! | `threshold` | `0.5` |
//! | `segment_ms` | `500` |
//! | `frame_ms`, `frame_overlap` | `50`, `0.5` |
//! | `n_fft`, `n_filters`, `n_mfcc` | `1024`, `40`, `13` |
//! | `energy_subframes`, `rolloff_fraction` | `10`, `0.9` |
//! | `lr_max_iter`, `lr_tol` | `500`, `1e-6` |
//! | `svm_tol`, `svm_max_iter` | `1e-3`, `1000000` |
//! | `mlp_epochs`, `mlp_batch_size` | `100`, `32` |
//! | `output_dir` | `out` |
//! | `abort_on_decode_error` | `false` |
//! | `export_frames` | `false` |
//! | `save_model` | `true` |

use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::audio_io::SEGMENT_MS;
use crate::error::{Error, Result};
use crate::evaluation::CvConfig;
use crate::features::FeatureConfig;
use crate::models::{ModelFamily, TrainingOptions};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunConfig {
    pub manifest: Option<PathBuf>,
    pub models: Vec<ModelFamily>,
    pub k_outer: usize,
    pub k_inner: usize,
    pub seed: u64,
    pub threshold: f64,
    pub segment_ms: u32,
    pub features: FeatureConfig,
    pub training: TrainingOptions,
    pub output_dir: PathBuf,
    pub abort_on_decode_error: bool,
    pub export_frames: bool,
    pub save_model: bool,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            manifest: None,
            models: ModelFamily::ALL.to_vec(),
            k_outer: 4,
            k_inner: 5,
            seed: 0,
            threshold: 0.5,
            segment_ms: SEGMENT_MS,
            features: FeatureConfig::default(),
            training: TrainingOptions::default(),
            output_dir: PathBuf::from("out"),
            abort_on_decode_error: false,
            export_frames: false,
            save_model: true,
        }
    }
}

fn parse<T: FromStr>(key: &str, value: &str) -> Result<T> {
    value
        .parse()
        .map_err(|_| Error::Config(format!("cannot parse {key} = {value:?}")))
}

impl RunConfig {
    pub fn cv_config(&self) -> CvConfig {
        CvConfig {
            k_outer: self.k_outer,
            k_inner: self.k_inner,
            seed: self.seed,
            threshold: self.threshold,
            training: self.training.clone(),
        }
    }

    /// Applies one `key = value` setting.
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        let f = &mut self.features;
        let t = &mut self.training;
        match key {
            "manifest" => self.manifest = Some(PathBuf::from(value)),
            "models" => {
                let models = value
                    .split(',')
                    .filter(|s| !s.trim().is_empty())
                    .map(str::parse)
                    .collect::<Result<Vec<ModelFamily>>>()?;
                if models.is_empty() {
                    return Err(Error::Config("models list is empty".into()));
                }
                self.models = models;
            }
            "k_outer" => self.k_outer = parse(key, value)?,
            "k_inner" => self.k_inner = parse(key, value)?,
            "seed" => self.seed = parse(key, value)?,
            "threshold" => self.threshold = parse(key, value)?,
            "segment_ms" => self.segment_ms = parse(key, value)?,
            "frame_ms" => f.frame_ms = parse(key, value)?,
            "frame_overlap" => f.frame_overlap = parse(key, value)?,
            "n_fft" => f.n_fft = parse(key, value)?,
            "n_filters" => f.n_filters = parse(key, value)?,
            "n_mfcc" => f.n_mfcc = parse(key, value)?,
            "energy_subframes" => f.energy_subframes = parse(key, value)?,
            "rolloff_fraction" => f.rolloff_fraction = parse(key, value)?,
            "lr_max_iter" => t.lr_max_iter = parse(key, value)?,
            "lr_tol" => t.lr_tol = parse(key, value)?,
            "svm_tol" => t.svm_tol = parse(key, value)?,
            "svm_max_iter" => t.svm_max_iter = parse(key, value)?,
            "mlp_epochs" => t.mlp_epochs = parse(key, value)?,
            "mlp_batch_size" => t.mlp_batch_size = parse(key, value)?,
            "output_dir" => self.output_dir = PathBuf::from(value),
            "abort_on_decode_error" => self.abort_on_decode_error = parse(key, value)?,
            "export_frames" => self.export_frames = parse(key, value)?,
            "save_model" => self.save_model = parse(key, value)?,
            other => return Err(Error::Config(format!("unknown key {other:?}"))),
        }
        Ok(())
    }

    pub fn parse_str(text: &str) -> Result<Self> {
        let mut cfg = Self::default();
        for (n, line) in text.lines().enumerate() {
            let line = line.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line.split_once('=').ok_or_else(|| {
                Error::Config(format!("line {}: expected key = value", n + 1))
            })?;
            cfg.set(key.trim(), value.trim())?;
        }
        cfg.validate()?;
        Ok(cfg)
    }

    /// Reads a config file; relative `manifest` and `output_dir` entries
    /// resolve against the file's directory.
    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))?;
        let mut cfg = Self::parse_str(&text)?;
        let base = path.parent().unwrap_or(Path::new(""));
        if let Some(m) = &cfg.manifest {
            if m.is_relative() {
                cfg.manifest = Some(base.join(m));
            }
        }
        if text.lines().any(|l| l.trim_start().starts_with("output_dir")) && cfg.output_dir.is_relative() {
            cfg.output_dir = base.join(&cfg.output_dir);
        }
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        if self.k_outer < 2 || self.k_inner < 2 {
            return Err(Error::Config("fold counts must be at least 2".into()));
        }
        if self.segment_ms == 0 {
            return Err(Error::Config("segment_ms must be positive".into()));
        }
        if !(0.0..=1.0).contains(&self.threshold) {
            return Err(Error::Config("threshold must lie in [0, 1]".into()));
        }
        if self.training.mlp_batch_size == 0 {
            return Err(Error::Config("mlp_batch_size must be positive".into()));
        }
        self.features
            .validate()
            .map_err(|e| Error::Config(e.to_string()))
    }
}
