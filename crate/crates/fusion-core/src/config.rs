//! Architecture/training hyperparameters and the JSON run configuration.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{FusionError, Result};

/// All architecture and training hyperparameters.
///
/// Defaults follow the reference setup: dual high-frequency paths with
/// 3x3/5x5 first kernels growing to 64 channels, 9x9/7x7 low-frequency
/// kernels, Leaky ReLU slope 0.2, Adam at lr 0.002 with batch size 1, and
/// truncated-normal init with std 0.01.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct FusionConfig {
    /// Kernel sizes of the three high-frequency layers on the anatomical path.
    pub hf_kernels_anatomical: [usize; 3],
    /// Kernel sizes of the three high-frequency layers on the functional path.
    pub hf_kernels_functional: [usize; 3],
    pub lf_kernel_anatomical: usize,
    pub lf_kernel_functional: usize,
    /// Channel widths of the high-frequency layers (strictly increasing).
    pub hf_channels: [usize; 3],
    pub lf_channels: usize,
    /// Channel widths of the three reconstruction layers; the last must be 1.
    pub recon_channels: [usize; 3],
    pub leaky_slope: f64,
    /// Weight of the SSIM term against the l2 term in the total loss.
    pub lambda: f64,
    /// Saturation factor of the color composite.
    pub omega: f64,
    pub epochs: usize,
    pub lr: f64,
    pub batch_size: usize,
    pub init_std: f64,
    pub seed: u64,
    /// Sign-preserving guard added to the first fusion rule's denominator.
    pub eps_fuse: f64,
}

impl Default for FusionConfig {
    fn default() -> Self {
        FusionConfig {
            hf_kernels_anatomical: [3, 3, 3],
            hf_kernels_functional: [5, 3, 3],
            lf_kernel_anatomical: 9,
            lf_kernel_functional: 7,
            hf_channels: [16, 32, 64],
            lf_channels: 32,
            recon_channels: [32, 32, 1],
            leaky_slope: 0.2,
            lambda: 0.8,
            omega: 0.6,
            epochs: 200,
            lr: 0.002,
            batch_size: 1,
            init_std: 0.01,
            seed: 42,
            eps_fuse: 1e-6,
        }
    }
}

impl FusionConfig {
    pub fn validate(&self) -> Result<()> {
        let mut kernels = vec![
            self.lf_kernel_anatomical,
            self.lf_kernel_functional,
        ];
        kernels.extend(self.hf_kernels_anatomical);
        kernels.extend(self.hf_kernels_functional);
        for k in kernels {
            if k % 2 == 0 || k == 0 {
                return Err(FusionError::InvalidConfig(format!(
                    "kernel sizes must be odd, got {}",
                    k
                )));
            }
        }
        if !(self.hf_channels[0] < self.hf_channels[1] && self.hf_channels[1] < self.hf_channels[2])
        {
            return Err(FusionError::InvalidConfig(format!(
                "hf_channels must be strictly increasing, got {:?}",
                self.hf_channels
            )));
        }
        if self.recon_channels[2] != 1 {
            return Err(FusionError::InvalidConfig(format!(
                "recon_channels must end in 1, got {:?}",
                self.recon_channels
            )));
        }
        if self.lf_channels != self.recon_channels[1] {
            return Err(FusionError::InvalidConfig(format!(
                "lf_channels ({}) must equal the second reconstruction width ({}) \
                 so the second fusion rule sees equal shapes",
                self.lf_channels, self.recon_channels[1]
            )));
        }
        for (name, v) in [("lambda", self.lambda), ("omega", self.omega)] {
            if !(0.0..=1.0).contains(&v) || !v.is_finite() {
                return Err(FusionError::InvalidConfig(format!(
                    "{} must lie in [0,1], got {}",
                    name, v
                )));
            }
        }
        if !(self.leaky_slope > 0.0 && self.leaky_slope < 1.0) {
            return Err(FusionError::InvalidConfig(format!(
                "leaky_slope must lie in (0,1), got {}",
                self.leaky_slope
            )));
        }
        if self.batch_size != 1 {
            return Err(FusionError::InvalidConfig(format!(
                "only batch_size 1 is supported, got {}",
                self.batch_size
            )));
        }
        if self.epochs == 0 {
            return Err(FusionError::InvalidConfig("epochs must be >= 1".into()));
        }
        if !(self.lr >= 0.0 && self.lr.is_finite()) {
            return Err(FusionError::InvalidConfig(format!(
                "lr must be finite and >= 0, got {}",
                self.lr
            )));
        }
        if !(self.init_std > 0.0 && self.init_std.is_finite()) {
            return Err(FusionError::InvalidConfig(format!(
                "init_std must be positive, got {}",
                self.init_std
            )));
        }
        if !(self.eps_fuse >= 0.0 && self.eps_fuse.is_finite()) {
            return Err(FusionError::InvalidConfig(format!(
                "eps_fuse must be finite and >= 0, got {}",
                self.eps_fuse
            )));
        }
        Ok(())
    }

    /// Canonical JSON representation (fixed field order).
    pub fn to_canonical_json(&self) -> String {
        serde_json::to_string(self).expect("config serializes")
    }
}

/// A full run description: hyperparameters plus the paths a command needs.
/// Unknown keys are rejected so typos never silently fall back to defaults.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    pub fusion: FusionConfig,
    pub data_dir: Option<PathBuf>,
    pub checkpoint: Option<PathBuf>,
    pub output_dir: Option<PathBuf>,
}

impl RunConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        let cfg: RunConfig = serde_json::from_str(text)
            .map_err(|e| FusionError::InvalidConfig(e.to_string()))?;
        cfg.fusion.validate()?;
        Ok(cfg)
    }

    pub fn from_file(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|source| FusionError::Io {
            path: path.to_path_buf(),
            source,
        })?;
        Self::from_json(&text)
    }

    pub fn to_json_pretty(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serializes")
    }

    /// Writes the effective configuration next to a run's outputs.
    pub fn write_echo(&self, dir: impl AsRef<Path>) -> Result<PathBuf> {
        let dir = dir.as_ref();
        fs::create_dir_all(dir).map_err(|source| FusionError::Io {
            path: dir.to_path_buf(),
            source,
        })?;
        let path = dir.join("config.json");
        fs::write(&path, self.to_json_pretty()).map_err(|source| FusionError::Io {
            path: path.clone(),
            source,
        })?;
        Ok(path)
    }
}
