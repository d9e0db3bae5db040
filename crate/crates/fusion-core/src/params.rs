//! Learnable parameters: named tensors plus per-layer normalization state.

use rand::SeedableRng;
use rand_chacha::ChaCha12Rng;
use rand_distr::{Distribution, Normal};

use crate::autodiff::{Shape, Tensor};
use crate::config::FusionConfig;
use crate::error::{FusionError, Result};

/// Running normalization statistics for one layer.
#[derive(Clone, Debug, PartialEq)]
pub struct NormState {
    pub running_mean: Vec<f64>,
    pub running_var: Vec<f64>,
}

/// Fraction of the old running statistic kept on each update.
pub const NORM_MOMENTUM: f64 = 0.9;

impl NormState {
    pub fn new(channels: usize) -> Self {
        NormState {
            running_mean: vec![0.0; channels],
            running_var: vec![1.0; channels],
        }
    }

    pub fn update(&mut self, batch_mean: &[f64], batch_var: &[f64]) {
        for (r, &b) in self.running_mean.iter_mut().zip(batch_mean) {
            *r = NORM_MOMENTUM * *r + (1.0 - NORM_MOMENTUM) * b;
        }
        for (r, &b) in self.running_var.iter_mut().zip(batch_var) {
            *r = NORM_MOMENTUM * *r + (1.0 - NORM_MOMENTUM) * b;
        }
    }
}

/// One named learnable tensor.
#[derive(Clone, Debug)]
pub struct Param {
    pub name: String,
    pub tensor: Tensor<f64>,
}

/// One convolution layer of the architecture.
#[derive(Clone, Debug)]
pub(crate) struct LayerDef {
    pub name: String,
    pub in_ch: usize,
    pub out_ch: usize,
    pub kernel: usize,
    pub normed: bool,
}

/// The full layer stack in forward order: two 3-layer high-frequency paths,
/// one low-frequency layer per input, three reconstruction layers.
pub(crate) fn layer_defs(config: &FusionConfig) -> Vec<LayerDef> {
    let mut defs = Vec::new();
    for (path, kernels) in [
        ("hf_a", &config.hf_kernels_anatomical),
        ("hf_b", &config.hf_kernels_functional),
    ] {
        let mut in_ch = 1;
        for (i, (&k, &out_ch)) in kernels.iter().zip(&config.hf_channels).enumerate() {
            defs.push(LayerDef {
                name: format!("{}.{}", path, i),
                in_ch,
                out_ch,
                kernel: k,
                normed: true,
            });
            in_ch = out_ch;
        }
    }
    defs.push(LayerDef {
        name: "lf_a.0".into(),
        in_ch: 1,
        out_ch: config.lf_channels,
        kernel: config.lf_kernel_anatomical,
        normed: true,
    });
    defs.push(LayerDef {
        name: "lf_b.0".into(),
        in_ch: 1,
        out_ch: config.lf_channels,
        kernel: config.lf_kernel_functional,
        normed: true,
    });
    let recon_in = [
        config.hf_channels[2],
        config.recon_channels[0],
        config.recon_channels[1],
    ];
    for i in 0..3 {
        defs.push(LayerDef {
            name: format!("recon.{}", i),
            in_ch: recon_in[i],
            out_ch: config.recon_channels[i],
            kernel: 3,
            // The last layer feeds tanh directly: no norm, no Leaky ReLU.
            normed: i < 2,
        });
    }
    defs
}

/// Named, ordered collection of learnable tensors plus normalization state.
#[derive(Clone, Debug)]
pub struct ParamSet {
    config: FusionConfig,
    params: Vec<Param>,
    norm_states: Vec<(String, NormState)>,
    steps_trained: u64,
}

impl ParamSet {
    /// Initializes weights from a truncated normal (mean 0, std
    /// `config.init_std`, resampled beyond two standard deviations), biases
    /// and norm shifts at zero, norm scales at one. Deterministic per seed.
    pub fn init(config: &FusionConfig, seed: u64) -> Result<Self> {
        config.validate()?;
        let mut rng = ChaCha12Rng::seed_from_u64(seed);
        let normal = Normal::new(0.0, config.init_std)
            .map_err(|e| FusionError::InvalidConfig(e.to_string()))?;
        let bound = 2.0 * config.init_std;
        let mut trunc_sample = || loop {
            let v: f64 = normal.sample(&mut rng);
            if v.abs() <= bound {
                return v;
            }
        };

        let mut params = Vec::new();
        let mut norm_states = Vec::new();
        for def in layer_defs(config) {
            let wshape = Shape::new(def.out_ch, def.in_ch, def.kernel, def.kernel);
            let weight: Vec<f64> = (0..wshape.numel()).map(|_| trunc_sample()).collect();
            params.push(Param {
                name: format!("{}.weight", def.name),
                tensor: Tensor::new(wshape, weight)?,
            });
            params.push(Param {
                name: format!("{}.bias", def.name),
                tensor: Tensor::zeros(Shape::new(1, def.out_ch, 1, 1)),
            });
            if def.normed {
                params.push(Param {
                    name: format!("{}.norm.scale", def.name),
                    tensor: Tensor::filled(Shape::new(1, def.out_ch, 1, 1), 1.0),
                });
                params.push(Param {
                    name: format!("{}.norm.shift", def.name),
                    tensor: Tensor::zeros(Shape::new(1, def.out_ch, 1, 1)),
                });
                norm_states.push((format!("{}.norm", def.name), NormState::new(def.out_ch)));
            }
        }
        Ok(ParamSet {
            config: config.clone(),
            params,
            norm_states,
            steps_trained: 0,
        })
    }

    /// Rebuilds a set from raw pieces (checkpoint loading); validates shapes.
    pub(crate) fn from_parts(
        config: FusionConfig,
        params: Vec<Param>,
        norm_states: Vec<(String, NormState)>,
        steps_trained: u64,
    ) -> Result<Self> {
        let set = ParamSet {
            config,
            params,
            norm_states,
            steps_trained,
        };
        set.validate_shapes()?;
        Ok(set)
    }

    /// Checks every tensor against the shape the config dictates.
    pub fn validate_shapes(&self) -> Result<()> {
        self.config.validate()?;
        let expected = Self::init(&self.config, 0)?;
        if expected.params.len() != self.params.len()
            || expected.norm_states.len() != self.norm_states.len()
        {
            return Err(FusionError::InvalidShape(format!(
                "parameter count mismatch: expected {} tensors and {} norm states, got {} and {}",
                expected.params.len(),
                expected.norm_states.len(),
                self.params.len(),
                self.norm_states.len()
            )));
        }
        for (e, p) in expected.params.iter().zip(&self.params) {
            if e.name != p.name || e.tensor.shape() != p.tensor.shape() {
                return Err(FusionError::InvalidShape(format!(
                    "parameter {} has shape {}, config requires {} named {}",
                    p.name,
                    p.tensor.shape(),
                    e.tensor.shape(),
                    e.name
                )));
            }
        }
        for (e, s) in expected.norm_states.iter().zip(&self.norm_states) {
            if e.0 != s.0 || e.1.running_mean.len() != s.1.running_mean.len() {
                return Err(FusionError::InvalidShape(format!(
                    "norm state {} does not match config ({} channels expected)",
                    s.0,
                    e.1.running_mean.len()
                )));
            }
        }
        Ok(())
    }

    pub fn config(&self) -> &FusionConfig {
        &self.config
    }

    pub fn params(&self) -> &[Param] {
        &self.params
    }

    pub fn norm_states(&self) -> &[(String, NormState)] {
        &self.norm_states
    }

    pub fn index_of(&self, name: &str) -> Option<usize> {
        self.params.iter().position(|p| p.name == name)
    }

    pub fn tensor(&self, name: &str) -> Option<&Tensor<f64>> {
        self.params
            .iter()
            .find(|p| p.name == name)
            .map(|p| &p.tensor)
    }

    pub fn tensor_at(&self, index: usize) -> &Tensor<f64> {
        &self.params[index].tensor
    }

    pub fn tensor_at_mut(&mut self, index: usize) -> &mut Tensor<f64> {
        &mut self.params[index].tensor
    }

    pub fn norm_state_index(&self, name: &str) -> Option<usize> {
        self.norm_states.iter().position(|(n, _)| n == name)
    }

    pub fn norm_state_at(&self, index: usize) -> &NormState {
        &self.norm_states[index].1
    }

    /// Folds batch statistics into the running state of one norm layer.
    pub fn update_norm_state(&mut self, index: usize, mean: &[f64], var: &[f64]) {
        self.norm_states[index].1.update(mean, var);
    }

    /// Number of optimizer steps applied to these parameters.
    pub fn steps_trained(&self) -> u64 {
        self.steps_trained
    }

    pub fn record_steps(&mut self, steps: u64) {
        self.steps_trained += steps;
    }
}
