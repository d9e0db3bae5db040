//! The fusion graph: dual high/low-frequency feature extraction per input,
//! the two closed-form fusion rules, and the three-layer reconstruction head.

use crate::autodiff::{Element, NodeId, NormUpdate, Padding, Tape, Tensor};
use crate::error::{FusionError, Result};
use crate::imageio::ImagePair;
use crate::params::{layer_defs, LayerDef, ParamSet};

/// Whether normalization layers use batch or running statistics.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Mode {
    Train,
    Infer,
}

/// Which leaves should track gradients during a forward pass.
#[derive(Clone, Copy, Debug, Default)]
pub struct GradTargets {
    pub params: bool,
    pub inputs: bool,
}

impl GradTargets {
    pub fn none() -> Self {
        GradTargets::default()
    }

    pub fn params() -> Self {
        GradTargets {
            params: true,
            inputs: false,
        }
    }

    pub fn inputs() -> Self {
        GradTargets {
            params: false,
            inputs: true,
        }
    }
}

/// A recorded forward pass: the tape, the fused output node, and handles to
/// every leaf a caller may want gradients for.
pub struct ForwardPass<T: Element> {
    pub tape: Tape<T>,
    pub output: NodeId,
    pub input_anatomical: NodeId,
    pub input_functional: NodeId,
    /// Leaf node per parameter, aligned with `ParamSet::params` order.
    pub param_nodes: Vec<NodeId>,
    /// Batch statistics per norm layer (train mode only), aligned with
    /// `ParamSet::norm_states` indices. Apply via `ParamSet::update_norm_state`.
    pub norm_updates: Vec<(usize, NormUpdate<T>)>,
}

struct Builder<'p, T: Element> {
    tape: Tape<T>,
    params: &'p ParamSet,
    param_nodes: Vec<NodeId>,
    norm_updates: Vec<(usize, NormUpdate<T>)>,
    mode: Mode,
}

impl<'p, T: Element> Builder<'p, T> {
    fn new(params: &'p ParamSet, mode: Mode, track_params: bool) -> Self {
        let mut tape = Tape::new();
        let param_nodes = params
            .params()
            .iter()
            .map(|p| tape.leaf(p.tensor.cast::<T>(), track_params))
            .collect();
        Builder {
            tape,
            params,
            param_nodes,
            norm_updates: Vec::new(),
            mode,
        }
    }

    fn node(&self, name: &str) -> Result<NodeId> {
        self.params
            .index_of(name)
            .map(|i| self.param_nodes[i])
            .ok_or_else(|| FusionError::InvalidArgument(format!("missing parameter {}", name)))
    }

    /// conv -> norm -> leaky_relu (norm/activation skipped on the last
    /// reconstruction layer, which feeds tanh instead).
    fn conv_block(&mut self, x: NodeId, def: &LayerDef) -> Result<NodeId> {
        let weight = self.node(&format!("{}.weight", def.name))?;
        let bias = self.node(&format!("{}.bias", def.name))?;
        let mut y = self.tape.conv2d(x, weight, bias, Padding::Reflect)?;
        if def.normed {
            let scale = self.node(&format!("{}.norm.scale", def.name))?;
            let shift = self.node(&format!("{}.norm.shift", def.name))?;
            let state_name = format!("{}.norm", def.name);
            let state_idx = self
                .params
                .norm_state_index(&state_name)
                .ok_or_else(|| {
                    FusionError::InvalidArgument(format!("missing norm state {}", state_name))
                })?;
            y = match self.mode {
                Mode::Train => {
                    let (node, update) = self.tape.norm_train(y, scale, shift)?;
                    self.norm_updates.push((state_idx, update));
                    node
                }
                Mode::Infer => {
                    let state = self.params.norm_state_at(state_idx);
                    let mean: Vec<T> =
                        state.running_mean.iter().map(|&v| T::from_f64(v)).collect();
                    let var: Vec<T> =
                        state.running_var.iter().map(|&v| T::from_f64(v)).collect();
                    self.tape.norm_infer(y, scale, shift, &mean, &var)?
                }
            };
            y = self
                .tape
                .leaky_relu(y, T::from_f64(self.params.config().leaky_slope))?;
        }
        Ok(y)
    }
}

/// Records the full fusion graph for a pair of (1,1,H,W) input tensors in
/// [0,1]. Inputs are shifted to [-1,1] before the first layer and the tanh
/// output is rescaled back to [0,1], so the fused image lands in [0,1].
pub fn forward_tensors<T: Element>(
    params: &ParamSet,
    anatomical: &Tensor<f64>,
    functional: &Tensor<f64>,
    mode: Mode,
    targets: GradTargets,
) -> Result<ForwardPass<T>> {
    if anatomical.shape() != functional.shape() {
        return Err(FusionError::InvalidShape(format!(
            "input shapes differ: {} vs {}",
            anatomical.shape(),
            functional.shape()
        )));
    }
    if anatomical.shape().channels != 1 {
        return Err(FusionError::InvalidShape(format!(
            "inputs must be single-channel, got {}",
            anatomical.shape()
        )));
    }
    let config = params.config();
    let defs = layer_defs(config);
    let mut b = Builder::new(params, mode, targets.params);

    let input_anatomical = b.tape.leaf(anatomical.cast::<T>(), targets.inputs);
    let input_functional = b.tape.leaf(functional.cast::<T>(), targets.inputs);
    let two = T::from_f64(2.0);
    let half = T::from_f64(0.5);
    let a0 = b.tape.affine(input_anatomical, two, -T::one());
    let f0 = b.tape.affine(input_functional, two, -T::one());

    let mut h1 = a0;
    let mut h2 = f0;
    for def in &defs[0..3] {
        h1 = b.conv_block(h1, def)?;
    }
    for def in &defs[3..6] {
        h2 = b.conv_block(h2, def)?;
    }
    let l1 = b.conv_block(a0, &defs[6])?;
    let l2 = b.conv_block(f0, &defs[7])?;

    let h_out = b.tape.fuse_hf(h1, h2, T::from_f64(config.eps_fuse))?;
    let r1 = b.conv_block(h_out, &defs[8])?;
    let r_i = b.conv_block(r1, &defs[9])?;
    let r_out = b.tape.fuse_lf(l1, l2, r_i)?;
    let y = b.conv_block(r_out, &defs[10])?;
    let y = b.tape.tanh_act(y);
    let output = b.tape.affine(y, half, half);

    Ok(ForwardPass {
        tape: b.tape,
        output,
        input_anatomical,
        input_functional,
        param_nodes: b.param_nodes,
        norm_updates: b.norm_updates,
    })
}

/// Records the fusion graph for a validated image pair.
pub fn forward<T: Element>(
    params: &ParamSet,
    pair: &ImagePair,
    mode: Mode,
    targets: GradTargets,
) -> Result<ForwardPass<T>> {
    forward_tensors(
        params,
        &pair.anatomical.to_tensor::<f64>(),
        &pair.functional.to_tensor::<f64>(),
        mode,
        targets,
    )
}

/// Single inference forward, returning the fused (1,1,H,W) tensor.
pub fn fuse_with<T: Element>(params: &ParamSet, pair: &ImagePair) -> Result<Tensor<T>> {
    let pass = forward::<T>(params, pair, Mode::Infer, GradTargets::none())?;
    Ok(pass.tape.value(pass.output).clone())
}

/// Single inference forward at reference (f64) precision.
pub fn fuse(params: &ParamSet, pair: &ImagePair) -> Result<Tensor<f64>> {
    fuse_with::<f64>(params, pair)
}
