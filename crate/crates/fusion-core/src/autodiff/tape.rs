//! Reverse-mode automatic differentiation over 4-D tensors.
//!
//! Operations are recorded on a tape in construction order, which is also a
//! topological order: an op's inputs always precede it. `backward` walks the
//! tape once in reverse, accumulating gradients into every reachable node
//! that tracks them. Node values are immutable once recorded.

use rayon::prelude::*;

use crate::autodiff::conv::{conv2d_backward, conv2d_forward, Padding};
use crate::autodiff::tensor::{Element, Shape, Tensor};
use crate::error::{FusionError, Result};

/// Epsilon inside the normalization layer's 1/sqrt(var + eps).
pub const NORM_EPS: f64 = 1e-5;

/// Handle to a node on a [`Tape`].
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct NodeId(pub(crate) usize);

/// Per-channel statistics produced by a train-mode normalization, to be
/// folded into the running state by the caller.
#[derive(Clone, Debug)]
pub struct NormUpdate<T: Element> {
    pub mean: Vec<T>,
    pub var: Vec<T>,
}

enum Op<T: Element> {
    Leaf,
    Conv2d {
        input: NodeId,
        weight: NodeId,
        bias: NodeId,
        padding: Padding,
        cols: Option<Vec<Vec<T>>>,
    },
    LeakyRelu {
        input: NodeId,
        slope: T,
    },
    Tanh {
        input: NodeId,
    },
    Norm {
        input: NodeId,
        scale: NodeId,
        shift: NodeId,
        mean: Vec<T>,
        inv_std: Vec<T>,
        batch_stats: bool,
    },
    FuseHf {
        a: NodeId,
        b: NodeId,
        eps: T,
    },
    FuseLf {
        a: NodeId,
        b: NodeId,
        c: NodeId,
    },
    Add {
        a: NodeId,
        b: NodeId,
    },
    Sub {
        a: NodeId,
        b: NodeId,
    },
    Mul {
        a: NodeId,
        b: NodeId,
    },
    Div {
        a: NodeId,
        b: NodeId,
    },
    Affine {
        input: NodeId,
        mul: T,
    },
    SafeSqrt {
        input: NodeId,
    },
    Mean {
        input: NodeId,
    },
    Sum {
        input: NodeId,
    },
}

struct Node<T: Element> {
    op: Op<T>,
    value: Tensor<T>,
    requires_grad: bool,
}

/// Wengert tape: ordered op records plus their output tensors.
#[derive(Default)]
pub struct Tape<T: Element = f64> {
    nodes: Vec<Node<T>>,
}

impl<T: Element> Tape<T> {
    pub fn new() -> Self {
        Tape { nodes: Vec::new() }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// Registers an input tensor. Gradients are only computed for nodes that
    /// (transitively) depend on a leaf with `requires_grad`.
    pub fn leaf(&mut self, value: Tensor<T>, requires_grad: bool) -> NodeId {
        self.push(Op::Leaf, value, requires_grad)
    }

    pub fn value(&self, id: NodeId) -> &Tensor<T> {
        &self.nodes[id.0].value
    }

    /// Scalar value of a single-element node.
    pub fn scalar(&self, id: NodeId) -> T {
        debug_assert_eq!(self.nodes[id.0].value.numel(), 1);
        self.nodes[id.0].value.data()[0]
    }

    /// Gradient of a node after a backward pass.
    pub fn grad(&self, id: NodeId) -> Option<&[T]> {
        self.nodes[id.0].value.grad()
    }

    pub fn requires_grad(&self, id: NodeId) -> bool {
        self.nodes[id.0].requires_grad
    }

    fn push(&mut self, op: Op<T>, value: Tensor<T>, requires_grad: bool) -> NodeId {
        debug_assert!(self.inputs_of(&op).iter().all(|i| i.0 < self.nodes.len()));
        self.nodes.push(Node {
            op,
            value,
            requires_grad,
        });
        NodeId(self.nodes.len() - 1)
    }

    fn inputs_of(&self, op: &Op<T>) -> Vec<NodeId> {
        match op {
            Op::Leaf => vec![],
            Op::Conv2d {
                input,
                weight,
                bias,
                ..
            } => vec![*input, *weight, *bias],
            Op::LeakyRelu { input, .. }
            | Op::Tanh { input }
            | Op::Affine { input, .. }
            | Op::SafeSqrt { input }
            | Op::Mean { input }
            | Op::Sum { input } => vec![*input],
            Op::Norm {
                input,
                scale,
                shift,
                ..
            } => vec![*input, *scale, *shift],
            Op::FuseHf { a, b, .. } => vec![*a, *b],
            Op::FuseLf { a, b, c } => vec![*a, *b, *c],
            Op::Add { a, b } | Op::Sub { a, b } | Op::Mul { a, b } | Op::Div { a, b } => {
                vec![*a, *b]
            }
        }
    }

    fn any_requires_grad(&self, ids: &[NodeId]) -> bool {
        ids.iter().any(|id| self.nodes[id.0].requires_grad)
    }

    fn check_same_shape(&self, a: NodeId, b: NodeId, what: &str) -> Result<Shape> {
        let (sa, sb) = (self.value(a).shape(), self.value(b).shape());
        if sa != sb {
            return Err(FusionError::InvalidShape(format!(
                "{}: operand shapes differ, {} vs {}",
                what, sa, sb
            )));
        }
        Ok(sa)
    }

    /// Stride-1 2-D cross-correlation with per-output-channel bias.
    pub fn conv2d(
        &mut self,
        input: NodeId,
        weight: NodeId,
        bias: NodeId,
        padding: Padding,
    ) -> Result<NodeId> {
        let keep_cols = self.nodes[weight.0].requires_grad;
        let (out, cols) = conv2d_forward(
            self.value(input),
            self.value(weight),
            self.value(bias),
            padding,
            keep_cols,
        )?;
        let rg = self.any_requires_grad(&[input, weight, bias]);
        Ok(self.push(
            Op::Conv2d {
                input,
                weight,
                bias,
                padding,
                cols,
            },
            out,
            rg,
        ))
    }

    /// Elementwise `max(x, slope*x)`; the subgradient at zero is taken as 1.
    pub fn leaky_relu(&mut self, input: NodeId, slope: T) -> Result<NodeId> {
        if !(slope > T::zero() && slope < T::one()) {
            return Err(FusionError::InvalidArgument(format!(
                "leaky_relu slope must lie in (0,1), got {}",
                slope
            )));
        }
        let x = self.value(input);
        let data = map1(x.data(), |v| if v >= T::zero() { v } else { v * slope });
        let out = Tensor::new(x.shape(), data)?;
        let rg = self.nodes[input.0].requires_grad;
        Ok(self.push(Op::LeakyRelu { input, slope }, out, rg))
    }

    /// Elementwise hyperbolic tangent.
    pub fn tanh_act(&mut self, input: NodeId) -> NodeId {
        let x = self.value(input);
        let data = map1(x.data(), |v| v.tanh());
        let out = Tensor::new(x.shape(), data).expect("shape preserved");
        let rg = self.nodes[input.0].requires_grad;
        self.push(Op::Tanh { input }, out, rg)
    }

    /// Train-mode normalization: per-channel statistics over batch and
    /// spatial dims. Returns the batch statistics for running-state updates.
    pub fn norm_train(
        &mut self,
        input: NodeId,
        scale: NodeId,
        shift: NodeId,
    ) -> Result<(NodeId, NormUpdate<T>)> {
        let shape = self.value(input).shape();
        let m = shape.batch * shape.height * shape.width;
        if m == 0 {
            return Err(FusionError::InvalidShape(format!(
                "norm_layer: zero spatial extent in {}",
                shape
            )));
        }
        let channels = shape.channels;
        let x = self.value(input).data();
        let mut mean = vec![T::zero(); channels];
        let mut var = vec![T::zero(); channels];
        let mf = T::from_f64(m as f64);
        for c in 0..channels {
            let mut acc = T::zero();
            for_channel(shape, c, x, |v| acc = acc + v);
            let mu = acc / mf;
            let mut acc2 = T::zero();
            for_channel(shape, c, x, |v| {
                let d = v - mu;
                acc2 = acc2 + d * d;
            });
            mean[c] = mu;
            var[c] = acc2 / mf;
        }
        let update = NormUpdate {
            mean: mean.clone(),
            var: var.clone(),
        };
        let id = self.norm_common(input, scale, shift, mean, var, true)?;
        Ok((id, update))
    }

    /// Inference-mode normalization using running statistics.
    pub fn norm_infer(
        &mut self,
        input: NodeId,
        scale: NodeId,
        shift: NodeId,
        running_mean: &[T],
        running_var: &[T],
    ) -> Result<NodeId> {
        let shape = self.value(input).shape();
        if shape.batch * shape.height * shape.width == 0 {
            return Err(FusionError::InvalidShape(format!(
                "norm_layer: zero spatial extent in {}",
                shape
            )));
        }
        if running_mean.len() != shape.channels || running_var.len() != shape.channels {
            return Err(FusionError::InvalidShape(format!(
                "norm_layer: running stats cover {} channels, input has {}",
                running_mean.len(),
                shape.channels
            )));
        }
        self.norm_common(
            input,
            scale,
            shift,
            running_mean.to_vec(),
            running_var.to_vec(),
            false,
        )
    }

    fn norm_common(
        &mut self,
        input: NodeId,
        scale: NodeId,
        shift: NodeId,
        mean: Vec<T>,
        var: Vec<T>,
        batch_stats: bool,
    ) -> Result<NodeId> {
        let shape = self.value(input).shape();
        let per_channel = Shape::new(1, shape.channels, 1, 1);
        if self.value(scale).shape() != per_channel || self.value(shift).shape() != per_channel {
            return Err(FusionError::InvalidShape(format!(
                "norm_layer: scale/shift must be {}, got {} and {}",
                per_channel,
                self.value(scale).shape(),
                self.value(shift).shape()
            )));
        }
        let eps = T::from_f64(NORM_EPS);
        let inv_std: Vec<T> = var.iter().map(|&v| T::one() / (v + eps).sqrt()).collect();
        let x = self.value(input).data();
        let gamma = self.value(scale).data();
        let beta = self.value(shift).data();
        let plane = shape.height * shape.width;
        let channels = shape.channels;
        let mut data = vec![T::zero(); x.len()];
        let fill = |(bc, (dst, src)): (usize, (&mut [T], &[T]))| {
            let c = bc % channels;
            let (mu, is, g, b) = (mean[c], inv_std[c], gamma[c], beta[c]);
            for (d, &s) in dst.iter_mut().zip(src) {
                *d = (s - mu) * is * g + b;
            }
        };
        if x.len() >= PAR_MIN_LEN && plane > 0 {
            data.par_chunks_mut(plane)
                .zip(x.par_chunks(plane))
                .enumerate()
                .for_each(fill);
        } else if plane > 0 {
            data.chunks_mut(plane).zip(x.chunks(plane)).enumerate().for_each(fill);
        }
        let out = Tensor::new(shape, data)?;
        let rg = self.any_requires_grad(&[input, scale, shift]);
        Ok(self.push(
            Op::Norm {
                input,
                scale,
                shift,
                mean,
                inv_std,
                batch_stats,
            },
            out,
            rg,
        ))
    }

    /// First fusion rule: elementwise `max(a,b) / (a + b + eps*sign(a+b))`.
    /// Ties route the max subgradient to the first input.
    pub fn fuse_hf(&mut self, a: NodeId, b: NodeId, eps: T) -> Result<NodeId> {
        let shape = self.check_same_shape(a, b, "fuse_hf")?;
        let (xa, xb) = (self.value(a).data(), self.value(b).data());
        let data = zip_map(xa, xb, |va, vb| {
            let m = if va >= vb { va } else { vb };
            m / guarded_denom(va + vb, eps)
        });
        let out = Tensor::new(shape, data)?;
        let rg = self.any_requires_grad(&[a, b]);
        Ok(self.push(Op::FuseHf { a, b, eps }, out, rg))
    }

    /// Second fusion rule: elementwise mean of three equally weighted maps.
    pub fn fuse_lf(&mut self, a: NodeId, b: NodeId, c: NodeId) -> Result<NodeId> {
        let shape = self.check_same_shape(a, b, "fuse_lf")?;
        self.check_same_shape(a, c, "fuse_lf")?;
        let third = T::one() / T::from_f64(3.0);
        let (xa, xb, xc) = (
            self.value(a).data(),
            self.value(b).data(),
            self.value(c).data(),
        );
        let data = index_map(xa.len(), |i| (xa[i] + xb[i] + xc[i]) * third);
        let out = Tensor::new(shape, data)?;
        let rg = self.any_requires_grad(&[a, b, c]);
        Ok(self.push(Op::FuseLf { a, b, c }, out, rg))
    }

    pub fn add(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        let shape = self.check_same_shape(a, b, "add")?;
        let data = zip_map(self.value(a).data(), self.value(b).data(), |x, y| x + y);
        let out = Tensor::new(shape, data)?;
        let rg = self.any_requires_grad(&[a, b]);
        Ok(self.push(Op::Add { a, b }, out, rg))
    }

    pub fn sub(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        let shape = self.check_same_shape(a, b, "sub")?;
        let data = zip_map(self.value(a).data(), self.value(b).data(), |x, y| x - y);
        let out = Tensor::new(shape, data)?;
        let rg = self.any_requires_grad(&[a, b]);
        Ok(self.push(Op::Sub { a, b }, out, rg))
    }

    pub fn mul(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        let shape = self.check_same_shape(a, b, "mul")?;
        let data = zip_map(self.value(a).data(), self.value(b).data(), |x, y| x * y);
        let out = Tensor::new(shape, data)?;
        let rg = self.any_requires_grad(&[a, b]);
        Ok(self.push(Op::Mul { a, b }, out, rg))
    }

    pub fn div(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        let shape = self.check_same_shape(a, b, "div")?;
        let data = zip_map(self.value(a).data(), self.value(b).data(), |x, y| x / y);
        let out = Tensor::new(shape, data)?;
        let rg = self.any_requires_grad(&[a, b]);
        Ok(self.push(Op::Div { a, b }, out, rg))
    }

    /// Elementwise `mul*x + add`.
    pub fn affine(&mut self, input: NodeId, mul: T, add: T) -> NodeId {
        let x = self.value(input);
        let data = map1(x.data(), |v| mul * v + add);
        let out = Tensor::new(x.shape(), data).expect("shape preserved");
        let rg = self.nodes[input.0].requires_grad;
        self.push(Op::Affine { input, mul }, out, rg)
    }

    /// `sqrt(max(x, 0))` with derivative 0 on the clamped region.
    pub fn safe_sqrt(&mut self, input: NodeId) -> NodeId {
        let x = self.value(input);
        let data = map1(x.data(), |v| if v > T::zero() { v.sqrt() } else { T::zero() });
        let out = Tensor::new(x.shape(), data).expect("shape preserved");
        let rg = self.nodes[input.0].requires_grad;
        self.push(Op::SafeSqrt { input }, out, rg)
    }

    /// Mean of all elements, as a (1,1,1,1) scalar node.
    pub fn mean(&mut self, input: NodeId) -> NodeId {
        let x = self.value(input);
        let n = T::from_f64(x.numel() as f64);
        let mut acc = T::zero();
        for &v in x.data() {
            acc = acc + v;
        }
        let out = Tensor::new(Shape::new(1, 1, 1, 1), vec![acc / n]).unwrap();
        let rg = self.nodes[input.0].requires_grad;
        self.push(Op::Mean { input }, out, rg)
    }

    /// Sum of all elements, as a (1,1,1,1) scalar node.
    pub fn sum(&mut self, input: NodeId) -> NodeId {
        let x = self.value(input);
        let mut acc = T::zero();
        for &v in x.data() {
            acc = acc + v;
        }
        let out = Tensor::new(Shape::new(1, 1, 1, 1), vec![acc]).unwrap();
        let rg = self.nodes[input.0].requires_grad;
        self.push(Op::Sum { input }, out, rg)
    }

    /// Backward pass from a scalar loss node with unit seed.
    pub fn backward(&mut self, loss: NodeId) -> Result<()> {
        if self.value(loss).numel() != 1 {
            return Err(FusionError::InvalidArgument(format!(
                "backward: node value has shape {}, supply a seed for non-scalar outputs",
                self.value(loss).shape()
            )));
        }
        let seed = vec![T::one()];
        self.backward_seeded(loss, &seed)
    }

    /// Backward pass seeding the given node with an explicit upstream
    /// gradient (e.g. all ones to differentiate the sum of the output).
    pub fn backward_seeded(&mut self, node: NodeId, seed: &[T]) -> Result<()> {
        if seed.len() != self.value(node).numel() {
            return Err(FusionError::InvalidShape(format!(
                "backward seed has {} elements, node has {}",
                seed.len(),
                self.value(node).numel()
            )));
        }
        let mut grads: Vec<Option<Vec<T>>> = vec![None; self.nodes.len()];
        grads[node.0] = Some(seed.to_vec());

        for i in (0..=node.0).rev() {
            if grads[i].is_none() || !self.nodes[i].requires_grad {
                continue;
            }
            let g = grads[i].take().unwrap();
            self.backward_node(i, &g, &mut grads);
            grads[i] = Some(g);
        }

        for (i, node) in self.nodes.iter_mut().enumerate() {
            node.value.set_grad(grads[i].take());
        }
        Ok(())
    }

    fn accumulate(&self, grads: &mut [Option<Vec<T>>], id: NodeId, contrib: Vec<T>) {
        if !self.nodes[id.0].requires_grad {
            return;
        }
        match &mut grads[id.0] {
            Some(existing) => {
                for (e, c) in existing.iter_mut().zip(contrib) {
                    *e = *e + c;
                }
            }
            slot => *slot = Some(contrib),
        }
    }

    fn backward_node(&self, i: usize, g: &[T], grads: &mut [Option<Vec<T>>]) {
        match &self.nodes[i].op {
            Op::Leaf => {}
            Op::Conv2d {
                input,
                weight,
                bias,
                padding,
                cols,
            } => {
                let want = (
                    self.nodes[input.0].requires_grad,
                    self.nodes[weight.0].requires_grad,
                    self.nodes[bias.0].requires_grad,
                );
                let out = conv2d_backward(
                    self.value(*input),
                    self.value(*weight),
                    self.value(*bias),
                    *padding,
                    g,
                    cols.as_deref(),
                    want,
                )
                .expect("forward geometry revalidates");
                if let Some(dx) = out.input {
                    self.accumulate(grads, *input, dx);
                }
                if let Some(dw) = out.weight {
                    self.accumulate(grads, *weight, dw);
                }
                if let Some(db) = out.bias {
                    self.accumulate(grads, *bias, db);
                }
            }
            Op::LeakyRelu { input, slope } => {
                let x = self.value(*input).data();
                let slope = *slope;
                let dx = zip_map(g, x, |gi, xi| if xi >= T::zero() { gi } else { gi * slope });
                self.accumulate(grads, *input, dx);
            }
            Op::Tanh { input } => {
                let y = self.nodes[i].value.data();
                let dx = zip_map(g, y, |gi, yi| gi * (T::one() - yi * yi));
                self.accumulate(grads, *input, dx);
            }
            Op::Norm {
                input,
                scale,
                shift,
                mean,
                inv_std,
                batch_stats,
            } => {
                let shape = self.value(*input).shape();
                let x = self.value(*input).data();
                let gamma = self.value(*scale).data();
                let m = T::from_f64((shape.batch * shape.height * shape.width) as f64);
                let channels = shape.channels;

                let mut sum_dy = vec![T::zero(); channels];
                let mut sum_dy_xhat = vec![T::zero(); channels];
                for c in 0..channels {
                    let (mu, is) = (mean[c], inv_std[c]);
                    let (mut s1, mut s2) = (T::zero(), T::zero());
                    for_channel_idx(shape, c, |idx| {
                        let xhat = (x[idx] - mu) * is;
                        s1 = s1 + g[idx];
                        s2 = s2 + g[idx] * xhat;
                    });
                    sum_dy[c] = s1;
                    sum_dy_xhat[c] = s2;
                }

                if self.nodes[input.0].requires_grad {
                    let mut dx = vec![T::zero(); x.len()];
                    for c in 0..channels {
                        let (mu, is, ga) = (mean[c], inv_std[c], gamma[c]);
                        if *batch_stats {
                            let (s1m, s2m) = (sum_dy[c] / m, sum_dy_xhat[c] / m);
                            for_channel_idx(shape, c, |idx| {
                                let xhat = (x[idx] - mu) * is;
                                dx[idx] = ga * is * (g[idx] - s1m - xhat * s2m);
                            });
                        } else {
                            for_channel_idx(shape, c, |idx| {
                                dx[idx] = g[idx] * ga * is;
                            });
                        }
                    }
                    self.accumulate(grads, *input, dx);
                }
                if self.nodes[scale.0].requires_grad {
                    self.accumulate(grads, *scale, sum_dy_xhat);
                }
                if self.nodes[shift.0].requires_grad {
                    self.accumulate(grads, *shift, sum_dy);
                }
            }
            Op::FuseHf { a, b, eps } => {
                let (xa, xb) = (self.value(*a).data(), self.value(*b).data());
                let eps = *eps;
                let part = |first: bool| {
                    index_map(xa.len(), |idx| {
                        let (va, vb) = (xa[idx], xb[idx]);
                        let d = guarded_denom(va + vb, eps);
                        let mx = if va >= vb { va } else { vb };
                        let ind = if (va >= vb) == first { T::one() } else { T::zero() };
                        g[idx] * (ind * d - mx) / (d * d)
                    })
                };
                self.accumulate(grads, *a, part(true));
                self.accumulate(grads, *b, part(false));
            }
            Op::FuseLf { a, b, c } => {
                let third = T::one() / T::from_f64(3.0);
                let dg: Vec<T> = map1(g, |gi| gi * third);
                self.accumulate(grads, *a, dg.clone());
                self.accumulate(grads, *b, dg.clone());
                self.accumulate(grads, *c, dg);
            }
            Op::Add { a, b } => {
                self.accumulate(grads, *a, g.to_vec());
                self.accumulate(grads, *b, g.to_vec());
            }
            Op::Sub { a, b } => {
                self.accumulate(grads, *a, g.to_vec());
                self.accumulate(grads, *b, g.iter().map(|&v| -v).collect());
            }
            Op::Mul { a, b } => {
                let (xa, xb) = (self.value(*a).data(), self.value(*b).data());
                self.accumulate(grads, *a, zip_map(g, xb, |gi, bi| gi * bi));
                self.accumulate(grads, *b, zip_map(g, xa, |gi, ai| gi * ai));
            }
            Op::Div { a, b } => {
                let (xa, xb) = (self.value(*a).data(), self.value(*b).data());
                let da = zip_map(g, xb, |gi, bi| gi / bi);
                let db = index_map(g.len(), |idx| -g[idx] * xa[idx] / (xb[idx] * xb[idx]));
                self.accumulate(grads, *a, da);
                self.accumulate(grads, *b, db);
            }
            Op::Affine { input, mul } => {
                let mul = *mul;
                self.accumulate(grads, *input, map1(g, |gi| gi * mul));
            }
            Op::SafeSqrt { input } => {
                let x = self.value(*input).data();
                let y = self.nodes[i].value.data();
                let half = T::from_f64(0.5);
                let dx = index_map(g.len(), |idx| {
                    if x[idx] > T::zero() {
                        g[idx] * half / y[idx]
                    } else {
                        T::zero()
                    }
                });
                self.accumulate(grads, *input, dx);
            }
            Op::Mean { input } => {
                let n = self.value(*input).numel();
                let gi = g[0] / T::from_f64(n as f64);
                self.accumulate(grads, *input, vec![gi; n]);
            }
            Op::Sum { input } => {
                let n = self.value(*input).numel();
                self.accumulate(grads, *input, vec![g[0]; n]);
            }
        }
    }
}

#[inline]
fn guarded_denom<T: Element>(s: T, eps: T) -> T {
    // Sign-preserving guard; sign(0) treated as +1 so |denominator| >= eps.
    if s >= T::zero() {
        s + eps
    } else {
        s - eps
    }
}

/// Elementwise maps switch to rayon beyond this length; chunk boundaries
/// never affect values, so results stay bitwise reproducible.
const PAR_MIN_LEN: usize = 1 << 20;

fn map1<T: Element>(x: &[T], f: impl Fn(T) -> T + Send + Sync) -> Vec<T> {
    if x.len() >= PAR_MIN_LEN {
        x.par_iter().map(|&v| f(v)).collect()
    } else {
        x.iter().map(|&v| f(v)).collect()
    }
}

fn zip_map<T: Element>(a: &[T], b: &[T], f: impl Fn(T, T) -> T + Send + Sync) -> Vec<T> {
    if a.len() >= PAR_MIN_LEN {
        a.par_iter().zip(b).map(|(&x, &y)| f(x, y)).collect()
    } else {
        a.iter().zip(b).map(|(&x, &y)| f(x, y)).collect()
    }
}

fn index_map<T: Element>(len: usize, f: impl Fn(usize) -> T + Send + Sync) -> Vec<T> {
    if len >= PAR_MIN_LEN {
        (0..len).into_par_iter().map(f).collect()
    } else {
        (0..len).map(f).collect()
    }
}

#[inline]
fn for_channel<T: Element>(shape: Shape, c: usize, data: &[T], mut f: impl FnMut(T)) {
    for_channel_idx(shape, c, |i| f(data[i]));
}

#[inline]
fn for_channel_idx(shape: Shape, c: usize, mut f: impl FnMut(usize)) {
    let plane = shape.height * shape.width;
    for b in 0..shape.batch {
        let base = (b * shape.channels + c) * plane;
        for i in base..base + plane {
            f(i);
        }
    }
}
