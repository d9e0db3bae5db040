//! Differentiable SSIM and the steerable SSIM + l2 total loss.

use crate::autodiff::{gaussian_window, Element, NodeId, Padding, Shape, Tape, Tensor};
use crate::error::{FusionError, Result};

/// Denominator form of the structure comparison term.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum StructureDenom {
    /// `sigma_i * sigma_j + C_s` (reference SSIM form; with `C_s = C_c/2`
    /// the l*c*s product collapses to the standard two-term SSIM).
    Product,
    /// `sigma_i + sigma_j + C_s`, kept for fidelity experiments.
    Sum,
}

/// SSIM window and stability constants. Luminance, contrast and structure
/// terms are weighted equally (unit exponents).
#[derive(Clone, Copy, Debug)]
pub struct SsimParams {
    pub window_size: usize,
    pub sigma_g: f64,
    pub c_l: f64,
    pub c_c: f64,
    pub c_s: f64,
    pub dynamic_range: f64,
    pub structure_denom: StructureDenom,
}

impl Default for SsimParams {
    fn default() -> Self {
        let l = 1.0;
        let c_l = (0.01 * l) * (0.01 * l);
        let c_c = (0.03 * l) * (0.03 * l);
        SsimParams {
            window_size: 11,
            sigma_g: 1.5,
            c_l,
            c_c,
            c_s: c_c / 2.0,
            dynamic_range: l,
            structure_denom: StructureDenom::Product,
        }
    }
}

impl SsimParams {
    fn validate(&self) -> Result<()> {
        if self.window_size % 2 == 0 || self.window_size < 3 {
            return Err(FusionError::InvalidArgument(format!(
                "ssim window must be odd and >= 3, got {}",
                self.window_size
            )));
        }
        if !(self.c_l > 0.0 && self.c_c > 0.0 && self.c_s > 0.0 && self.sigma_g > 0.0) {
            return Err(FusionError::InvalidArgument(
                "ssim constants and sigma_g must be positive".into(),
            ));
        }
        Ok(())
    }
}

/// Records the SSIM of two equally shaped nodes onto the tape and returns the
/// scalar node: mean over valid sliding windows of the luminance * contrast *
/// structure product, Gaussian-weighted within each window. Differentiable
/// with respect to both inputs.
pub fn ssim_node<T: Element>(
    tape: &mut Tape<T>,
    i: NodeId,
    j: NodeId,
    p: &SsimParams,
) -> Result<NodeId> {
    p.validate()?;
    let shape_i = tape.value(i).shape();
    let shape_j = tape.value(j).shape();
    if shape_i != shape_j {
        return Err(FusionError::InvalidShape(format!(
            "ssim: image shapes differ, {} vs {}",
            shape_i, shape_j
        )));
    }
    if shape_i.height < p.window_size || shape_i.width < p.window_size {
        return Err(FusionError::InvalidShape(format!(
            "ssim: image {} smaller than {}x{} window",
            shape_i, p.window_size, p.window_size
        )));
    }

    let window = gaussian_window::<T>(p.window_size, p.sigma_g)?;
    let w = tape.leaf(window, false);
    let zero_bias = tape.leaf(Tensor::zeros(Shape::new(1, 1, 1, 1)), false);

    let mu_i = tape.conv2d(i, w, zero_bias, Padding::Valid)?;
    let mu_j = tape.conv2d(j, w, zero_bias, Padding::Valid)?;

    let ii = tape.mul(i, i)?;
    let jj = tape.mul(j, j)?;
    let ij = tape.mul(i, j)?;
    let e_ii = tape.conv2d(ii, w, zero_bias, Padding::Valid)?;
    let e_jj = tape.conv2d(jj, w, zero_bias, Padding::Valid)?;
    let e_ij = tape.conv2d(ij, w, zero_bias, Padding::Valid)?;

    let mu_ii = tape.mul(mu_i, mu_i)?;
    let mu_jj = tape.mul(mu_j, mu_j)?;
    let mu_ij = tape.mul(mu_i, mu_j)?;
    let var_i = tape.sub(e_ii, mu_ii)?;
    let var_j = tape.sub(e_jj, mu_jj)?;
    let cov = tape.sub(e_ij, mu_ij)?;

    let sigma_i = tape.safe_sqrt(var_i);
    let sigma_j = tape.safe_sqrt(var_j);

    let (one, two) = (T::one(), T::from_f64(2.0));
    let (c_l, c_c, c_s) = (
        T::from_f64(p.c_l),
        T::from_f64(p.c_c),
        T::from_f64(p.c_s),
    );

    // l = (2 mu_i mu_j + C_l) / (mu_i^2 + mu_j^2 + C_l)
    let l_num = tape.affine(mu_ij, two, c_l);
    let l_den_sum = tape.add(mu_ii, mu_jj)?;
    let l_den = tape.affine(l_den_sum, one, c_l);
    let l = tape.div(l_num, l_den)?;

    // c = (2 sigma_i sigma_j + C_c) / (var_i + var_j + C_c)
    let sig_prod = tape.mul(sigma_i, sigma_j)?;
    let c_num = tape.affine(sig_prod, two, c_c);
    let c_den_sum = tape.add(var_i, var_j)?;
    let c_den = tape.affine(c_den_sum, one, c_c);
    let c = tape.div(c_num, c_den)?;

    // s = (cov + C_s) / (denom + C_s)
    let s_num = tape.affine(cov, one, c_s);
    let s_den = match p.structure_denom {
        StructureDenom::Product => tape.affine(sig_prod, one, c_s),
        StructureDenom::Sum => {
            let sum = tape.add(sigma_i, sigma_j)?;
            tape.affine(sum, one, c_s)
        }
    };
    let s = tape.div(s_num, s_den)?;

    let lc = tape.mul(l, c)?;
    let lcs = tape.mul(lc, s)?;
    Ok(tape.mean(lcs))
}

/// Records the l2 term: the sum of the two per-image root-mean-square
/// deviations between the fused image and each input.
pub fn l2_node<T: Element>(
    tape: &mut Tape<T>,
    f: NodeId,
    i1: NodeId,
    i2: NodeId,
) -> Result<NodeId> {
    let mut rms = |x: NodeId, y: NodeId| -> Result<NodeId> {
        let d = tape.sub(x, y)?;
        let sq = tape.mul(d, d)?;
        let m = tape.mean(sq);
        Ok(tape.safe_sqrt(m))
    };
    let r1 = rms(f, i1)?;
    let r2 = rms(f, i2)?;
    tape.add(r1, r2)
}

/// Scalar nodes of every loss component of one training step.
#[derive(Clone, Copy, Debug)]
pub struct LossNodes {
    /// 1 - SSIM(fused, anatomical)
    pub ssim_anat: NodeId,
    /// 1 - SSIM(fused, functional)
    pub ssim_func: NodeId,
    pub l2: NodeId,
    pub total: NodeId,
}

/// Records the steerable total loss
/// `lambda * [(1-SSIM(f,i1)) + (1-SSIM(f,i2))] + (1-lambda) * l2(f,i1,i2)`.
///
/// `i1`/`i2` are typically constant leaves, so the gradient flows to the
/// fused image only.
pub fn total_loss_node<T: Element>(
    tape: &mut Tape<T>,
    f: NodeId,
    i1: NodeId,
    i2: NodeId,
    lambda: f64,
    p: &SsimParams,
) -> Result<LossNodes> {
    if !(0.0..=1.0).contains(&lambda) {
        return Err(FusionError::InvalidArgument(format!(
            "lambda must lie in [0,1], got {}",
            lambda
        )));
    }
    let s1 = ssim_node(tape, f, i1, p)?;
    let s2 = ssim_node(tape, f, i2, p)?;
    let ssim_anat = tape.affine(s1, -T::one(), T::one());
    let ssim_func = tape.affine(s2, -T::one(), T::one());
    let ssim_term = tape.add(ssim_anat, ssim_func)?;
    let l2 = l2_node(tape, f, i1, i2)?;
    let weighted_ssim = tape.affine(ssim_term, T::from_f64(lambda), T::zero());
    let weighted_l2 = tape.affine(l2, T::from_f64(1.0 - lambda), T::zero());
    let total = tape.add(weighted_ssim, weighted_l2)?;
    Ok(LossNodes {
        ssim_anat,
        ssim_func,
        l2,
        total,
    })
}

/// SSIM of two (1,1,H,W)-shaped tensors, evaluated eagerly.
pub fn ssim(i: &Tensor<f64>, j: &Tensor<f64>, p: &SsimParams) -> Result<f64> {
    let mut tape = Tape::new();
    let a = tape.leaf(i.clone(), false);
    let b = tape.leaf(j.clone(), false);
    let node = ssim_node(&mut tape, a, b, p)?;
    Ok(tape.scalar(node))
}

/// l2 term of a fused image against the two inputs, evaluated eagerly.
pub fn l2_term(f: &Tensor<f64>, i1: &Tensor<f64>, i2: &Tensor<f64>) -> Result<f64> {
    let mut tape = Tape::new();
    let fnode = tape.leaf(f.clone(), false);
    let a = tape.leaf(i1.clone(), false);
    let b = tape.leaf(i2.clone(), false);
    let node = l2_node(&mut tape, fnode, a, b)?;
    Ok(tape.scalar(node))
}

/// Total loss evaluated eagerly.
pub fn total_loss(
    f: &Tensor<f64>,
    i1: &Tensor<f64>,
    i2: &Tensor<f64>,
    lambda: f64,
    p: &SsimParams,
) -> Result<f64> {
    let mut tape = Tape::new();
    let fnode = tape.leaf(f.clone(), false);
    let a = tape.leaf(i1.clone(), false);
    let b = tape.leaf(i2.clone(), false);
    let nodes = total_loss_node(&mut tape, fnode, a, b, lambda, p)?;
    Ok(tape.scalar(nodes.total))
}
