//! Gradient-based color visualization: aggregate partial derivatives of the
//! fused image with respect to each input, composited as HSV with the
//! functional contribution colorized over the anatomical value channel.

use crate::autodiff::{NodeId, Tape};
use crate::error::{FusionError, Result};
use crate::imageio::ImagePair;
use crate::network::{forward, GradTargets, Mode};
use crate::params::ParamSet;

/// Aggregate input-gradient maps of one fused image: for each input pixel,
/// the sum over all output pixels of the partial derivative of the fused
/// image with respect to that input pixel.
#[derive(Clone, Debug)]
pub struct GradientPair {
    pub height: usize,
    pub width: usize,
    pub anatomical: Vec<f64>,
    pub functional: Vec<f64>,
}

impl GradientPair {
    /// Absolute-value variant, for magnitude-based rendering.
    pub fn magnitude(&self) -> GradientPair {
        GradientPair {
            height: self.height,
            width: self.width,
            anatomical: self.anatomical.iter().map(|v| v.abs()).collect(),
            functional: self.functional.iter().map(|v| v.abs()).collect(),
        }
    }
}

/// Seeds the output node with ones and extracts the gradient maps of the two
/// input nodes. One backward pass yields both maps; an input the output does
/// not depend on gets an all-zero map.
pub fn aggregate_input_gradients(
    tape: &mut Tape<f64>,
    output: NodeId,
    input_a: NodeId,
    input_b: NodeId,
) -> Result<GradientPair> {
    let shape = tape.value(input_a).shape();
    if tape.value(input_b).shape() != shape {
        return Err(FusionError::InvalidShape(format!(
            "input shapes differ: {} vs {}",
            shape,
            tape.value(input_b).shape()
        )));
    }
    let seed = vec![1.0; tape.value(output).numel()];
    tape.backward_seeded(output, &seed)?;
    let n = shape.numel();
    let take = |tape: &Tape<f64>, id: NodeId| -> Vec<f64> {
        tape.grad(id).map_or_else(|| vec![0.0; n], |g| g.to_vec())
    };
    Ok(GradientPair {
        height: shape.height,
        width: shape.width,
        anatomical: take(tape, input_a),
        functional: take(tape, input_b),
    })
}

/// Runs one inference forward and one seeded backward pass to obtain both
/// per-input gradient maps. Requires trained parameters.
pub fn input_gradients(params: &ParamSet, pair: &ImagePair) -> Result<GradientPair> {
    if params.steps_trained() == 0 {
        return Err(FusionError::UntrainedParams(
            "input gradients need a trained checkpoint; run training first".into(),
        ));
    }
    params.validate_shapes()?;
    let mut pass = forward::<f64>(params, pair, Mode::Infer, GradTargets::inputs())?;
    aggregate_input_gradients(
        &mut pass.tape,
        pass.output,
        pass.input_anatomical,
        pass.input_functional,
    )
}

/// Linearly interpolated percentile of a sorted slice.
fn percentile(sorted: &[f64], pct: f64) -> f64 {
    let n = sorted.len();
    if n == 1 {
        return sorted[0];
    }
    let pos = (pct / 100.0).clamp(0.0, 1.0) * (n - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    let frac = pos - lo as f64;
    sorted[lo] + (sorted[hi] - sorted[lo]) * frac
}

/// Robust rescale of an unbounded map into [0,1]: clamp at the given
/// percentiles, then map linearly. A (near-)constant map becomes all 0.5.
pub fn normalize_map(map: &[f64], lo_pct: f64, hi_pct: f64) -> Vec<f64> {
    if map.is_empty() {
        return Vec::new();
    }
    let mut sorted = map.to_vec();
    sorted.sort_by(|a, b| a.partial_cmp(b).expect("finite map"));
    let lo = percentile(&sorted, lo_pct);
    let hi = percentile(&sorted, hi_pct);
    let span = hi - lo;
    if span.abs() < 1e-12 {
        return vec![0.5; map.len()];
    }
    map.iter()
        .map(|v| ((v - lo) / span).clamp(0.0, 1.0))
        .collect()
}

/// HSV planes of a composite prior to RGB conversion. Hue in degrees.
#[derive(Clone, Debug)]
pub struct HsvPlanes {
    pub height: usize,
    pub width: usize,
    pub hue_deg: Vec<f64>,
    pub saturation: Vec<f64>,
    pub value: Vec<f64>,
}

/// Builds the HSV planes: the normalized functional map drives hue over a
/// blue-to-red ramp and carries saturation `omega`; the normalized
/// anatomical map is the value channel.
pub fn composite_hsv(gp: &GradientPair, omega: f64) -> Result<HsvPlanes> {
    if !(0.0..=1.0).contains(&omega) {
        return Err(FusionError::InvalidArgument(format!(
            "omega must lie in [0,1], got {}",
            omega
        )));
    }
    let t = normalize_map(&gp.functional, 1.0, 99.0);
    let value = normalize_map(&gp.anatomical, 1.0, 99.0);
    let hue_deg: Vec<f64> = t.iter().map(|&v| 240.0 * (1.0 - v)).collect();
    let saturation = vec![omega; gp.functional.len()];
    Ok(HsvPlanes {
        height: gp.height,
        width: gp.width,
        hue_deg,
        saturation,
        value,
    })
}

/// Standard HSV to RGB conversion; hue in degrees, all outputs in [0,1].
pub fn hsv_to_rgb(h_deg: f64, s: f64, v: f64) -> (f64, f64, f64) {
    let h = (h_deg.rem_euclid(360.0)) / 60.0;
    let c = v * s;
    let x = c * (1.0 - (h.rem_euclid(2.0) - 1.0).abs());
    let (r1, g1, b1) = match h as u32 {
        0 => (c, x, 0.0),
        1 => (x, c, 0.0),
        2 => (0.0, c, x),
        3 => (0.0, x, c),
        4 => (x, 0.0, c),
        _ => (c, 0.0, x),
    };
    let m = v - c;
    (r1 + m, g1 + m, b1 + m)
}

/// Rendering provenance carried with a composite.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct Provenance {
    pub lambda: f64,
    pub omega: f64,
    pub checkpoint: String,
}

/// RGB visualization built from the two gradient maps.
#[derive(Clone, Debug)]
pub struct ColorComposite {
    pub height: usize,
    pub width: usize,
    /// Row-major H×W×3 channel values in [0,1].
    pub rgb: Vec<f64>,
    pub provenance: Provenance,
}

impl ColorComposite {
    pub fn with_provenance(mut self, provenance: Provenance) -> Self {
        self.provenance = provenance;
        self
    }
}

/// Full composite: HSV planes converted to RGB.
pub fn composite(gp: &GradientPair, omega: f64) -> Result<ColorComposite> {
    let planes = composite_hsv(gp, omega)?;
    let mut rgb = Vec::with_capacity(planes.hue_deg.len() * 3);
    for i in 0..planes.hue_deg.len() {
        let (r, g, b) = hsv_to_rgb(planes.hue_deg[i], planes.saturation[i], planes.value[i]);
        rgb.extend_from_slice(&[r, g, b]);
    }
    Ok(ColorComposite {
        height: planes.height,
        width: planes.width,
        rgb,
        provenance: Provenance {
            omega,
            ..Default::default()
        },
    })
}
