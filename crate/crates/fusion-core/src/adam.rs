//! Adam optimizer with standard bias correction.

use crate::error::{FusionError, Result};
use crate::params::ParamSet;

/// Moment decay rates and stability epsilon.
#[derive(Clone, Copy, Debug)]
pub struct AdamConfig {
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        AdamConfig {
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
        }
    }
}

/// First/second moment estimates per parameter tensor plus the step counter.
#[derive(Clone, Debug)]
pub struct AdamState {
    config: AdamConfig,
    step: u64,
    m: Vec<Vec<f64>>,
    v: Vec<Vec<f64>>,
}

impl AdamState {
    pub fn new(params: &ParamSet) -> Self {
        Self::with_config(params, AdamConfig::default())
    }

    pub fn with_config(params: &ParamSet, config: AdamConfig) -> Self {
        let m = params
            .params()
            .iter()
            .map(|p| vec![0.0; p.tensor.numel()])
            .collect::<Vec<_>>();
        let v = m.clone();
        AdamState {
            config,
            step: 0,
            m,
            v,
        }
    }

    pub fn step_count(&self) -> u64 {
        self.step
    }
}

/// One bias-corrected Adam update. `grads` is aligned with the parameter
/// order; a `None` entry is treated as a zero gradient (moments still decay).
pub fn adam_step(
    params: &mut ParamSet,
    grads: &[Option<Vec<f64>>],
    state: &mut AdamState,
    lr: f64,
) -> Result<()> {
    if grads.len() != params.params().len() {
        return Err(FusionError::InvalidArgument(format!(
            "adam_step: {} gradients for {} parameters",
            grads.len(),
            params.params().len()
        )));
    }
    for (i, g) in grads.iter().enumerate() {
        if let Some(g) = g {
            if g.len() != params.tensor_at(i).numel() {
                return Err(FusionError::InvalidShape(format!(
                    "adam_step: gradient {} has {} elements, parameter has {}",
                    params.params()[i].name,
                    g.len(),
                    params.tensor_at(i).numel()
                )));
            }
        }
    }

    state.step += 1;
    let t = state.step as i32;
    let AdamConfig {
        beta1,
        beta2,
        epsilon,
    } = state.config;
    let bc1 = 1.0 - beta1.powi(t);
    let bc2 = 1.0 - beta2.powi(t);

    for i in 0..grads.len() {
        let m = &mut state.m[i];
        let v = &mut state.v[i];
        let data = params.tensor_at_mut(i).data_mut();
        for j in 0..data.len() {
            let g = grads[i].as_ref().map_or(0.0, |g| g[j]);
            m[j] = beta1 * m[j] + (1.0 - beta1) * g;
            v[j] = beta2 * v[j] + (1.0 - beta2) * g * g;
            let m_hat = m[j] / bc1;
            let v_hat = v[j] / bc2;
            data[j] -= lr * m_hat / (v_hat.sqrt() + epsilon);
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::config::FusionConfig;

    fn setup() -> (ParamSet, AdamState) {
        let params = ParamSet::init(&FusionConfig::default(), 1).unwrap();
        let state = AdamState::new(&params);
        (params, state)
    }

    fn unit_grads(params: &ParamSet, idx: usize, g: f64) -> Vec<Option<Vec<f64>>> {
        params
            .params()
            .iter()
            .enumerate()
            .map(|(i, p)| (i == idx).then(|| vec![g; p.tensor.numel()]))
            .collect()
    }

    #[test]
    fn first_step_magnitude_is_about_lr() {
        // Hand-computed step 1: m_hat = g, v_hat = g^2, so the update is
        // lr * g / (|g| + eps) = lr * sign(g) * |g| / (|g| + eps).
        let (mut params, mut state) = setup();
        let idx = params.index_of("recon.2.bias").unwrap();
        let before = params.tensor_at(idx).data()[0];
        let g = 0.37;
        let grads = unit_grads(&params, idx, g);
        adam_step(&mut params, &grads, &mut state, 0.002).unwrap();
        let after = params.tensor_at(idx).data()[0];
        let expect = 0.002 * g / (g + 1e-8);
        assert!((before - after - expect).abs() < 1e-12);
        assert!(((before - after).abs() - 0.002).abs() < 1e-6);
    }

    #[test]
    fn zero_gradient_leaves_params_unchanged() {
        let (mut params, mut state) = setup();
        let snapshot: Vec<Vec<f64>> = params
            .params()
            .iter()
            .map(|p| p.tensor.data().to_vec())
            .collect();
        let grads: Vec<Option<Vec<f64>>> = vec![None; params.params().len()];
        for _ in 0..3 {
            adam_step(&mut params, &grads, &mut state, 0.002).unwrap();
        }
        assert_eq!(state.step_count(), 3);
        for (p, before) in params.params().iter().zip(&snapshot) {
            assert_eq!(p.tensor.data(), before.as_slice(), "{}", p.name);
        }
    }

    #[test]
    fn zero_grad_after_nonzero_step_drifts_by_moment_recurrence() {
        let (mut params, mut state) = setup();
        let idx = params.index_of("recon.2.bias").unwrap();
        let g = 0.5;
        let lr = 0.002;
        let (b1, b2, eps): (f64, f64, f64) = (0.9, 0.999, 1e-8);

        let mut expected = params.tensor_at(idx).data()[0];
        let mut m = 0.0;
        let mut v = 0.0;
        for t in 1..=3u32 {
            let gt = if t == 1 { g } else { 0.0 };
            m = b1 * m + (1.0 - b1) * gt;
            v = b2 * v + (1.0 - b2) * gt * gt;
            let m_hat = m / (1.0 - b1.powi(t as i32));
            let v_hat: f64 = v / (1.0 - b2.powi(t as i32));
            expected -= lr * m_hat / (v_hat.sqrt() + eps);

            let grads = if t == 1 {
                unit_grads(&params, idx, g)
            } else {
                vec![None; params.params().len()]
            };
            adam_step(&mut params, &grads, &mut state, lr).unwrap();
        }
        let actual = params.tensor_at(idx).data()[0];
        assert!((actual - expected).abs() < 1e-15);
        // The zero-grad steps still move the parameter (decaying momentum).
        let after_step1_only = {
            let (mut p2, mut s2) = setup();
            let grads = unit_grads(&p2, idx, g);
            adam_step(&mut p2, &grads, &mut s2, lr).unwrap();
            p2.tensor_at(idx).data()[0]
        };
        assert!((actual - after_step1_only).abs() > 1e-6);
    }

    #[test]
    fn lr_zero_never_moves_params() {
        let (mut params, mut state) = setup();
        let snapshot: Vec<Vec<f64>> = params
            .params()
            .iter()
            .map(|p| p.tensor.data().to_vec())
            .collect();
        for i in 0..params.params().len() {
            let grads = unit_grads(&params, i, 1.25);
            adam_step(&mut params, &grads, &mut state, 0.0).unwrap();
        }
        for (p, before) in params.params().iter().zip(&snapshot) {
            assert_eq!(p.tensor.data(), before.as_slice());
        }
    }

    #[test]
    fn mismatched_grad_length_is_rejected() {
        let (mut params, mut state) = setup();
        let mut grads: Vec<Option<Vec<f64>>> = vec![None; params.params().len()];
        grads[0] = Some(vec![0.0; 3]);
        assert!(adam_step(&mut params, &grads, &mut state, 0.002).is_err());
    }
}
