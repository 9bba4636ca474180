use std::collections::HashMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::models::SliceId;

#[derive(Debug, Error, Clone, PartialEq)]
#[error("gradient for {slice:?} has length {got}, expected {expected}")]
pub struct ShapeMismatch {
    pub slice: SliceId,
    pub got: usize,
    pub expected: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AdamConfig {
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        AdamConfig {
            learning_rate: 0.001,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
        }
    }
}

#[derive(Debug, Clone)]
struct Moments {
    first: Vec<f64>,
    second: Vec<f64>,
    steps: u64,
}

/// Lazy Adam: moments exist only for slices that have received a gradient,
/// and each slice's bias correction uses its own step count.
#[derive(Debug, Clone, Default)]
pub struct OptimizerState {
    slices: HashMap<SliceId, Moments>,
}

impl OptimizerState {
    pub fn new() -> Self {
        Self::default()
    }

    /// Number of updates applied to `slice` so far.
    pub fn steps(&self, slice: SliceId) -> u64 {
        self.slices.get(&slice).map_or(0, |m| m.steps)
    }

    pub fn touched_slices(&self) -> usize {
        self.slices.len()
    }

    /// Advances the slice's moments with `grad` and returns the additive
    /// parameter update. An all-zero gradient counts as no touch: the state
    /// is left alone and the delta is zero.
    pub fn step(
        &mut self,
        slice: SliceId,
        grad: &[f64],
        param_len: usize,
        config: &AdamConfig,
    ) -> Result<Vec<f64>, ShapeMismatch> {
        if grad.len() != param_len {
            return Err(ShapeMismatch {
                slice,
                got: grad.len(),
                expected: param_len,
            });
        }
        if grad.iter().all(|g| *g == 0.0) {
            return Ok(vec![0.0; grad.len()]);
        }
        let m = self.slices.entry(slice).or_insert_with(|| Moments {
            first: vec![0.0; param_len],
            second: vec![0.0; param_len],
            steps: 0,
        });
        if m.first.len() != param_len {
            return Err(ShapeMismatch {
                slice,
                got: param_len,
                expected: m.first.len(),
            });
        }
        m.steps += 1;
        let AdamConfig {
            learning_rate,
            beta1,
            beta2,
            epsilon,
        } = *config;
        let t = m.steps.min(i32::MAX as u64) as i32;
        let correction1 = 1.0 - beta1.powi(t);
        let correction2 = 1.0 - beta2.powi(t);
        let delta = grad
            .iter()
            .zip(m.first.iter_mut().zip(m.second.iter_mut()))
            .map(|(&g, (m1, m2))| {
                *m1 = beta1 * *m1 + (1.0 - beta1) * g;
                *m2 = beta2 * *m2 + (1.0 - beta2) * g * g;
                let m_hat = *m1 / correction1;
                let v_hat = *m2 / correction2;
                -learning_rate * m_hat / (v_hat.sqrt() + epsilon)
            })
            .collect();
        Ok(delta)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::models::ParamName;

    const SLICE: SliceId = SliceId::new(ParamName::Entity, 0);

    #[test]
    fn first_step_of_unit_gradient() {
        let mut s = OptimizerState::new();
        let d = s.step(SLICE, &[1.0], 1, &AdamConfig::default()).unwrap();
        // m̂ = 1, v̂ = 1 after bias correction
        let expected = -0.001 * (1.0 / (1.0 + 1e-8));
        assert!((d[0] - expected).abs() < 1e-18, "{}", d[0]);
        assert!((d[0] + 0.000999999990).abs() < 1e-15);
        assert_eq!(s.steps(SLICE), 1);
    }

    #[test]
    fn zero_gradient_on_fresh_slice_is_a_no_op() {
        let mut s = OptimizerState::new();
        let d = s
            .step(SLICE, &[0.0, 0.0], 2, &AdamConfig::default())
            .unwrap();
        assert_eq!(d, vec![0.0, 0.0]);
        assert_eq!(s.steps(SLICE), 0);
        assert_eq!(s.touched_slices(), 0);
    }

    #[test]
    fn second_step_does_not_grow() {
        let mut s = OptimizerState::new();
        let cfg = AdamConfig::default();
        let d1 = s.step(SLICE, &[1.0], 1, &cfg).unwrap()[0];
        let d2 = s.step(SLICE, &[1.0], 1, &cfg).unwrap()[0];
        assert!(d2.abs() <= d1.abs() * 1.01);
        assert_eq!(s.steps(SLICE), 2);
    }

    #[test]
    fn step_counts_are_per_slice() {
        let mut s = OptimizerState::new();
        let cfg = AdamConfig::default();
        let other = SliceId::new(ParamName::Entity, 1);
        s.step(SLICE, &[1.0], 1, &cfg).unwrap();
        s.step(SLICE, &[1.0], 1, &cfg).unwrap();
        let fresh = s.step(other, &[1.0], 1, &cfg).unwrap()[0];
        // a slice seeing its first update gets the full bias-corrected step
        assert!((fresh + 0.001 / (1.0 + 1e-8)).abs() < 1e-18);
        assert_eq!(s.steps(other), 1);
    }

    #[test]
    fn shape_mismatch() {
        let mut s = OptimizerState::new();
        let cfg = AdamConfig::default();
        assert!(s.step(SLICE, &[1.0, 2.0], 3, &cfg).is_err());
        s.step(SLICE, &[1.0], 1, &cfg).unwrap();
        assert!(s.step(SLICE, &[1.0, 1.0], 2, &cfg).is_err());
    }
}
