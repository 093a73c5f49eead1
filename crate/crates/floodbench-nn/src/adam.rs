//! Adam optimizer with bias correction, plus global-norm gradient clipping.

use serde::{Deserialize, Serialize};

use crate::error::NnError;
use crate::param::ParamSet;

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct AdamState {
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    pub step_count: u64,
    /// First-moment estimates, one buffer per parameter in set order.
    pub m: Vec<Vec<f64>>,
    /// Second-moment estimates.
    pub v: Vec<Vec<f64>>,
}

impl AdamState {
    pub fn new(learning_rate: f64, params: &ParamSet) -> Self {
        AdamState {
            learning_rate,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
            step_count: 0,
            m: params.iter().map(|p| vec![0.0; p.len()]).collect(),
            v: params.iter().map(|p| vec![0.0; p.len()]).collect(),
        }
    }

    /// One Adam update over all parameters.
    pub fn apply(&mut self, params: &mut ParamSet, grads: &[Vec<f64>]) -> Result<(), NnError> {
        if grads.len() != params.len() || self.m.len() != params.len() {
            return Err(NnError::InvalidArg(format!(
                "adam: {} grads, {} moment buffers, {} params",
                grads.len(),
                self.m.len(),
                params.len()
            )));
        }
        for (i, g) in grads.iter().enumerate() {
            if g.len() != params.get(i).len() {
                return Err(NnError::InvalidArg(format!(
                    "adam: grad {} has {} values, param has {}",
                    params.get(i).name,
                    g.len(),
                    params.get(i).len()
                )));
            }
        }
        self.step_count += 1;
        let t = self.step_count;
        let bc1 = 1.0 - self.beta1.powi(t as i32);
        let bc2 = 1.0 - self.beta2.powi(t as i32);
        for i in 0..params.len() {
            let p = params.get_mut(i);
            let m = &mut self.m[i];
            let v = &mut self.v[i];
            for j in 0..p.values.len() {
                let g = grads[i][j];
                m[j] = self.beta1 * m[j] + (1.0 - self.beta1) * g;
                v[j] = self.beta2 * v[j] + (1.0 - self.beta2) * g * g;
                let m_hat = m[j] / bc1;
                let v_hat = v[j] / bc2;
                p.values[j] -= self.learning_rate * m_hat / (v_hat.sqrt() + self.epsilon);
            }
            if !p.values.iter().all(|x| x.is_finite()) {
                return Err(NnError::NonFinite {
                    op: "adam_step",
                    what: "parameters",
                });
            }
        }
        Ok(())
    }
}

/// Scale all gradients so their global L2 norm is at most `max_norm`.
/// Returns the pre-clip norm.
pub fn clip_global_norm(grads: &mut [Vec<f64>], max_norm: f64) -> f64 {
    let norm_sq: f64 = grads
        .iter()
        .flat_map(|g| g.iter())
        .map(|&x| x * x)
        .sum();
    let norm = norm_sq.sqrt();
    if norm > max_norm && norm > 0.0 {
        let scale = max_norm / norm;
        for g in grads.iter_mut() {
            for x in g.iter_mut() {
                *x *= scale;
            }
        }
    }
    norm
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::param::Param;

    fn single_param(value: f64) -> ParamSet {
        let mut set = ParamSet::new();
        set.push(Param::new("w", vec![1], vec![value]).unwrap())
            .unwrap();
        set
    }

    #[test]
    fn zero_gradient_keeps_parameters() {
        let mut params = single_param(0.75);
        let mut adam = AdamState::new(1e-3, &params);
        adam.apply(&mut params, &[vec![0.0]]).unwrap();
        assert_eq!(params.get(0).values[0], 0.75);
    }

    #[test]
    fn first_step_matches_closed_form() {
        // With grad g: m̂ = g, v̂ = g², so Δ = lr·g/(|g|+ε) ≈ lr·sign(g).
        let mut params = single_param(1.0);
        let mut adam = AdamState::new(1e-3, &params);
        adam.apply(&mut params, &[vec![1.0]]).unwrap();
        let expected = 1.0 - 1e-3 * 1.0 / (1.0 + 1e-8);
        assert!((params.get(0).values[0] - expected).abs() < 1e-15);

        let mut params = single_param(1.0);
        let mut adam = AdamState::new(1e-3, &params);
        adam.apply(&mut params, &[vec![-0.05]]).unwrap();
        let expected = 1.0 + 1e-3 * 0.05 / (0.05 + 1e-8);
        assert!((params.get(0).values[0] - expected).abs() < 1e-12);
    }

    #[test]
    fn rejects_mismatched_grads() {
        let mut params = single_param(1.0);
        let mut adam = AdamState::new(1e-3, &params);
        assert!(adam.apply(&mut params, &[vec![1.0, 2.0]]).is_err());
        assert!(adam.apply(&mut params, &[]).is_err());
    }

    #[test]
    fn clipping_preserves_direction() {
        let mut grads = vec![vec![3.0, 0.0], vec![4.0]];
        let norm = clip_global_norm(&mut grads, 1.0);
        assert!((norm - 5.0).abs() < 1e-12);
        assert!((grads[0][0] - 0.6).abs() < 1e-12);
        assert!((grads[1][0] - 0.8).abs() < 1e-12);

        let mut small = vec![vec![0.3]];
        clip_global_norm(&mut small, 1.0);
        assert_eq!(small[0][0], 0.3); // under the cap: untouched
    }
}
