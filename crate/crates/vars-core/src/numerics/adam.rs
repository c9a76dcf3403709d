//! Adam optimizer over named parameter collections.

use crate::error::{Result, VarsError};
use crate::numerics::tensor::Tensor;
use serde::{Deserialize, Serialize};

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct AdamConfig {
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        AdamConfig {
            learning_rate: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
        }
    }
}

/// Per-parameter moment buffers plus the shared step counter. Buffers are
/// indexed positionally, so the parameter list must keep a stable order
/// across steps.
#[derive(Clone, Debug)]
pub struct AdamState {
    pub config: AdamConfig,
    pub step: u64,
    first_moment: Vec<Vec<f64>>,
    second_moment: Vec<Vec<f64>>,
}

impl AdamState {
    pub fn new(config: AdamConfig, param_lens: &[usize]) -> Self {
        AdamState {
            config,
            step: 0,
            first_moment: param_lens.iter().map(|&n| vec![0.0; n]).collect(),
            second_moment: param_lens.iter().map(|&n| vec![0.0; n]).collect(),
        }
    }

    /// One Adam update over all parameters. `grads[i]` pairs with `params[i]`.
    pub fn step(&mut self, params: &mut [Tensor], grads: &[Tensor]) -> Result<()> {
        if params.len() != self.first_moment.len() || grads.len() != params.len() {
            return Err(VarsError::Contract(format!(
                "adam_step: {} params, {} grads, state for {}",
                params.len(),
                grads.len(),
                self.first_moment.len()
            )));
        }
        for (i, (p, g)) in params.iter().zip(grads).enumerate() {
            if p.shape() != g.shape() || p.len() != self.first_moment[i].len() {
                return Err(VarsError::ShapeMismatch {
                    op: "adam_step".into(),
                    detail: format!(
                        "param {} shape {:?} vs grad {:?} vs moments {}",
                        i,
                        p.shape(),
                        g.shape(),
                        self.first_moment[i].len()
                    ),
                });
            }
            if !g.all_finite() {
                return Err(VarsError::NumericOverflow {
                    op: format!("adam_step gradient {i}"),
                });
            }
        }

        self.step += 1;
        let t = self.step as i32;
        let c = &self.config;
        let bias1 = 1.0 - c.beta1.powi(t);
        let bias2 = 1.0 - c.beta2.powi(t);

        for ((p, g), (m, v)) in params
            .iter_mut()
            .zip(grads)
            .zip(self.first_moment.iter_mut().zip(&mut self.second_moment))
        {
            for (k, pv) in p.data_mut().iter_mut().enumerate() {
                let gv = g.data()[k];
                m[k] = c.beta1 * m[k] + (1.0 - c.beta1) * gv;
                v[k] = c.beta2 * v[k] + (1.0 - c.beta2) * gv * gv;
                let m_hat = m[k] / bias1;
                let v_hat = v[k] / bias2;
                *pv -= c.learning_rate * m_hat / (v_hat.sqrt() + c.epsilon);
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn first_step_with_unit_gradient_moves_by_learning_rate() {
        // Bias correction makes m_hat = v_hat = 1 on step one, so the update
        // is lr / (1 + eps) per coordinate.
        let mut params = vec![Tensor::full(vec![2, 2], 0.5)];
        let grads = vec![Tensor::full(vec![2, 2], 1.0)];
        let mut state = AdamState::new(AdamConfig::default(), &[4]);
        state.step(&mut params, &grads).unwrap();
        for &p in params[0].data() {
            assert!((p - (0.5 - 1e-3)).abs() < 1e-9, "param {p}");
        }
        assert_eq!(state.step, 1);
    }

    #[test]
    fn zero_gradient_leaves_parameters_unchanged() {
        let mut params = vec![Tensor::full(vec![3, 1], 0.25)];
        let grads = vec![Tensor::zeros(vec![3, 1])];
        let mut state = AdamState::new(AdamConfig::default(), &[3]);
        state.step(&mut params, &grads).unwrap();
        for &p in params[0].data() {
            assert_eq!(p, 0.25);
        }
    }

    #[test]
    fn identical_states_give_identical_updates() {
        let grads = vec![Tensor::new(vec![2, 1], vec![0.3, -0.7]).unwrap()];
        let run = || {
            let mut params = vec![Tensor::new(vec![2, 1], vec![1.0, -1.0]).unwrap()];
            let mut state = AdamState::new(AdamConfig::default(), &[2]);
            for _ in 0..5 {
                state.step(&mut params, &grads).unwrap();
            }
            params[0].data().to_vec()
        };
        assert_eq!(run(), run());
    }

    #[test]
    fn shape_mismatch_is_rejected() {
        let mut params = vec![Tensor::zeros(vec![2, 2])];
        let grads = vec![Tensor::zeros(vec![2, 3])];
        let mut state = AdamState::new(AdamConfig::default(), &[4]);
        assert!(state.step(&mut params, &grads).is_err());
    }

    #[test]
    fn matches_hand_run_recurrence_for_two_steps() {
        // Hand evaluation with lr=0.1, beta1=0.9, beta2=0.999, eps=1e-8,
        // scalar param 1.0, gradients 2.0 then 1.0:
        //   step 1: m=0.2, v=0.004, m^=2, v^=4, p = 1 - 0.1*2/(2+1e-8)
        //   step 2: m=0.28, v=0.004996, m^=1.47368..., v^=2.49925...,
        //           p -= 0.1 * m^ / (sqrt(v^)+1e-8)
        let cfg = AdamConfig {
            learning_rate: 0.1,
            ..AdamConfig::default()
        };
        let mut params = vec![Tensor::scalar(1.0)];
        let mut state = AdamState::new(cfg, &[1]);
        state.step(&mut params, &[Tensor::scalar(2.0)]).unwrap();
        let after1 = params[0].item();
        assert!((after1 - (1.0 - 0.1 * 2.0 / (2.0 + 1e-8))).abs() < 1e-12);

        state.step(&mut params, &[Tensor::scalar(1.0)]).unwrap();
        let m = 0.9 * 0.2 + 0.1 * 1.0;
        let v = 0.999 * 0.004 + 0.001 * 1.0;
        let m_hat = m / (1.0 - 0.9f64.powi(2));
        let v_hat = v / (1.0 - 0.999f64.powi(2));
        let expect = after1 - 0.1 * m_hat / (v_hat.sqrt() + 1e-8);
        assert!((params[0].item() - expect).abs() < 1e-12);
    }
}
