use serde::{Deserialize, Serialize};

use super::Tensor;
use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct AdamConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self {
            lr: 2e-4,
            beta1: 0.0,
            beta2: 0.9,
            eps: 1e-8,
        }
    }
}

/// Moment estimates for a fixed list of parameter tensors.
#[derive(Clone, Debug, PartialEq)]
pub struct AdamState {
    pub config: AdamConfig,
    pub step: u64,
    m: Vec<Vec<f64>>,
    v: Vec<Vec<f64>>,
}

impl AdamState {
    pub fn new(config: AdamConfig, params: &[Tensor]) -> Self {
        Self {
            config,
            step: 0,
            m: params.iter().map(|p| vec![0.0; p.numel()]).collect(),
            v: params.iter().map(|p| vec![0.0; p.numel()]).collect(),
        }
    }

    pub fn first_moment(&self) -> &[Vec<f64>] {
        &self.m
    }

    pub fn second_moment(&self) -> &[Vec<f64>] {
        &self.v
    }

    /// One bias-corrected Adam update of `params` in place.
    pub fn step(&mut self, params: &mut [Tensor], grads: &[Tensor]) -> Result<()> {
        if params.len() != self.m.len() || grads.len() != params.len() {
            return Err(Error::contract(format!(
                "adam tracks {} tensors, got {} params and {} grads",
                self.m.len(),
                params.len(),
                grads.len()
            )));
        }
        for (i, (p, g)) in params.iter().zip(grads).enumerate() {
            if p.shape() != g.shape() || p.numel() != self.m[i].len() {
                return Err(Error::contract(format!(
                    "adam slot {i}: param {:?} grad {:?}",
                    p.shape(),
                    g.shape()
                )));
            }
        }
        self.step += 1;
        let AdamConfig {
            lr,
            beta1,
            beta2,
            eps,
        } = self.config;
        let t = self.step as i32;
        let bc1 = 1.0 - beta1.powi(t);
        let bc2 = 1.0 - beta2.powi(t);
        for ((p, g), (m, v)) in params
            .iter_mut()
            .zip(grads)
            .zip(self.m.iter_mut().zip(self.v.iter_mut()))
        {
            for (((w, &gi), mi), vi) in p
                .data_mut()
                .iter_mut()
                .zip(g.data())
                .zip(m.iter_mut())
                .zip(v.iter_mut())
            {
                *mi = beta1 * *mi + (1.0 - beta1) * gi;
                *vi = beta2 * *vi + (1.0 - beta2) * gi * gi;
                let mhat = *mi / bc1;
                let vhat = *vi / bc2;
                *w -= lr * mhat / (vhat.sqrt() + eps);
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn t(data: &[f64]) -> Tensor {
        Tensor::new(vec![data.len()], data.to_vec()).unwrap()
    }

    #[test]
    fn first_step_without_momentum_is_signed_lr() {
        let cfg = AdamConfig::default();
        let g = [0.3, -2.0, 1e-3];
        let mut params = vec![t(&[1.0, 1.0, 1.0])];
        let mut st = AdamState::new(cfg, &params);
        st.step(&mut params, &[t(&g)]).unwrap();
        for (w, gi) in params[0].data().iter().zip(g) {
            // scalar hand computation: m = g, v = 0.1 g^2, vhat = g^2
            let want = 1.0 - cfg.lr * gi / (gi.abs() + cfg.eps);
            assert!((w - want).abs() < 1e-15);
            assert!((w - (1.0 - cfg.lr * gi.signum())).abs() < cfg.lr * 1e-4);
        }
        assert_eq!(st.step, 1);
    }

    #[test]
    fn zero_gradient_leaves_params() {
        let mut params = vec![t(&[0.5, -0.25])];
        let mut st = AdamState::new(AdamConfig::default(), &params);
        st.step(&mut params, &[t(&[0.0, 0.0])]).unwrap();
        assert_eq!(params[0].data(), &[0.5, -0.25]);
    }

    #[test]
    fn identical_calls_are_bit_identical() {
        let params = vec![t(&[0.5, -0.25, 3.0])];
        let grads = vec![t(&[0.1, 0.2, -0.7])];
        let mut st = AdamState::new(AdamConfig { beta1: 0.5, ..AdamConfig::default() }, &params);
        let mut warm = params.clone();
        st.step(&mut warm, &grads).unwrap();
        let (mut p1, mut s1) = (warm.clone(), st.clone());
        let (mut p2, mut s2) = (warm.clone(), st.clone());
        s1.step(&mut p1, &grads).unwrap();
        s2.step(&mut p2, &grads).unwrap();
        assert_eq!(p1, p2);
        assert_eq!(s1, s2);
        assert!(s1.second_moment()[0].iter().all(|&v| v >= 0.0));
    }

    #[test]
    fn shape_mismatch_is_contract_error() {
        let mut params = vec![t(&[0.5, -0.25])];
        let mut st = AdamState::new(AdamConfig::default(), &params);
        assert!(matches!(
            st.step(&mut params, &[t(&[1.0])]),
            Err(Error::Contract(_))
        ));
    }
}
