use serde::{Deserialize, Serialize};

use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RmspropConfig {
    pub lr: f64,
    /// Decay of the running mean of squared gradients.
    pub rho: f64,
    pub eps: f64,
}

impl Default for RmspropConfig {
    fn default() -> Self {
        Self {
            lr: 1e-3,
            rho: 0.9,
            eps: 1e-8,
        }
    }
}

impl RmspropConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.lr.is_finite() && self.lr > 0.0) {
            return Err(Error::config(format!("learning rate {} must be > 0", self.lr)));
        }
        if !(self.rho > 0.0 && self.rho < 1.0) {
            return Err(Error::config(format!("rho {} must be in (0, 1)", self.rho)));
        }
        if !(self.eps.is_finite() && self.eps > 0.0) {
            return Err(Error::config(format!("eps {} must be > 0", self.eps)));
        }
        Ok(())
    }
}

/// RMSprop optimizer state: one running mean of squared gradients per parameter.
#[derive(Debug, Clone, PartialEq)]
pub struct Rmsprop {
    config: RmspropConfig,
    mean_square: Vec<f64>,
}

impl Rmsprop {
    pub fn new(config: RmspropConfig, n_params: usize) -> Result<Self> {
        config.validate()?;
        Ok(Self {
            config,
            mean_square: vec![0.0; n_params],
        })
    }

    pub fn config(&self) -> &RmspropConfig {
        &self.config
    }

    pub fn mean_square(&self) -> &[f64] {
        &self.mean_square
    }

    /// `v ← ρ·v + (1−ρ)·g²`, then `θ ← θ − lr·g / (√v + ε)`.
    pub fn step(&mut self, params: &mut [f64], grads: &[f64]) {
        assert_eq!(params.len(), self.mean_square.len(), "parameter count mismatch");
        assert_eq!(grads.len(), self.mean_square.len(), "gradient count mismatch");
        let RmspropConfig { lr, rho, eps } = self.config;
        for ((theta, v), &g) in params.iter_mut().zip(&mut self.mean_square).zip(grads) {
            *v = rho * *v + (1.0 - rho) * g * g;
            *theta -= lr * g / (v.sqrt() + eps);
        }
    }
}

/// One RMSprop update of `params` in place.
pub fn rmsprop_step(params: &mut [f64], grads: &[f64], state: &mut Rmsprop) {
    state.step(params, grads);
}

#[cfg(test)]
mod tests {
    use super::*;

    fn state(lr: f64, n: usize) -> Rmsprop {
        Rmsprop::new(RmspropConfig { lr, rho: 0.9, eps: 1e-8 }, n).unwrap()
    }

    #[test]
    fn zero_gradient_only_decays() {
        let mut s = state(0.01, 2);
        let mut theta = [1.0, -2.0];
        s.step(&mut theta, &[1.0, 2.0]);
        let v = s.mean_square().to_vec();
        let before = theta;
        s.step(&mut theta, &[0.0, 0.0]);
        assert_eq!(theta, before);
        assert_eq!(s.mean_square(), &[0.9 * v[0], 0.9 * v[1]]);
    }

    #[test]
    fn first_step_closed_form() {
        let mut s = state(0.01, 1);
        let mut theta = [0.0];
        s.step(&mut theta, &[1.0]);
        // 1 − 0.9 lands a couple of ulps below 0.1 in binary64
        assert!((s.mean_square()[0] - 0.1).abs() <= 2.0 * f64::EPSILON * 0.1);
        let expected = -0.01 / (0.1f64.sqrt() + 1e-8);
        assert!((theta[0] - expected).abs() <= 2.0 * f64::EPSILON * expected.abs());
        assert!((theta[0] + 0.031_622_8).abs() < 5e-8);
    }

    #[test]
    fn constant_gradient_steps_approach_lr() {
        let mut s = state(0.01, 1);
        let mut theta = [0.0];
        let mut last = 0.0;
        for _ in 0..200 {
            let before = theta[0];
            s.step(&mut theta, &[3.0]);
            last = (theta[0] - before).abs();
        }
        assert!((last - 0.01).abs() / 0.01 < 0.01, "{last}");
    }

    #[test]
    fn rejects_bad_hyperparameters() {
        for cfg in [
            RmspropConfig { lr: 0.0, ..Default::default() },
            RmspropConfig { rho: 1.0, ..Default::default() },
            RmspropConfig { rho: 0.0, ..Default::default() },
            RmspropConfig { eps: 0.0, ..Default::default() },
        ] {
            assert!(Rmsprop::new(cfg, 1).is_err());
        }
    }
}
