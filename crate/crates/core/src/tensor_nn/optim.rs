use serde::{Deserialize, Serialize};

use super::{Model, Tensor};
use crate::{Error, Result};

/// Adam hyper-parameters.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct AdamConfig {
    pub eta: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self {
            eta: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
        }
    }
}

impl AdamConfig {
    pub fn with_eta(eta: f64) -> Self {
        Self {
            eta,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        let ok = self.eta.is_finite()
            && self.eta >= 0.0
            && (0.0..1.0).contains(&self.beta1)
            && (0.0..1.0).contains(&self.beta2)
            && self.epsilon > 0.0
            && self.epsilon.is_finite();
        if ok {
            Ok(())
        } else {
            Err(Error::invalid(format!("adam config out of range: {self:?}")))
        }
    }
}

/// Adam moments for one parameter set.
///
/// The update has no bias correction:
/// `rho = b1 rho + (1-b1) g`, `nu = b2 nu + (1-b2) g^2`,
/// `theta -= eta * rho / sqrt(nu + eps)`.
#[derive(Clone, Debug)]
pub struct AdamState {
    pub config: AdamConfig,
    rho: Vec<Vec<f64>>,
    nu: Vec<Vec<f64>>,
    t: u64,
}

impl AdamState {
    pub fn new(config: AdamConfig) -> Result<Self> {
        config.validate()?;
        Ok(Self {
            config,
            rho: Vec::new(),
            nu: Vec::new(),
            t: 0,
        })
    }

    /// Number of steps taken.
    pub fn steps(&self) -> u64 {
        self.t
    }

    pub fn first_moment(&self) -> &[Vec<f64>] {
        &self.rho
    }

    pub fn second_moment(&self) -> &[Vec<f64>] {
        &self.nu
    }

    /// Applies one update using each parameter's gradient slot (a missing
    /// slot counts as zero). Nothing is modified when any gradient is
    /// non-finite or the parameter layout changed.
    pub fn step(&mut self, params: &mut [&mut Tensor]) -> Result<()> {
        if (self.t > 0 || !self.rho.is_empty())
            && (self.rho.len() != params.len()
                || self.rho.iter().zip(params.iter()).any(|(r, p)| r.len() != p.len()))
            {
                return Err(Error::shape("adam: parameter layout changed between steps"));
            }
        for p in params.iter() {
            if let Some(g) = p.grad() {
                if g.iter().any(|v| !v.is_finite()) {
                    return Err(Error::NonFinite("adam gradient".into()));
                }
            }
        }
        if self.rho.is_empty() {
            self.rho = params.iter().map(|p| vec![0.0; p.len()]).collect();
            self.nu = self.rho.clone();
        }
        let AdamConfig {
            eta,
            beta1,
            beta2,
            epsilon,
        } = self.config;
        for (i, p) in params.iter_mut().enumerate() {
            let grad = p.grad().map(<[f64]>::to_vec);
            let rho = &mut self.rho[i];
            let nu = &mut self.nu[i];
            let data = p.data_mut();
            for j in 0..data.len() {
                let g = grad.as_ref().map_or(0.0, |g| g[j]);
                rho[j] = beta1 * rho[j] + (1.0 - beta1) * g;
                nu[j] = beta2 * nu[j] + (1.0 - beta2) * g * g;
                data[j] -= eta * rho[j] / (nu[j] + epsilon).sqrt();
            }
        }
        self.t += 1;
        Ok(())
    }

    /// Steps every parameter of `model`.
    pub fn step_model(&mut self, model: &mut Model) -> Result<()> {
        let mut params = model.params_mut();
        self.step(&mut params)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn param(v: f64, g: f64) -> Tensor {
        let mut t = Tensor::scalar(v);
        t.set_grad(vec![g]).unwrap();
        t
    }

    #[test]
    fn zero_gradient_is_identity() {
        let mut s = AdamState::new(AdamConfig::default()).unwrap();
        let mut p = param(0.7, 0.0);
        s.step(&mut [&mut p]).unwrap();
        assert_eq!(p.data(), &[0.7]);
    }

    #[test]
    fn single_step_matches_hand_evaluation() {
        let mut s = AdamState::new(AdamConfig::with_eta(0.1)).unwrap();
        let mut p = param(1.0, 1.0);
        s.step(&mut [&mut p]).unwrap();
        let expected = 1.0 - 0.1 * 0.1 / (0.001f64 + 1e-8).sqrt();
        assert!((p.data()[0] - expected).abs() < 1e-15);
        assert_eq!(s.steps(), 1);
    }

    #[test]
    fn momenta_accumulate() {
        let mut s = AdamState::new(AdamConfig::with_eta(0.1)).unwrap();
        let mut p = param(1.0, 1.0);
        s.step(&mut [&mut p]).unwrap();
        let d1 = 1.0 - p.data()[0];
        let before = p.data()[0];
        s.step(&mut [&mut p]).unwrap();
        let d2 = before - p.data()[0];
        assert!(d2.abs() > d1.abs());
    }

    #[test]
    fn nan_gradient_leaves_state_untouched() {
        let mut s = AdamState::new(AdamConfig::default()).unwrap();
        let mut p = param(1.0, 1.0);
        s.step(&mut [&mut p]).unwrap();
        let snapshot = (s.first_moment().to_vec(), p.data().to_vec());
        let mut bad = Tensor::scalar(p.data()[0]);
        // set_grad does not validate finiteness; the optimizer must
        bad.set_grad(vec![f64::NAN]).unwrap();
        assert!(matches!(s.step(&mut [&mut bad]), Err(Error::NonFinite(_))));
        assert_eq!(s.first_moment(), snapshot.0.as_slice());
        assert_eq!(bad.data(), snapshot.1.as_slice());
        assert_eq!(s.steps(), 1);
    }

    #[test]
    fn rejects_bad_config() {
        assert!(AdamState::new(AdamConfig {
            beta1: 1.0,
            ..AdamConfig::default()
        })
        .is_err());
        assert!(AdamState::new(AdamConfig {
            epsilon: 0.0,
            ..AdamConfig::default()
        })
        .is_err());
    }
}
