use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numeric::Parameter;

/// AdamW hyper-parameters.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct OptimizerConfig {
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    /// Decoupled weight decay; zero disables it.
    pub weight_decay: f64,
}

impl Default for OptimizerConfig {
    fn default() -> Self {
        OptimizerConfig {
            learning_rate: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
            weight_decay: 0.0,
        }
    }
}

impl OptimizerConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::config("learning_rate", "must be positive"));
        }
        for (name, b) in [("beta1", self.beta1), ("beta2", self.beta2)] {
            if !(b > 0.0 && b < 1.0) {
                return Err(Error::config(name, "must lie in (0, 1)"));
            }
        }
        if !(self.weight_decay >= 0.0) {
            return Err(Error::config("weight_decay", "must be nonnegative"));
        }
        if !(self.epsilon > 0.0) {
            return Err(Error::config("epsilon", "must be positive"));
        }
        Ok(())
    }
}

/// Applies one AdamW update with decoupled weight decay and clears gradients.
///
/// `step` is the 1-based update count used for bias correction. Nothing is
/// modified if any gradient is non-finite.
pub fn adam_step(params: &mut [&mut Parameter], config: &OptimizerConfig, step: u64) -> Result<()> {
    config.validate()?;
    if step == 0 {
        return Err(Error::Invalid("adam step count starts at 1".into()));
    }
    for (k, p) in params.iter().enumerate() {
        if let Some(i) = p.grad.data().iter().position(|g| !g.is_finite()) {
            return Err(Error::NonFinite(format!(
                "gradient of parameter {k} entry {i} is {}",
                p.grad.data()[i]
            )));
        }
    }
    let bc1 = 1.0 - config.beta1.powf(step as f64);
    let bc2 = 1.0 - config.beta2.powf(step as f64);
    for p in params.iter_mut() {
        let Parameter {
            value,
            grad,
            first_moment,
            second_moment,
        } = &mut **p;
        let it = value
            .data_mut()
            .iter_mut()
            .zip(grad.data_mut().iter_mut())
            .zip(first_moment.data_mut().iter_mut())
            .zip(second_moment.data_mut().iter_mut());
        for (((w, g), m), v) in it {
            *m = config.beta1 * *m + (1.0 - config.beta1) * *g;
            *v = config.beta2 * *v + (1.0 - config.beta2) * *g * *g;
            let m_hat = *m / bc1;
            let v_hat = *v / bc2;
            *w -= config.learning_rate * (m_hat / (v_hat.sqrt() + config.epsilon) + config.weight_decay * *w);
            *g = 0.0;
        }
    }
    Ok(())
}
