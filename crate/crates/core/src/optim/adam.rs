use crate::error::{Error, Result};

pub const ADAM_BETA1: f64 = 0.9;
pub const ADAM_BETA2: f64 = 0.999;
pub const ADAM_EPS: f64 = 1e-8;

/// Adam moments with a per-parameter step count, so parameters that join the
/// optimization late start with a fresh bias correction.
#[derive(Debug, Clone, PartialEq)]
pub struct AdamState {
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub m: Vec<f64>,
    pub v: Vec<f64>,
    pub steps: Vec<u32>,
}

impl AdamState {
    pub fn new(len: usize) -> Self {
        AdamState {
            beta1: ADAM_BETA1,
            beta2: ADAM_BETA2,
            eps: ADAM_EPS,
            m: vec![0.0; len],
            v: vec![0.0; len],
            steps: vec![0; len],
        }
    }

    /// One bias-corrected Adam update. Frozen entries keep both their value
    /// and their moments. A non-finite gradient aborts before anything changes.
    pub fn step(
        &mut self,
        params: &mut [f64],
        grads: &[f64],
        lr: &[f64],
        frozen: &[bool],
    ) -> Result<()> {
        let n = self.m.len();
        if params.len() != n || grads.len() != n || lr.len() != n || frozen.len() != n {
            return Err(Error::Argument(
                "adam: parameter, gradient and rate lengths differ".into(),
            ));
        }
        if let Some(i) = (0..n).find(|&i| !frozen[i] && !grads[i].is_finite()) {
            return Err(Error::NonFiniteGradient { param: i });
        }
        for i in 0..n {
            if frozen[i] {
                continue;
            }
            let g = grads[i];
            self.steps[i] += 1;
            let t = self.steps[i] as i32;
            self.m[i] = self.beta1 * self.m[i] + (1.0 - self.beta1) * g;
            self.v[i] = self.beta2 * self.v[i] + (1.0 - self.beta2) * g * g;
            let m_hat = self.m[i] / (1.0 - self.beta1.powi(t));
            let v_hat = self.v[i] / (1.0 - self.beta2.powi(t));
            params[i] -= lr[i] * m_hat / (v_hat.sqrt() + self.eps);
        }
        Ok(())
    }
}
