use crate::autodiff::{Float, Tensor};
use crate::error::{Error, Result};

/// AdamW with decoupled weight decay applied before the moment update.
/// Moments are kept in f64.
#[derive(Clone, Debug)]
pub struct AdamW {
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub weight_decay: f64,
    step: u64,
    m: Vec<Vec<f64>>,
    v: Vec<Vec<f64>>,
}

impl AdamW {
    pub fn new(beta1: f64, beta2: f64, eps: f64, weight_decay: f64, sizes: &[usize]) -> Self {
        Self {
            beta1,
            beta2,
            eps,
            weight_decay,
            step: 0,
            m: sizes.iter().map(|&n| vec![0.0; n]).collect(),
            v: sizes.iter().map(|&n| vec![0.0; n]).collect(),
        }
    }

    pub fn steps_taken(&self) -> u64 {
        self.step
    }

    /// Updates every parameter in place. `lrs[i]` is the effective learning
    /// rate of parameter `i`. Nothing is modified if any gradient is
    /// non-finite; the error names the first offending parameter.
    pub fn step<T: Float>(
        &mut self,
        params: &mut [&mut Tensor<T>],
        names: &[String],
        grads: &[Vec<T>],
        lrs: &[f64],
    ) -> Result<()> {
        let n = params.len();
        if [names.len(), grads.len(), lrs.len(), self.m.len()]
            .iter()
            .any(|&k| k != n)
        {
            return Err(Error::shape(
                "adamw",
                format!("{n} params but mismatched names/grads/lrs/state"),
            ));
        }
        for (i, g) in grads.iter().enumerate() {
            if g.len() != params[i].numel() {
                return Err(Error::shape(
                    "adamw",
                    format!("gradient size mismatch for {}", names[i]),
                ));
            }
            if g.iter().any(|v| !v.is_finite()) {
                return Err(Error::NonFinite(format!("gradient of {}", names[i])));
            }
        }
        self.step += 1;
        let t = self.step as i32;
        let bc1 = 1.0 - self.beta1.powi(t);
        let bc2 = 1.0 - self.beta2.powi(t);
        for i in 0..n {
            let lr = lrs[i];
            let (m, v) = (&mut self.m[i], &mut self.v[i]);
            for (j, p) in params[i].data_mut().iter_mut().enumerate() {
                let g = grads[i][j].as_f64();
                let mut x = p.as_f64();
                x -= lr * self.weight_decay * x;
                m[j] = self.beta1 * m[j] + (1.0 - self.beta1) * g;
                v[j] = self.beta2 * v[j] + (1.0 - self.beta2) * g * g;
                x -= lr * (m[j] / bc1) / ((v[j] / bc2).sqrt() + self.eps);
                *p = T::of(x);
            }
        }
        Ok(())
    }
}
