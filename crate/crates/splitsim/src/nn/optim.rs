use crate::nn::ModelGraph;
use crate::{Error, Result, Tensor};

/// Adam with the usual defaults (β1=0.9, β2=0.999, ε=1e-8) and bias-corrected
/// moment estimates. One state instance tracks one model's parameter list.
#[derive(Debug, Clone)]
pub struct AdamState {
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    m: Vec<Vec<f64>>,
    v: Vec<Vec<f64>>,
    t: u64,
}

impl AdamState {
    pub fn new(model: &ModelGraph) -> Self {
        let sizes: Vec<usize> = model.params().iter().map(|p| p.numel()).collect();
        Self {
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            m: sizes.iter().map(|&n| vec![0.0; n]).collect(),
            v: sizes.iter().map(|&n| vec![0.0; n]).collect(),
            t: 0,
        }
    }

    pub fn step_count(&self) -> u64 {
        self.t
    }

    /// Applies one Adam update from `grads` (one tensor per parameter, in
    /// [`ModelGraph::params`] order) and increments the step counter.
    pub fn step(&mut self, model: &mut ModelGraph, grads: &[Tensor], lr: f64) -> Result<()> {
        let mut params = model.params_mut();
        if params.len() != grads.len() || params.len() != self.m.len() {
            return Err(Error::Shape(format!(
                "adam step over {} params with {} grads (state tracks {})",
                params.len(),
                grads.len(),
                self.m.len()
            )));
        }
        self.t += 1;
        let bc1 = 1.0 - self.beta1.powi(self.t as i32);
        let bc2 = 1.0 - self.beta2.powi(self.t as i32);
        for ((param, grad), (m, v)) in params
            .iter_mut()
            .zip(grads)
            .zip(self.m.iter_mut().zip(self.v.iter_mut()))
        {
            if param.shape() != grad.shape() {
                return Err(Error::Shape(format!(
                    "gradient {:?} for parameter {:?}",
                    grad.shape(),
                    param.shape()
                )));
            }
            for (((p, &g), mi), vi) in param
                .data_mut()
                .iter_mut()
                .zip(grad.data())
                .zip(m.iter_mut())
                .zip(v.iter_mut())
            {
                *mi = self.beta1 * *mi + (1.0 - self.beta1) * g;
                *vi = self.beta2 * *vi + (1.0 - self.beta2) * g * g;
                let m_hat = *mi / bc1;
                let v_hat = *vi / bc2;
                *p -= lr * m_hat / (v_hat.sqrt() + self.eps);
            }
        }
        Ok(())
    }
}

/// Cosine annealing: `base_lr` at epoch 0, zero at `total_epochs`.
pub fn cosine_lr(epoch: usize, total_epochs: usize, base_lr: f64) -> Result<f64> {
    if total_epochs == 0 {
        return Err(Error::InvalidArg("cosine_lr with zero total epochs".into()));
    }
    if epoch > total_epochs {
        return Err(Error::InvalidArg(format!(
            "epoch {epoch} past the schedule end {total_epochs}"
        )));
    }
    Ok(base_lr * (1.0 + (std::f64::consts::PI * epoch as f64 / total_epochs as f64).cos()) / 2.0)
}
