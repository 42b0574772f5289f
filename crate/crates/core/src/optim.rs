//! Adam with bias-corrected moment estimates.

use alloc::format;
use alloc::vec::Vec;

use crate::error::{contract, dim_err, Error, Result};
use crate::tensor::{Shape, Tensor};

#[derive(Debug, Clone, PartialEq)]
pub struct AdamState {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    step: u64,
    first: Vec<Vec<f64>>,
    second: Vec<Vec<f64>>,
    shapes: Vec<Shape>,
}

impl AdamState {
    /// Moment buffers sized for parameters of the given shapes.
    pub fn new(lr: f64, shapes: &[Shape]) -> Result<Self> {
        if !(lr > 0.0 && lr.is_finite()) {
            return Err(contract!("learning rate must be positive, got {lr}"));
        }
        Ok(AdamState {
            lr,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            step: 0,
            first: shapes.iter().map(|s| alloc::vec![0.0; s.len()]).collect(),
            second: shapes.iter().map(|s| alloc::vec![0.0; s.len()]).collect(),
            shapes: shapes.to_vec(),
        })
    }

    pub fn step_count(&self) -> u64 {
        self.step
    }

    /// Applies one update to `params` in place. `names` label parameters in errors.
    pub fn step(&mut self, params: &mut [&mut Tensor], grads: &[Tensor], names: &[&str]) -> Result<()> {
        if params.len() != self.shapes.len() || grads.len() != self.shapes.len() {
            return Err(dim_err!(
                "adam: state holds {} parameters, got {} params and {} grads",
                self.shapes.len(),
                params.len(),
                grads.len()
            ));
        }
        for (i, (p, g)) in params.iter().zip(grads).enumerate() {
            let name = names.get(i).copied().unwrap_or("?");
            if p.shape() != self.shapes[i] || g.shape() != self.shapes[i] {
                return Err(dim_err!("adam: parameter `{name}` shape {} / grad {} vs state {}", p.shape(), g.shape(), self.shapes[i]));
            }
            if g.data().iter().any(|x| !x.is_finite()) {
                return Err(Error::Numeric(format!("non-finite gradient for parameter `{name}`")));
            }
        }
        self.step += 1;
        let t = self.step as i32;
        let bc1 = 1.0 - libm::pow(self.beta1, t as f64);
        let bc2 = 1.0 - libm::pow(self.beta2, t as f64);
        for (i, (p, g)) in params.iter_mut().zip(grads).enumerate() {
            let (m, v) = (&mut self.first[i], &mut self.second[i]);
            let mut data = core::mem::take(*p).into_data();
            for (((x, &gi), mi), vi) in data.iter_mut().zip(g.data()).zip(m.iter_mut()).zip(v.iter_mut()) {
                *mi = self.beta1 * *mi + (1.0 - self.beta1) * gi;
                *vi = self.beta2 * *vi + (1.0 - self.beta2) * gi * gi;
                let m_hat = *mi / bc1;
                let v_hat = *vi / bc2;
                *x -= self.lr * m_hat / (libm::sqrt(v_hat) + self.eps);
            }
            **p = Tensor::new(self.shapes[i].rows, self.shapes[i].cols, data)?;
        }
        Ok(())
    }
}
