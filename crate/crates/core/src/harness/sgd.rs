//! SGD with heavy-ball momentum and L2 weight decay.

use candle_core::backprop::GradStore;
use candle_core::{Tensor, Var};

use crate::error::Result;

/// Per parameter: `g ← ∇ + wd·θ`, `v ← μ·v + g` (`v ← g` on the first step),
/// `θ ← θ − lr·v`.
pub struct Sgd {
    params: Vec<Var>,
    velocity: Vec<Option<Tensor>>,
    pub momentum: f64,
    pub weight_decay: f64,
}

impl Sgd {
    pub fn new(params: Vec<Var>, momentum: f64, weight_decay: f64) -> Self {
        let velocity = vec![None; params.len()];
        Self {
            params,
            velocity,
            momentum,
            weight_decay,
        }
    }

    pub fn step(&mut self, grads: &GradStore, lr: f64) -> Result<()> {
        for (p, v) in self.params.iter().zip(self.velocity.iter_mut()) {
            let Some(g) = grads.get(p.as_tensor()) else {
                continue;
            };
            let g = g.detach();
            let g = if self.weight_decay != 0.0 {
                (g + (p.as_tensor().detach() * self.weight_decay)?)?
            } else {
                g
            };
            let buf = match v.take() {
                Some(prev) if self.momentum != 0.0 => ((prev * self.momentum)? + g)?,
                _ => g,
            };
            p.set(&(p.as_tensor() - (&buf * lr)?)?)?;
            *v = Some(buf);
        }
        Ok(())
    }
}
