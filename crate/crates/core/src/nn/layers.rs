use candle_core::{Tensor, Var, D};

use super::norm::batch_normalize;
use super::params::Scope;
use crate::error::{Error, Result};

/// Whether normalization layers use batch statistics (and update their
/// running estimates) or the stored running estimates.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    Train,
    Eval,
}

/// Affine map over the last axis: `y = x Wᵀ + b`.
pub struct Linear {
    pub weight: Var,
    pub bias: Option<Var>,
}

impl Linear {
    pub fn new(scope: &mut Scope<'_>, name: &str, d_in: usize, d_out: usize, bias: bool) -> Result<Self> {
        let mut s = scope.sub(name);
        let bound = 1.0 / (d_in as f64).sqrt();
        let weight = s.uniform("weight", &[d_out, d_in], bound)?;
        let bias = if bias { Some(s.uniform("bias", &[d_out], bound)?) } else { None };
        Ok(Self { weight, bias })
    }

    pub fn from_parts(weight: Var, bias: Option<Var>) -> Self {
        Self { weight, bias }
    }

    pub fn d_in(&self) -> usize {
        self.weight.dims()[1]
    }

    pub fn forward(&self, x: &Tensor) -> Result<Tensor> {
        let dims = x.dims().to_vec();
        let d_in = *dims.last().ok_or_else(|| Error::Shape("linear: scalar input".into()))?;
        if d_in != self.d_in() {
            return Err(Error::Shape(format!(
                "linear: last axis has {d_in} features, expected {}",
                self.d_in()
            )));
        }
        let rows = x.elem_count() / d_in;
        let y = x.reshape((rows, d_in))?.matmul(&self.weight.t()?)?;
        let y = match &self.bias {
            Some(b) => y.broadcast_add(b)?,
            None => y,
        };
        let mut out_dims = dims;
        *out_dims.last_mut().unwrap() = self.weight.dims()[0];
        Ok(y.reshape(out_dims)?)
    }
}

/// Per-channel normalization of `[B, C, H, W]` maps.
pub struct BatchNorm2d {
    gamma: Var,
    beta: Var,
    running_mean: Var,
    running_var: Var,
    momentum: f64,
    eps: f64,
}

impl BatchNorm2d {
    pub fn new(scope: &mut Scope<'_>, name: &str, channels: usize) -> Result<Self> {
        let mut s = scope.sub(name);
        Ok(Self {
            gamma: s.constant("weight", &[channels], 1.0)?,
            beta: s.constant("bias", &[channels], 0.0)?,
            running_mean: s.buffer("running_mean", &[channels], 0.0)?,
            running_var: s.buffer("running_var", &[channels], 1.0)?,
            momentum: 0.1,
            eps: 1e-5,
        })
    }

    pub fn forward(&self, x: &Tensor, mode: Mode) -> Result<Tensor> {
        let c = x.dim(1)?;
        let shape = (1, c, 1, 1);
        let y = match mode {
            Mode::Train => {
                let (y, mean, var) = batch_normalize(x, self.eps)?;
                let count = (x.elem_count() / c) as f64;
                let unbiased = if count > 1.0 { count / (count - 1.0) } else { 1.0 };
                let m = self.momentum;
                let new_mean = ((self.running_mean.as_tensor() * (1.0 - m))? + (mean * m)?)?;
                let new_var = ((self.running_var.as_tensor() * (1.0 - m))? + (var * (m * unbiased))?)?;
                self.running_mean.set(&new_mean)?;
                self.running_var.set(&new_var)?;
                y
            }
            Mode::Eval => {
                let mean = self.running_mean.as_tensor().reshape(shape)?;
                let inv_std = (self.running_var.as_tensor().reshape(shape)? + self.eps)?.sqrt()?.recip()?;
                x.broadcast_sub(&mean)?.broadcast_mul(&inv_std)?
            }
        };
        Ok(y
            .broadcast_mul(&self.gamma.as_tensor().reshape(shape)?)?
            .broadcast_add(&self.beta.as_tensor().reshape(shape)?)?)
    }
}

/// Normalization over the last axis.
pub struct LayerNorm {
    gamma: Var,
    beta: Var,
    eps: f64,
}

impl LayerNorm {
    pub fn new(scope: &mut Scope<'_>, name: &str, dim: usize) -> Result<Self> {
        let mut s = scope.sub(name);
        Ok(Self {
            gamma: s.constant("weight", &[dim], 1.0)?,
            beta: s.constant("bias", &[dim], 0.0)?,
            eps: 1e-5,
        })
    }

    pub fn forward(&self, x: &Tensor) -> Result<Tensor> {
        let mean = x.mean_keepdim(D::Minus1)?;
        let centered = x.broadcast_sub(&mean)?;
        let var = centered.sqr()?.mean_keepdim(D::Minus1)?;
        let y = centered.broadcast_div(&(var + self.eps)?.sqrt()?)?;
        Ok(y.broadcast_mul(self.gamma.as_tensor())?.broadcast_add(self.beta.as_tensor())?)
    }
}

/// Numerically stabilized softmax along the last axis.
pub fn softmax_last(x: &Tensor) -> Result<Tensor> {
    let shift = x.max_keepdim(D::Minus1)?.detach();
    let e = x.broadcast_sub(&shift)?.exp()?;
    Ok(e.broadcast_div(&e.sum_keepdim(D::Minus1)?)?)
}

pub fn log_softmax_last(x: &Tensor) -> Result<Tensor> {
    let shift = x.max_keepdim(D::Minus1)?.detach();
    let z = x.broadcast_sub(&shift)?;
    let lse = z.exp()?.sum_keepdim(D::Minus1)?.log()?;
    Ok(z.broadcast_sub(&lse)?)
}
