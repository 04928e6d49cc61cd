//! Per-channel batch normalization as fused custom ops.
//!
//! `x̂ = (x − μ_c)/σ_c` with batch statistics over every axis except 1. The
//! backward pass uses the closed form
//! `dx = (g − mean_c(g) − x̂·mean_c(g·x̂)) / σ_c`.

use candle_core::{CpuStorage, CustomOp1, CustomOp2, Layout, Shape, Tensor};

use crate::error::Result;

trait Real: Copy {
    fn get(self) -> f64;
    fn put(v: f64) -> Self;
}

impl Real for f32 {
    fn get(self) -> f64 {
        self as f64
    }
    fn put(v: f64) -> Self {
        v as f32
    }
}

impl Real for f64 {
    fn get(self) -> f64 {
        self
    }
    fn put(v: f64) -> Self {
        v
    }
}

/// `(outer, channels, inner)` of an `[N, C, ...]` layout.
fn split(dims: &[usize]) -> (usize, usize, usize) {
    (dims[0], dims[1], dims[2..].iter().product())
}

fn contiguous<'a, T>(data: &'a [T], layout: &Layout) -> candle_core::Result<&'a [T]> {
    match layout.contiguous_offsets() {
        Some((start, end)) => Ok(&data[start..end]),
        None => candle_core::bail!("batch norm: operand must be contiguous"),
    }
}

fn channel_sums<T: Real>(x: &[T], dims: &[usize], f: impl Fn(usize, f64) -> f64) -> Vec<f64> {
    let (outer, c, inner) = split(dims);
    let mut acc = vec![0.0; c];
    for n in 0..outer {
        for (ch, a) in acc.iter_mut().enumerate() {
            let base = (n * c + ch) * inner;
            *a += x[base..base + inner].iter().map(|v| f(ch, v.get())).sum::<f64>();
        }
    }
    acc
}

fn stats<T: Real>(x: &[T], dims: &[usize]) -> Vec<T> {
    let (outer, _, inner) = split(dims);
    let count = (outer * inner) as f64;
    let mean: Vec<f64> = channel_sums(x, dims, |_, v| v).into_iter().map(|s| s / count).collect();
    let var = channel_sums(x, dims, |ch, v| (v - mean[ch]).powi(2));
    mean.iter().copied().chain(var.into_iter().map(|v| v / count)).map(T::put).collect()
}

fn normalize<T: Real>(x: &[T], dims: &[usize], mean: &[f64], inv_std: &[f64]) -> Vec<T> {
    let (_, c, inner) = split(dims);
    x.iter()
        .enumerate()
        .map(|(i, v)| {
            let ch = (i / inner) % c;
            T::put((v.get() - mean[ch]) * inv_std[ch])
        })
        .collect()
}

fn normalize_grad<T: Real>(xhat: &[T], g: &[T], dims: &[usize], inv_std: &[f64]) -> Vec<T> {
    let (outer, c, inner) = split(dims);
    let count = (outer * inner) as f64;
    let mut mean_g = vec![0.0; c];
    let mut mean_gx = vec![0.0; c];
    for (i, (x, g)) in xhat.iter().zip(g).enumerate() {
        let ch = (i / inner) % c;
        mean_g[ch] += g.get();
        mean_gx[ch] += g.get() * x.get();
    }
    for ch in 0..c {
        mean_g[ch] /= count;
        mean_gx[ch] /= count;
    }
    xhat.iter()
        .zip(g)
        .enumerate()
        .map(|(i, (x, g))| {
            let ch = (i / inner) % c;
            T::put(inv_std[ch] * (g.get() - mean_g[ch] - x.get() * mean_gx[ch]))
        })
        .collect()
}

struct ChannelStats;

impl CustomOp1 for ChannelStats {
    fn name(&self) -> &'static str {
        "channel-stats"
    }

    fn cpu_fwd(&self, s: &CpuStorage, l: &Layout) -> candle_core::Result<(CpuStorage, Shape)> {
        let dims = l.dims();
        let out = match s {
            CpuStorage::F32(x) => CpuStorage::F32(stats(contiguous(x, l)?, dims)),
            CpuStorage::F64(x) => CpuStorage::F64(stats(contiguous(x, l)?, dims)),
            _ => candle_core::bail!("batch norm: only f32/f64 are supported"),
        };
        Ok((out, Shape::from((2, dims[1]))))
    }
}

struct Normalize {
    mean: Vec<f64>,
    inv_std: Vec<f64>,
}

struct NormalizeGrad {
    inv_std: Vec<f64>,
}

impl CustomOp1 for Normalize {
    fn name(&self) -> &'static str {
        "batch-normalize"
    }

    fn cpu_fwd(&self, s: &CpuStorage, l: &Layout) -> candle_core::Result<(CpuStorage, Shape)> {
        let dims = l.dims();
        let out = match s {
            CpuStorage::F32(x) => CpuStorage::F32(normalize(contiguous(x, l)?, dims, &self.mean, &self.inv_std)),
            CpuStorage::F64(x) => CpuStorage::F64(normalize(contiguous(x, l)?, dims, &self.mean, &self.inv_std)),
            _ => candle_core::bail!("batch norm: only f32/f64 are supported"),
        };
        Ok((out, l.shape().clone()))
    }

    fn bwd(&self, _arg: &Tensor, res: &Tensor, grad: &Tensor) -> candle_core::Result<Option<Tensor>> {
        let op = NormalizeGrad {
            inv_std: self.inv_std.clone(),
        };
        Ok(Some(res.apply_op2_no_bwd(&grad.contiguous()?, &op)?))
    }
}

impl CustomOp2 for NormalizeGrad {
    fn name(&self) -> &'static str {
        "batch-normalize-grad"
    }

    fn cpu_fwd(&self, s1: &CpuStorage, l1: &Layout, s2: &CpuStorage, l2: &Layout) -> candle_core::Result<(CpuStorage, Shape)> {
        let dims = l1.dims();
        let out = match (s1, s2) {
            (CpuStorage::F32(x), CpuStorage::F32(g)) => {
                CpuStorage::F32(normalize_grad(contiguous(x, l1)?, contiguous(g, l2)?, dims, &self.inv_std))
            }
            (CpuStorage::F64(x), CpuStorage::F64(g)) => {
                CpuStorage::F64(normalize_grad(contiguous(x, l1)?, contiguous(g, l2)?, dims, &self.inv_std))
            }
            _ => candle_core::bail!("batch norm: only matching f32/f64 operands are supported"),
        };
        Ok((out, l1.shape().clone()))
    }
}

/// Normalize `x` (`[N, C, ...]`) with its own per-channel batch statistics.
///
/// Returns `(x̂, mean, biased variance)`; the statistics are detached `[C]`
/// tensors.
pub fn batch_normalize(x: &Tensor, eps: f64) -> Result<(Tensor, Tensor, Tensor)> {
    let x = x.contiguous()?;
    let st = x.apply_op1_no_bwd(&ChannelStats)?;
    let values = st.to_dtype(candle_core::DType::F64)?.to_vec2::<f64>()?;
    let inv_std = values[1].iter().map(|v| 1.0 / (v + eps).sqrt()).collect();
    let op = Normalize {
        mean: values[0].clone(),
        inv_std,
    };
    let xhat = x.apply_op1(op)?;
    Ok((xhat, st.get(0)?, st.get(1)?))
}
