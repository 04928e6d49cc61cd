//! 2-D convolution as an im2col + GEMM custom op.
//!
//! Both the input and the weight gradient are computed with the same
//! im2col/col2im lowering, so backward costs roughly two forward passes.

use candle_core::{CpuStorage, CustomOp2, Layout, Shape, Tensor};

use crate::error::{Error, Result};

trait Elem: Copy + Default + std::ops::AddAssign + 'static {
    /// `c = a · b + beta · c` on row-major contiguous buffers (`a` is m×k, `b` is k×n).
    #[allow(clippy::too_many_arguments)]
    fn gemm(m: usize, k: usize, n: usize, a: &[Self], a_t: bool, b: &[Self], b_t: bool, beta: Self, c: &mut [Self]);
    fn zero() -> Self {
        Self::default()
    }
    fn one() -> Self;
}

// Strides for a row-major m×k matrix, optionally stored transposed (k×m).
fn strides(rows: usize, cols: usize, transposed: bool) -> (isize, isize) {
    if transposed {
        (1, rows as isize)
    } else {
        (cols as isize, 1)
    }
}

impl Elem for f32 {
    fn gemm(m: usize, k: usize, n: usize, a: &[f32], a_t: bool, b: &[f32], b_t: bool, beta: f32, c: &mut [f32]) {
        let (rsa, csa) = strides(m, k, a_t);
        let (rsb, csb) = strides(k, n, b_t);
        assert!(a.len() >= m * k && b.len() >= k * n && c.len() >= m * n);
        // SAFETY: buffer lengths checked above; strides describe in-bounds row-major views.
        unsafe {
            matrixmultiply::sgemm(m, k, n, 1.0, a.as_ptr(), rsa, csa, b.as_ptr(), rsb, csb, beta, c.as_mut_ptr(), n as isize, 1);
        }
    }
    fn one() -> Self {
        1.0
    }
}

impl Elem for f64 {
    fn gemm(m: usize, k: usize, n: usize, a: &[f64], a_t: bool, b: &[f64], b_t: bool, beta: f64, c: &mut [f64]) {
        let (rsa, csa) = strides(m, k, a_t);
        let (rsb, csb) = strides(k, n, b_t);
        assert!(a.len() >= m * k && b.len() >= k * n && c.len() >= m * n);
        // SAFETY: as above.
        unsafe {
            matrixmultiply::dgemm(m, k, n, 1.0, a.as_ptr(), rsa, csa, b.as_ptr(), rsb, csb, beta, c.as_mut_ptr(), n as isize, 1);
        }
    }
    fn one() -> Self {
        1.0
    }
}

#[derive(Debug, Clone, Copy)]
struct Geometry {
    batch: usize,
    c_in: usize,
    h: usize,
    w: usize,
    c_out: usize,
    kernel: usize,
    stride: usize,
    pad: usize,
}

impl Geometry {
    fn h_out(&self) -> usize {
        (self.h + 2 * self.pad - self.kernel) / self.stride + 1
    }
    fn w_out(&self) -> usize {
        (self.w + 2 * self.pad - self.kernel) / self.stride + 1
    }
    fn col_rows(&self) -> usize {
        self.c_in * self.kernel * self.kernel
    }
    fn col_cols(&self) -> usize {
        self.h_out() * self.w_out()
    }
}

fn im2col<T: Elem>(g: &Geometry, img: &[T], col: &mut [T]) {
    let (ho, wo, k) = (g.h_out(), g.w_out(), g.kernel);
    for c in 0..g.c_in {
        let plane = &img[c * g.h * g.w..(c + 1) * g.h * g.w];
        for ky in 0..k {
            for kx in 0..k {
                let row = (c * k + ky) * k + kx;
                let out = &mut col[row * ho * wo..(row + 1) * ho * wo];
                for oy in 0..ho {
                    let iy = (oy * g.stride + ky) as isize - g.pad as isize;
                    let dst = &mut out[oy * wo..(oy + 1) * wo];
                    if iy < 0 || iy >= g.h as isize {
                        dst.fill(T::zero());
                        continue;
                    }
                    let src = &plane[iy as usize * g.w..(iy as usize + 1) * g.w];
                    for (ox, d) in dst.iter_mut().enumerate() {
                        let ix = (ox * g.stride + kx) as isize - g.pad as isize;
                        *d = if ix < 0 || ix >= g.w as isize {
                            T::zero()
                        } else {
                            src[ix as usize]
                        };
                    }
                }
            }
        }
    }
}

fn col2im<T: Elem>(g: &Geometry, col: &[T], img: &mut [T]) {
    let (ho, wo, k) = (g.h_out(), g.w_out(), g.kernel);
    for c in 0..g.c_in {
        let plane = &mut img[c * g.h * g.w..(c + 1) * g.h * g.w];
        for ky in 0..k {
            for kx in 0..k {
                let row = (c * k + ky) * k + kx;
                let src = &col[row * ho * wo..(row + 1) * ho * wo];
                for oy in 0..ho {
                    let iy = (oy * g.stride + ky) as isize - g.pad as isize;
                    if iy < 0 || iy >= g.h as isize {
                        continue;
                    }
                    let dst = &mut plane[iy as usize * g.w..(iy as usize + 1) * g.w];
                    for ox in 0..wo {
                        let ix = (ox * g.stride + kx) as isize - g.pad as isize;
                        if ix >= 0 && (ix as usize) < g.w {
                            dst[ix as usize] += src[oy * wo + ox];
                        }
                    }
                }
            }
        }
    }
}

fn forward<T: Elem>(g: &Geometry, x: &[T], w: &[T]) -> Vec<T> {
    let (rows, cols) = (g.col_rows(), g.col_cols());
    let mut col = vec![T::zero(); rows * cols];
    let mut out = vec![T::zero(); g.batch * g.c_out * cols];
    let in_size = g.c_in * g.h * g.w;
    for n in 0..g.batch {
        im2col(g, &x[n * in_size..(n + 1) * in_size], &mut col);
        let dst = &mut out[n * g.c_out * cols..(n + 1) * g.c_out * cols];
        T::gemm(g.c_out, rows, cols, w, false, &col, false, T::zero(), dst);
    }
    out
}

fn grad_input<T: Elem>(g: &Geometry, grad_out: &[T], w: &[T]) -> Vec<T> {
    let (rows, cols) = (g.col_rows(), g.col_cols());
    let mut col = vec![T::zero(); rows * cols];
    let in_size = g.c_in * g.h * g.w;
    let mut gx = vec![T::zero(); g.batch * in_size];
    for n in 0..g.batch {
        let go = &grad_out[n * g.c_out * cols..(n + 1) * g.c_out * cols];
        // col = Wᵀ · grad_out
        T::gemm(rows, g.c_out, cols, w, true, go, false, T::zero(), &mut col);
        col2im(g, &col, &mut gx[n * in_size..(n + 1) * in_size]);
    }
    gx
}

fn grad_weight<T: Elem>(g: &Geometry, x: &[T], grad_out: &[T]) -> Vec<T> {
    let (rows, cols) = (g.col_rows(), g.col_cols());
    let mut col = vec![T::zero(); rows * cols];
    let mut gw = vec![T::zero(); g.c_out * rows];
    let in_size = g.c_in * g.h * g.w;
    for n in 0..g.batch {
        im2col(g, &x[n * in_size..(n + 1) * in_size], &mut col);
        let go = &grad_out[n * g.c_out * cols..(n + 1) * g.c_out * cols];
        let beta = if n == 0 { T::zero() } else { T::one() };
        // gW += grad_out · colᵀ
        T::gemm(g.c_out, cols, rows, go, false, &col, true, beta, &mut gw);
    }
    gw
}

fn contiguous<'a, T>(data: &'a [T], layout: &Layout, what: &str) -> candle_core::Result<&'a [T]> {
    match layout.contiguous_offsets() {
        Some((start, end)) => Ok(&data[start..end]),
        None => candle_core::bail!("conv2d: {what} must be contiguous"),
    }
}

macro_rules! dispatch2 {
    ($s1:expr, $l1:expr, $s2:expr, $l2:expr, $f:expr, $what:expr) => {
        match ($s1, $s2) {
            (CpuStorage::F32(a), CpuStorage::F32(b)) => {
                let a = contiguous(a, $l1, $what.0)?;
                let b = contiguous(b, $l2, $what.1)?;
                CpuStorage::F32($f(a, b))
            }
            (CpuStorage::F64(a), CpuStorage::F64(b)) => {
                let a = contiguous(a, $l1, $what.0)?;
                let b = contiguous(b, $l2, $what.1)?;
                CpuStorage::F64($f(a, b))
            }
            _ => candle_core::bail!("conv2d: only matching f32/f64 operands are supported"),
        }
    };
}

struct ConvForward(Geometry);
struct ConvGradInput(Geometry);
struct ConvGradWeight(Geometry);

impl CustomOp2 for ConvForward {
    fn name(&self) -> &'static str {
        "im2col-conv2d"
    }

    fn cpu_fwd(&self, s1: &CpuStorage, l1: &Layout, s2: &CpuStorage, l2: &Layout) -> candle_core::Result<(CpuStorage, Shape)> {
        let g = &self.0;
        let out = dispatch2!(s1, l1, s2, l2, |x, w| forward(g, x, w), ("input", "weight"));
        Ok((out, Shape::from((g.batch, g.c_out, g.h_out(), g.w_out()))))
    }

    fn bwd(&self, x: &Tensor, w: &Tensor, _res: &Tensor, grad: &Tensor) -> candle_core::Result<(Option<Tensor>, Option<Tensor>)> {
        let grad = grad.contiguous()?;
        let gx = grad.apply_op2_no_bwd(w, &ConvGradInput(self.0))?;
        let gw = x.apply_op2_no_bwd(&grad, &ConvGradWeight(self.0))?;
        Ok((Some(gx), Some(gw)))
    }
}

impl CustomOp2 for ConvGradInput {
    fn name(&self) -> &'static str {
        "im2col-conv2d-grad-input"
    }

    fn cpu_fwd(&self, s1: &CpuStorage, l1: &Layout, s2: &CpuStorage, l2: &Layout) -> candle_core::Result<(CpuStorage, Shape)> {
        let g = &self.0;
        let out = dispatch2!(s1, l1, s2, l2, |go, w| grad_input(g, go, w), ("grad", "weight"));
        Ok((out, Shape::from((g.batch, g.c_in, g.h, g.w))))
    }
}

impl CustomOp2 for ConvGradWeight {
    fn name(&self) -> &'static str {
        "im2col-conv2d-grad-weight"
    }

    fn cpu_fwd(&self, s1: &CpuStorage, l1: &Layout, s2: &CpuStorage, l2: &Layout) -> candle_core::Result<(CpuStorage, Shape)> {
        let g = &self.0;
        let out = dispatch2!(s1, l1, s2, l2, |x, go| grad_weight(g, x, go), ("input", "grad"));
        Ok((out, Shape::from((g.c_out, g.c_in, g.kernel, g.kernel))))
    }
}

/// Square-kernel 2-D convolution without bias.
///
/// `x` is `[N, C_in, H, W]`, `weight` is `[C_out, C_in, k, k]`.
pub fn conv2d(x: &Tensor, weight: &Tensor, stride: usize, pad: usize) -> Result<Tensor> {
    let (batch, c_in, h, w) = x.dims4()?;
    let (c_out, wc_in, kh, kw) = weight.dims4()?;
    if wc_in != c_in {
        return Err(Error::Shape(format!(
            "conv2d: input has {c_in} channels (axis 1) but weight expects {wc_in}"
        )));
    }
    if kh != kw || stride == 0 || h + 2 * pad < kh || w + 2 * pad < kw {
        return Err(Error::Shape(format!(
            "conv2d: unsupported kernel {kh}x{kw} / stride {stride} for {h}x{w} input"
        )));
    }
    let geometry = Geometry {
        batch,
        c_in,
        h,
        w,
        c_out,
        kernel: kh,
        stride,
        pad,
    };
    let x = x.contiguous()?;
    let weight = weight.contiguous()?;
    Ok(x.apply_op2(&weight, ConvForward(geometry))?)
}
