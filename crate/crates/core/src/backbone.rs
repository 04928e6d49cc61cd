//! Per-frame residual CNN feature extractor and Horizontal Pyramid Pooling.

use candle_core::{Tensor, Var};

use crate::error::{Error, Result};
use crate::nn::{conv2d, BatchNorm2d, Mode, Scope};

/// Horizontal strip counts of the default pyramid (1+2+4+8+16 = 31 parts).
pub const DEFAULT_BINS: [usize; 5] = [1, 2, 4, 8, 16];

/// Frames per chunk when running the extractor without gradients.
const EVAL_CHUNK: usize = 64;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ExtractorConfig {
    pub in_channels: usize,
    /// Output channels of the four residual stages; the last is `C0`.
    pub widths: [usize; 4],
    pub stem_stride: usize,
    /// Expected square input resolution.
    pub input_size: usize,
}

impl ExtractorConfig {
    pub fn output_size(&self) -> usize {
        // stem (stem_stride), stage 2 and stage 3 halve the resolution
        self.input_size / self.stem_stride / 4
    }

    pub fn out_channels(&self) -> usize {
        self.widths[3]
    }
}

struct ConvBn {
    weight: Var,
    bn: BatchNorm2d,
    stride: usize,
    pad: usize,
}

impl ConvBn {
    fn new(scope: &mut Scope<'_>, name: &str, c_in: usize, c_out: usize, k: usize, stride: usize) -> Result<Self> {
        let mut s = scope.sub(name);
        let fan_in = (c_in * k * k) as f64;
        let weight = s.uniform("weight", &[c_out, c_in, k, k], (6.0 / fan_in).sqrt())?;
        let bn = BatchNorm2d::new(&mut s, "bn", c_out)?;
        Ok(Self {
            weight,
            bn,
            stride,
            pad: k / 2,
        })
    }

    fn forward(&self, x: &Tensor, mode: Mode) -> Result<Tensor> {
        let y = conv2d(x, self.weight.as_tensor(), self.stride, self.pad)?;
        self.bn.forward(&y, mode)
    }
}

struct BasicBlock {
    conv1: ConvBn,
    conv2: ConvBn,
    shortcut: Option<ConvBn>,
}

impl BasicBlock {
    fn new(scope: &mut Scope<'_>, name: &str, c_in: usize, c_out: usize, stride: usize) -> Result<Self> {
        let mut s = scope.sub(name);
        let shortcut = if stride != 1 || c_in != c_out {
            Some(ConvBn::new(&mut s, "shortcut", c_in, c_out, 1, stride)?)
        } else {
            None
        };
        Ok(Self {
            conv1: ConvBn::new(&mut s, "conv1", c_in, c_out, 3, stride)?,
            conv2: ConvBn::new(&mut s, "conv2", c_out, c_out, 3, 1)?,
            shortcut,
        })
    }

    fn forward(&self, x: &Tensor, mode: Mode) -> Result<Tensor> {
        let y = self.conv1.forward(x, mode)?.relu()?;
        let y = self.conv2.forward(&y, mode)?;
        let skip = match &self.shortcut {
            Some(s) => s.forward(x, mode)?,
            None => x.clone(),
        };
        Ok((y + skip)?.relu()?)
    }
}

/// ResNet-9 style extractor: a 3×3 stem followed by four single-block
/// residual stages (stride 1, 2, 2, 1), applied to every frame independently.
pub struct Extractor {
    config: ExtractorConfig,
    stem: ConvBn,
    stages: Vec<BasicBlock>,
}

impl Extractor {
    pub fn new(scope: &mut Scope<'_>, name: &str, config: ExtractorConfig) -> Result<Self> {
        if config.input_size % (config.stem_stride * 4) != 0 {
            return Err(Error::Config(format!(
                "input size {} is not divisible by the total stride {}",
                config.input_size,
                config.stem_stride * 4
            )));
        }
        let mut s = scope.sub(name);
        let w = config.widths;
        let stem = ConvBn::new(&mut s, "stem", config.in_channels, w[0], 3, config.stem_stride)?;
        let strides = [1, 2, 2, 1];
        let mut stages = Vec::with_capacity(4);
        let mut c_in = w[0];
        for (i, (&c_out, &stride)) in w.iter().zip(&strides).enumerate() {
            stages.push(BasicBlock::new(&mut s, &format!("stage{}", i + 1), c_in, c_out, stride)?);
            c_in = c_out;
        }
        Ok(Self { config, stem, stages })
    }

    pub fn config(&self) -> &ExtractorConfig {
        &self.config
    }

    fn frames_forward(&self, x: &Tensor, mode: Mode) -> Result<Tensor> {
        let mut y = self.stem.forward(x, mode)?.relu()?;
        for stage in &self.stages {
            y = stage.forward(&y, mode)?;
        }
        Ok(y)
    }

    /// `[N, ch, T, H, W]` frames to a `[N, C0, T, H', W']` feature map.
    pub fn forward(&self, frames: &Tensor, mode: Mode) -> Result<Tensor> {
        let (n, ch, t, h, w) = frames.dims5()?;
        let size = self.config.input_size;
        if ch != self.config.in_channels {
            return Err(Error::Shape(format!(
                "extractor expects {} input channels on axis 1, got {ch}",
                self.config.in_channels
            )));
        }
        if h != size {
            return Err(Error::Shape(format!("extractor expects height {size} on axis 3, got {h}")));
        }
        if w != size {
            return Err(Error::Shape(format!("extractor expects width {size} on axis 4, got {w}")));
        }
        let flat = frames.permute((0, 2, 1, 3, 4))?.reshape((n * t, ch, h, w))?;
        let feats = match mode {
            Mode::Train => self.frames_forward(&flat, mode)?,
            Mode::Eval => {
                let mut chunks = Vec::new();
                let mut start = 0;
                while start < n * t {
                    let len = EVAL_CHUNK.min(n * t - start);
                    chunks.push(self.frames_forward(&flat.narrow(0, start, len)?, mode)?.detach());
                    start += len;
                }
                Tensor::cat(&chunks, 0)?
            }
        };
        let (_, c0, ho, wo) = feats.dims4()?;
        Ok(feats.reshape((n, t, c0, ho, wo))?.permute((0, 2, 1, 3, 4))?.contiguous()?)
    }
}

/// Horizontal Pyramid Pooling: `[N, C, T, H, W]` to `[N, C, T, P]` with `P = Σ bins`.
///
/// Each of the `b` horizontal strips of every bin level is reduced by
/// max-pooling plus mean-pooling over its spatial extent.
pub fn hpp(fm: &Tensor, bins: &[usize]) -> Result<Tensor> {
    let (n, c, t, h, w) = fm.dims5()?;
    let mut parts = Vec::with_capacity(bins.len());
    for &b in bins {
        if b == 0 || h % b != 0 {
            return Err(Error::Shape(format!("hpp: height {h} is not divisible into {b} strips")));
        }
        let strips = fm.reshape((n, c, t, b, (h / b) * w))?;
        parts.push((strips.max(4)? + strips.mean(4)?)?);
    }
    Ok(Tensor::cat(&parts, 3)?)
}
