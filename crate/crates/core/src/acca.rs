//! Asymmetric cross-modal channel attention.
//!
//! A channel descriptor `Γ(F) = ReLU(FC(GAP(TP(F))))` is computed for each
//! feature map. The guiding modality's descriptor and the target's own
//! descriptor form a `C×C` affinity (outer product), row-softmaxed, that
//! re-mixes the target's channels.

use candle_core::{Tensor, Var};

use crate::backbone::hpp;
use crate::error::{Error, Result};
use crate::nn::{softmax_last, Linear, Scope};
use crate::strategy::Strategy;

/// `Γ(·)`: temporal max pool, spatial average pool, linear `C→C`, rectifier.
pub struct Gamma {
    fc: Linear,
}

impl Gamma {
    pub fn new(scope: &mut Scope<'_>, name: &str, channels: usize) -> Result<Self> {
        Ok(Self {
            fc: Linear::new(scope, name, channels, channels, true)?,
        })
    }

    pub fn from_linear(fc: Linear) -> Self {
        Self { fc }
    }

    /// `[N, C, T, H, W]` feature map to a `[N, C]` descriptor.
    pub fn forward(&self, fm: &Tensor) -> Result<Tensor> {
        let (_, c, _, _, _) = fm.dims5()?;
        if c != self.fc.d_in() {
            return Err(Error::Shape(format!(
                "gamma: feature map has {c} channels, descriptor expects {}",
                self.fc.d_in()
            )));
        }
        let pooled = fm.max(2)?.mean((2, 3))?;
        Ok(self.fc.forward(&pooled)?.relu()?)
    }
}

/// Row-normalized channel affinity `softmax(guide ⊗ target_descᵀ)`, `[N, C, C]`.
pub fn attention_map(guide: &Tensor, target_desc: &Tensor) -> Result<Tensor> {
    let (n, c) = guide.dims2()?;
    let (n2, c2) = target_desc.dims2()?;
    if n != n2 || c != c2 {
        return Err(Error::Shape(format!(
            "channel attention: guide {:?} and target descriptor {:?} differ",
            guide.dims(),
            target_desc.dims()
        )));
    }
    let outer = guide.unsqueeze(2)?.broadcast_mul(&target_desc.unsqueeze(1)?)?;
    softmax_last(&outer)
}

/// Re-weight the channels of `target_fm` (`[N, C, T, H, W]`) with the
/// affinity built from `guide` and `target_desc` (both `[N, C]`).
pub fn channel_attention(guide: &Tensor, target_desc: &Tensor, target_fm: &Tensor) -> Result<Tensor> {
    let (n, c, t, h, w) = target_fm.dims5()?;
    if guide.dims() != [n, c] {
        return Err(Error::Shape(format!(
            "channel attention: descriptor {:?} does not match feature map channels {c}",
            guide.dims()
        )));
    }
    let a = attention_map(guide, target_desc)?;
    let flat = target_fm.reshape((n, c, t * h * w))?;
    Ok(a.matmul(&flat)?.reshape((n, c, t, h, w))?)
}

/// Channel-enhanced features of both modalities.
pub struct Enhanced {
    pub lidar: Tensor,
    pub camera: Tensor,
}

/// Descriptor maps and blend weights for one ACCA block.
///
/// Four independent descriptors: guide/self for the LiDAR update (`L←·`)
/// and guide/self for the camera update (`C←·`).
pub struct Acca {
    pub lidar_guide: Gamma,
    pub lidar_self: Gamma,
    pub camera_guide: Gamma,
    pub camera_self: Gamma,
    pub alpha: Var,
    pub beta: Var,
}

impl Acca {
    pub fn new(scope: &mut Scope<'_>, name: &str, channels: usize) -> Result<Self> {
        let mut s = scope.sub(name);
        Ok(Self {
            lidar_guide: Gamma::new(&mut s, "lidar_guide", channels)?,
            lidar_self: Gamma::new(&mut s, "lidar_self", channels)?,
            camera_guide: Gamma::new(&mut s, "camera_guide", channels)?,
            camera_self: Gamma::new(&mut s, "camera_self", channels)?,
            alpha: s.constant("alpha", &[], 1.0)?,
            beta: s.constant("beta", &[], 1.0)?,
        })
    }

    /// `L←source`: LiDAR channels re-weighted under guidance from `source`.
    fn model_lidar(&self, source: &Tensor, f_l: &Tensor) -> Result<Tensor> {
        channel_attention(&self.lidar_guide.forward(source)?, &self.lidar_self.forward(f_l)?, f_l)
    }

    /// `C←source`.
    fn model_camera(&self, source: &Tensor, f_c: &Tensor) -> Result<Tensor> {
        channel_attention(&self.camera_guide.forward(source)?, &self.camera_self.forward(f_c)?, f_c)
    }

    pub fn forward(&self, f_l: &Tensor, f_c: &Tensor, strategy: Strategy) -> Result<Enhanced> {
        let (lidar, camera) = match strategy {
            Strategy::LidarFirst => {
                let e_l = self.model_lidar(f_c, f_l)?;
                let e_c = self.model_camera(&e_l, f_c)?;
                (e_l, e_c)
            }
            Strategy::CamFirst => {
                let e_c = self.model_camera(f_l, f_c)?;
                let e_l = self.model_lidar(&e_c, f_l)?;
                (e_l, e_c)
            }
            Strategy::Simultaneous => (self.model_lidar(f_c, f_l)?, self.model_camera(f_l, f_c)?),
            Strategy::CamFromLidarOnly => (f_l.clone(), self.model_camera(f_l, f_c)?),
            Strategy::LidarFromCamOnly => (self.model_lidar(f_c, f_l)?, f_c.clone()),
        };
        Ok(Enhanced { lidar, camera })
    }
}

/// `HPP(weight·F + E)`.
pub fn blend_and_pool(f: &Tensor, e: &Tensor, weight: &Tensor, bins: &[usize]) -> Result<Tensor> {
    if f.dims() != e.dims() {
        return Err(Error::Shape(format!(
            "blend: feature map {:?} and enhanced map {:?} differ",
            f.dims(),
            e.dims()
        )));
    }
    hpp(&(f.broadcast_mul(weight)? + e)?, bins)
}
