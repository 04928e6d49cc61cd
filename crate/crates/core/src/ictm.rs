//! Interlaced cross-modal temporal modeling.
//!
//! Part sequences are handled in a token layout `[N·P, T, C]`: attention runs
//! along time independently for every part, with weights shared across parts.
//! A learned class token sits at time index 0 of each stream.

use candle_core::{Tensor, Var};

use crate::error::{Error, Result};
use crate::nn::{softmax_last, LayerNorm, Linear, Scope};
use crate::strategy::Strategy;

/// A modality stream in token layout `[N·P, T, C]`.
#[derive(Clone)]
pub struct TokenSequence {
    values: Tensor,
    batch: usize,
    parts: usize,
}

impl TokenSequence {
    /// From the part-sequence layout `[N, C, T, P]`.
    pub fn from_nctp(t: &Tensor) -> Result<Self> {
        let (n, c, len, p) = t.dims4()?;
        let values = t.permute((0, 3, 2, 1))?.reshape((n * p, len, c))?;
        Ok(Self {
            values,
            batch: n,
            parts: p,
        })
    }

    /// Back to `[N, C, T, P]`.
    pub fn to_nctp(&self) -> Result<Tensor> {
        let (_, len, c) = self.values.dims3()?;
        Ok(self
            .values
            .reshape((self.batch, self.parts, len, c))?
            .permute((0, 3, 2, 1))?
            .contiguous()?)
    }

    fn with_values(&self, values: Tensor) -> Self {
        Self {
            values,
            batch: self.batch,
            parts: self.parts,
        }
    }

    pub fn values(&self) -> &Tensor {
        &self.values
    }

    pub fn time_len(&self) -> usize {
        self.values.dims()[1]
    }

    pub fn channels(&self) -> usize {
        self.values.dims()[2]
    }

    /// Time index 0 as `[N, C, P]`.
    pub fn class_token(&self) -> Result<Tensor> {
        let c = self.channels();
        Ok(self
            .values
            .narrow(1, 0, 1)?
            .reshape((self.batch, self.parts, c))?
            .permute((0, 2, 1))?
            .contiguous()?)
    }
}

/// Multi-head scaled dot-product attention with separate Q/K/V/output projections.
pub struct MultiHeadCrossAttention {
    heads: usize,
    q: Linear,
    k: Linear,
    v: Linear,
    o: Linear,
}

impl MultiHeadCrossAttention {
    pub fn new(scope: &mut Scope<'_>, name: &str, channels: usize, heads: usize) -> Result<Self> {
        if heads == 0 || channels % heads != 0 {
            return Err(Error::Config(format!(
                "{channels} channels cannot be split into {heads} attention heads"
            )));
        }
        let mut s = scope.sub(name);
        Ok(Self {
            heads,
            q: Linear::new(&mut s, "q", channels, channels, true)?,
            k: Linear::new(&mut s, "k", channels, channels, true)?,
            v: Linear::new(&mut s, "v", channels, channels, true)?,
            o: Linear::new(&mut s, "o", channels, channels, true)?,
        })
    }

    fn split_heads(&self, x: &Tensor) -> Result<Tensor> {
        let (b, t, c) = x.dims3()?;
        Ok(x.reshape((b, t, self.heads, c / self.heads))?.transpose(1, 2)?.contiguous()?)
    }

    /// Softmax attention weights `[B, heads, T_q, T_k]`.
    pub fn weights(&self, q: &Tensor, k: &Tensor) -> Result<Tensor> {
        let qh = self.split_heads(&self.q.forward(q)?)?;
        let kh = self.split_heads(&self.k.forward(k)?)?;
        let d_head = qh.dim(3)? as f64;
        let scores = (qh.matmul(&kh.transpose(2, 3)?.contiguous()?)? / d_head.sqrt())?;
        softmax_last(&scores)
    }

    /// Token-layout attention: `q` is `[B, T_q, C]`, `k`/`v` are `[B, T_k, C]`.
    pub fn attend(&self, q: &Tensor, k: &Tensor, v: &Tensor) -> Result<Tensor> {
        let (b, tq, c) = q.dims3()?;
        if k.dims() != v.dims() || k.dim(0)? != b || k.dim(2)? != c {
            return Err(Error::Shape(format!(
                "cross attention: query {:?}, key {:?}, value {:?} are incompatible",
                q.dims(),
                k.dims(),
                v.dims()
            )));
        }
        let w = self.weights(q, k)?;
        let vh = self.split_heads(&self.v.forward(v)?)?;
        let mixed = w.matmul(&vh)?.transpose(1, 2)?.reshape((b, tq, c))?;
        self.o.forward(&mixed)
    }
}

/// Cross-attention on part sequences `[N, C, T, P]`; output has the query's time length.
pub fn cross_attention(q_seq: &Tensor, k_seq: &Tensor, v_seq: &Tensor, block: &MultiHeadCrossAttention) -> Result<Tensor> {
    if k_seq.dims() != v_seq.dims() {
        return Err(Error::Shape(format!(
            "cross attention: key {:?} and value {:?} differ",
            k_seq.dims(),
            v_seq.dims()
        )));
    }
    let q = TokenSequence::from_nctp(q_seq)?;
    let k = TokenSequence::from_nctp(k_seq)?;
    let v = TokenSequence::from_nctp(v_seq)?;
    if (q.batch, q.parts) != (k.batch, k.parts) {
        return Err(Error::Shape("cross attention: batch or part count differs between query and key".into()));
    }
    q.with_values(block.attend(&q.values, &k.values, &v.values)?).to_nctp()
}

/// Pre-norm residual cross-attention: `query + C-ATT(LN(query), LN(ctx), LN(ctx))`.
pub struct AttentionBlock {
    norm_q: LayerNorm,
    norm_kv: LayerNorm,
    att: MultiHeadCrossAttention,
}

impl AttentionBlock {
    fn new(scope: &mut Scope<'_>, name: &str, channels: usize, heads: usize) -> Result<Self> {
        let mut s = scope.sub(name);
        Ok(Self {
            norm_q: LayerNorm::new(&mut s, "norm_q", channels)?,
            norm_kv: LayerNorm::new(&mut s, "norm_kv", channels)?,
            att: MultiHeadCrossAttention::new(&mut s, "att", channels, heads)?,
        })
    }

    fn forward(&self, query: &Tensor, context: &Tensor) -> Result<Tensor> {
        let ctx = self.norm_kv.forward(context)?;
        let update = self.att.attend(&self.norm_q.forward(query)?, &ctx, &ctx)?;
        Ok((query + update)?)
    }
}

/// Pre-norm residual feed-forward network `C → 4C → C`.
pub struct FeedForward {
    norm: LayerNorm,
    fc1: Linear,
    fc2: Linear,
}

impl FeedForward {
    fn new(scope: &mut Scope<'_>, name: &str, channels: usize) -> Result<Self> {
        let mut s = scope.sub(name);
        Ok(Self {
            norm: LayerNorm::new(&mut s, "norm", channels)?,
            fc1: Linear::new(&mut s, "fc1", channels, 4 * channels, true)?,
            fc2: Linear::new(&mut s, "fc2", 4 * channels, channels, true)?,
        })
    }

    fn forward(&self, x: &Tensor) -> Result<Tensor> {
        let h = self.fc1.forward(&self.norm.forward(x)?)?.relu()?;
        Ok((x + self.fc2.forward(&h)?)?)
    }
}

/// One interlaced layer: a cross-attention block and an FFN per modality.
pub struct IctmLayer {
    /// Models the camera stream (keys/values from the camera tokens).
    pub camera_att: AttentionBlock,
    /// Models the LiDAR stream (keys/values from the LiDAR tokens).
    pub lidar_att: AttentionBlock,
    pub camera_ffn: FeedForward,
    pub lidar_ffn: FeedForward,
}

impl IctmLayer {
    pub fn new(scope: &mut Scope<'_>, name: &str, channels: usize, heads: usize) -> Result<Self> {
        let mut s = scope.sub(name);
        Ok(Self {
            camera_att: AttentionBlock::new(&mut s, "camera_att", channels, heads)?,
            lidar_att: AttentionBlock::new(&mut s, "lidar_att", channels, heads)?,
            camera_ffn: FeedForward::new(&mut s, "camera_ffn", channels)?,
            lidar_ffn: FeedForward::new(&mut s, "lidar_ffn", channels)?,
        })
    }

    /// `C←guide`. With the literal query assignment the guiding stream is the
    /// query and the camera stream supplies keys and values.
    fn model_camera(&self, guide: &Tensor, camera: &Tensor, q_is_target: bool) -> Result<Tensor> {
        if q_is_target {
            self.camera_att.forward(camera, guide)
        } else {
            self.camera_att.forward(guide, camera)
        }
    }

    /// `L←guide`.
    fn model_lidar(&self, guide: &Tensor, lidar: &Tensor, q_is_target: bool) -> Result<Tensor> {
        if q_is_target {
            self.lidar_att.forward(lidar, guide)
        } else {
            self.lidar_att.forward(guide, lidar)
        }
    }

    pub fn forward(
        &self,
        lidar: &TokenSequence,
        camera: &TokenSequence,
        strategy: Strategy,
        q_is_target: bool,
    ) -> Result<(TokenSequence, TokenSequence)> {
        if lidar.channels() != camera.channels() || (lidar.batch, lidar.parts) != (camera.batch, camera.parts) {
            return Err(Error::Shape("ictm layer: LiDAR and camera token streams are incompatible".into()));
        }
        let (l, c) = (&lidar.values, &camera.values);
        let (l_out, c_out) = match strategy {
            Strategy::CamFirst => {
                let c_opt = self.model_camera(l, c, q_is_target)?;
                let l_opt = self.model_lidar(&c_opt, l, q_is_target)?;
                (self.lidar_ffn.forward(&l_opt)?, self.camera_ffn.forward(&c_opt)?)
            }
            Strategy::LidarFirst => {
                let l_opt = self.model_lidar(c, l, q_is_target)?;
                let c_opt = self.model_camera(&l_opt, c, q_is_target)?;
                (self.lidar_ffn.forward(&l_opt)?, self.camera_ffn.forward(&c_opt)?)
            }
            Strategy::Simultaneous => {
                let c_opt = self.model_camera(l, c, q_is_target)?;
                let l_opt = self.model_lidar(c, l, q_is_target)?;
                (self.lidar_ffn.forward(&l_opt)?, self.camera_ffn.forward(&c_opt)?)
            }
            Strategy::CamFromLidarOnly => {
                let c_opt = self.model_camera(l, c, q_is_target)?;
                (l.clone(), self.camera_ffn.forward(&c_opt)?)
            }
            Strategy::LidarFromCamOnly => {
                let l_opt = self.model_lidar(c, l, q_is_target)?;
                (self.lidar_ffn.forward(&l_opt)?, c.clone())
            }
        };
        Ok((lidar.with_values(l_out), camera.with_values(c_out)))
    }
}

/// Final class tokens of both streams, each `[N, C, P]`.
pub struct ClassTokens {
    pub lidar: Tensor,
    pub camera: Tensor,
}

#[derive(Debug, Clone, PartialEq)]
pub struct IctmConfig {
    pub channels: usize,
    pub heads: usize,
    pub layers: usize,
    pub strategy: Strategy,
    pub q_is_target: bool,
}

pub struct Ictm {
    config: IctmConfig,
    pub lidar_cls: Var,
    pub camera_cls: Var,
    pub layers: Vec<IctmLayer>,
    /// Applied to the final class tokens.
    pub lidar_norm: LayerNorm,
    pub camera_norm: LayerNorm,
}

impl Ictm {
    pub fn new(scope: &mut Scope<'_>, name: &str, config: IctmConfig) -> Result<Self> {
        let mut s = scope.sub(name);
        let c = config.channels;
        let lidar_cls = s.uniform("lidar_cls", &[c], 0.02)?;
        let camera_cls = s.uniform("camera_cls", &[c], 0.02)?;
        let layers = (0..config.layers)
            .map(|i| IctmLayer::new(&mut s, &format!("layer{i}"), c, config.heads))
            .collect::<Result<Vec<_>>>()?;
        Ok(Self {
            config,
            lidar_cls,
            camera_cls,
            layers,
            lidar_norm: LayerNorm::new(&mut s, "lidar_norm", c)?,
            camera_norm: LayerNorm::new(&mut s, "camera_norm", c)?,
        })
    }

    pub fn config(&self) -> &IctmConfig {
        &self.config
    }

    fn prepend(token: &Var, seq: &Tensor) -> Result<TokenSequence> {
        let seq = TokenSequence::from_nctp(seq)?;
        let (rows, _, c) = seq.values.dims3()?;
        if c != token.dims()[0] {
            return Err(Error::Shape(format!(
                "class token has {} channels, sequence has {c}",
                token.dims()[0]
            )));
        }
        let cls = token.as_tensor().reshape((1, 1, c))?.broadcast_as((rows, 1, c))?;
        let values = Tensor::cat(&[&cls, &seq.values], 1)?;
        Ok(seq.with_values(values))
    }

    /// Prepend the learned class tokens at time index 0: `[N,C,T,P] → [N,C,T+1,P]` per stream.
    pub fn attach_class_tokens(&self, s_l: &Tensor, s_c: &Tensor) -> Result<(TokenSequence, TokenSequence)> {
        Ok((Self::prepend(&self.lidar_cls, s_l)?, Self::prepend(&self.camera_cls, s_c)?))
    }

    /// Time-index-0 tokens after the last layer, layer-normalized per stream.
    pub fn forward(&self, s_l: &Tensor, s_c: &Tensor) -> Result<ClassTokens> {
        let (mut l, mut c) = self.attach_class_tokens(s_l, s_c)?;
        for layer in &self.layers {
            (l, c) = layer.forward(&l, &c, self.config.strategy, self.config.q_is_target)?;
        }
        let norm = |ln: &LayerNorm, t: Tensor| -> Result<Tensor> { Ok(ln.forward(&t.permute((0, 2, 1))?)?.permute((0, 2, 1))?.contiguous()?) };
        Ok(ClassTokens {
            lidar: norm(&self.lidar_norm, l.class_token()?)?,
            camera: norm(&self.camera_norm, c.class_token()?)?,
        })
    }
}

/// Temporal max pooling over frames: the no-ICTM ablation baseline.
pub fn temporal_max(s_l: &Tensor, s_c: &Tensor) -> Result<ClassTokens> {
    Ok(ClassTokens {
        lidar: s_l.max(2)?,
        camera: s_c.max(2)?,
    })
}
