//! End-to-end network: extractors → ACCA → HPP → ICTM → fusion head.

use candle_core::{DType, Tensor};

use crate::acca::{blend_and_pool, Acca};
use crate::backbone::{hpp, Extractor, ExtractorConfig, DEFAULT_BINS};
use crate::error::{Error, Result};
use crate::head::FusionHead;
use crate::ictm::{temporal_max, ClassTokens, Ictm, IctmConfig};
use crate::nn::{Mode, ParamStore};
use crate::strategy::Strategy;

#[derive(Debug, Clone, PartialEq)]
pub struct ModelConfig {
    /// Residual stage widths; the last one is `C0 = C1 = C2`.
    pub widths: [usize; 4],
    pub stem_stride: usize,
    pub input_size: usize,
    pub bins: Vec<usize>,
    pub heads: usize,
    pub layers: usize,
    /// Output width of each modality's projection; the embedding has twice this.
    pub embed_half: usize,
    pub num_classes: usize,
    pub acca_strategy: Strategy,
    pub ictm_strategy: Strategy,
    pub q_is_target: bool,
    /// `false` bypasses channel attention (`S = HPP(F)`).
    pub use_acca: bool,
    /// `false` replaces the temporal transformer by max pooling over frames.
    pub use_ictm: bool,
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self {
            widths: [64, 128, 256, 512],
            stem_stride: 1,
            input_size: 64,
            bins: DEFAULT_BINS.to_vec(),
            heads: 16,
            layers: 2,
            embed_half: 128,
            num_classes: 8,
            acca_strategy: Strategy::ACCA_DEFAULT,
            ictm_strategy: Strategy::ICTM_DEFAULT,
            q_is_target: false,
            use_acca: true,
            use_ictm: true,
        }
    }
}

impl ModelConfig {
    /// Reduced-width variant (`C = 64`) sized for single-core CPU training.
    pub fn desk() -> Self {
        Self {
            widths: [8, 16, 32, 64],
            stem_stride: 4,
            bins: vec![1, 2, 4],
            embed_half: 32,
            ..Self::default()
        }
    }

    pub fn channels(&self) -> usize {
        self.widths[3]
    }

    pub fn parts(&self) -> usize {
        self.bins.iter().sum()
    }

    pub fn embed_dim(&self) -> usize {
        2 * self.embed_half
    }

    fn extractor(&self, in_channels: usize) -> ExtractorConfig {
        ExtractorConfig {
            in_channels,
            widths: self.widths,
            stem_stride: self.stem_stride,
            input_size: self.input_size,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let out = self.extractor(1).output_size();
        if self.stem_stride == 0 || self.input_size % (4 * self.stem_stride) != 0 {
            return Err(Error::Config(format!(
                "input size {} incompatible with stem stride {}",
                self.input_size, self.stem_stride
            )));
        }
        if let Some(&b) = self.bins.iter().find(|&&b| b == 0 || out % b != 0) {
            return Err(Error::Config(format!(
                "feature map height {out} is not divisible into {b} strips"
            )));
        }
        if self.num_classes == 0 {
            return Err(Error::Config("num_classes must be positive".into()));
        }
        Ok(())
    }
}

/// Intermediate results of one forward pass.
pub struct ForwardOutput {
    pub embedding: Tensor,
    pub tokens: ClassTokens,
}

pub struct Licaf {
    config: ModelConfig,
    store: ParamStore,
    lidar_ext: Extractor,
    camera_ext: Extractor,
    acca: Option<Acca>,
    ictm: Option<Ictm>,
    head: FusionHead,
}

impl Licaf {
    pub fn new(config: ModelConfig, dtype: DType, seed: u64) -> Result<Self> {
        config.validate()?;
        let mut store = ParamStore::new(dtype, seed);
        let c = config.channels();
        let (lidar_ext, camera_ext, acca, ictm, head) = {
            let mut root = store.root();
            let lidar_ext = Extractor::new(&mut root, "lidar_extractor", config.extractor(3))?;
            let camera_ext = Extractor::new(&mut root, "camera_extractor", config.extractor(1))?;
            let acca = if config.use_acca {
                Some(Acca::new(&mut root, "acca", c)?)
            } else {
                None
            };
            let ictm = if config.use_ictm {
                let cfg = IctmConfig {
                    channels: c,
                    heads: config.heads,
                    layers: config.layers,
                    strategy: config.ictm_strategy,
                    q_is_target: config.q_is_target,
                };
                Some(Ictm::new(&mut root, "ictm", cfg)?)
            } else {
                None
            };
            let head = FusionHead::new(&mut root, "head", c, config.embed_half, config.parts(), config.num_classes)?;
            (lidar_ext, camera_ext, acca, ictm, head)
        };
        Ok(Self {
            config,
            store,
            lidar_ext,
            camera_ext,
            acca,
            ictm,
            head,
        })
    }

    pub fn config(&self) -> &ModelConfig {
        &self.config
    }

    pub fn store(&self) -> &ParamStore {
        &self.store
    }

    pub fn head(&self) -> &FusionHead {
        &self.head
    }

    pub fn acca(&self) -> Option<&Acca> {
        self.acca.as_ref()
    }

    pub fn dtype(&self) -> DType {
        self.store.dtype()
    }

    /// Part sequences `(S_L, S_C)` from raw frames.
    pub fn part_sequences(&self, silhouettes: &Tensor, depths: &Tensor, mode: Mode) -> Result<(Tensor, Tensor)> {
        let f_l = self.lidar_ext.forward(depths, mode)?;
        let f_c = self.camera_ext.forward(silhouettes, mode)?;
        let bins = &self.config.bins;
        match &self.acca {
            Some(acca) => {
                let e = acca.forward(&f_l, &f_c, self.config.acca_strategy)?;
                Ok((
                    blend_and_pool(&f_l, &e.lidar, acca.alpha.as_tensor(), bins)?,
                    blend_and_pool(&f_c, &e.camera, acca.beta.as_tensor(), bins)?,
                ))
            }
            None => Ok((hpp(&f_l, bins)?, hpp(&f_c, bins)?)),
        }
    }

    /// `silhouettes` `[N, 1, T_C, H, W]` and `depths` `[N, 3, T_L, H, W]` to
    /// the fused `[N, 2·embed_half, P]` embedding.
    pub fn forward(&self, silhouettes: &Tensor, depths: &Tensor, mode: Mode) -> Result<ForwardOutput> {
        if silhouettes.dim(0)? != depths.dim(0)? {
            return Err(Error::Shape(format!(
                "silhouette batch {} and depth batch {} differ",
                silhouettes.dim(0)?,
                depths.dim(0)?
            )));
        }
        let silhouettes = silhouettes.to_dtype(self.dtype())?;
        let depths = depths.to_dtype(self.dtype())?;
        let (s_l, s_c) = self.part_sequences(&silhouettes, &depths, mode)?;
        let tokens = match &self.ictm {
            Some(ictm) => ictm.forward(&s_l, &s_c)?,
            None => temporal_max(&s_l, &s_c)?,
        };
        let embedding = self.head.fuse(&tokens.lidar, &tokens.camera)?;
        Ok(ForwardOutput { embedding, tokens })
    }
}
