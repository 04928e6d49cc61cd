//! Fusion of the two class-token outputs and the metric-learning objective.

use candle_core::{DType, Device, Tensor, Var};

use crate::error::{Error, Result};
use crate::nn::{log_softmax_last, Linear, Scope};

/// Added under the square root of squared distances so the gradient stays
/// finite for coincident embeddings.
const DIST_EPS: f64 = 1e-12;

/// Per-modality projections and the per-part identity classifiers.
pub struct FusionHead {
    pub lidar_fc: Linear,
    pub camera_fc: Linear,
    /// `[P, C3, num_classes]`, one classifier matrix per part.
    pub classifier: Var,
}

impl FusionHead {
    pub fn new(scope: &mut Scope<'_>, name: &str, channels: usize, half: usize, parts: usize, classes: usize) -> Result<Self> {
        let mut s = scope.sub(name);
        let lidar_fc = Linear::new(&mut s, "lidar_fc", channels, half, true)?;
        let camera_fc = Linear::new(&mut s, "camera_fc", channels, half, true)?;
        let bound = 1.0 / ((2 * half) as f64).sqrt();
        let classifier = s.uniform("classifier", &[parts, 2 * half, classes], bound)?;
        Ok(Self {
            lidar_fc,
            camera_fc,
            classifier,
        })
    }

    /// `Concat(FC(cls_L), FC(cls_C))` applied per part: `[N, C, P]` ×2 → `[N, 2·half, P]`.
    pub fn fuse(&self, cls_l: &Tensor, cls_c: &Tensor) -> Result<Tensor> {
        fuse(cls_l, cls_c, &self.lidar_fc, &self.camera_fc)
    }

    pub fn num_classes(&self) -> usize {
        self.classifier.dims()[2]
    }
}

pub fn fuse(cls_l: &Tensor, cls_c: &Tensor, lidar_fc: &Linear, camera_fc: &Linear) -> Result<Tensor> {
    if cls_l.dims() != cls_c.dims() {
        return Err(Error::Shape(format!(
            "fuse: LiDAR tokens {:?} and camera tokens {:?} differ",
            cls_l.dims(),
            cls_c.dims()
        )));
    }
    let l = lidar_fc.forward(&cls_l.permute((0, 2, 1))?)?;
    let c = camera_fc.forward(&cls_c.permute((0, 2, 1))?)?;
    Ok(Tensor::cat(&[&l, &c], 2)?.permute((0, 2, 1))?.contiguous()?)
}

/// Euclidean distance matrices per part: `[N, C, P]` → `[P, N, N]`.
pub fn part_distances(emb: &Tensor) -> Result<Tensor> {
    let x = emb.permute((2, 0, 1))?.contiguous()?;
    let sq = x.sqr()?.sum_keepdim(2)?;
    let gram = x.matmul(&x.transpose(1, 2)?.contiguous()?)?;
    let d2 = sq.broadcast_add(&sq.transpose(1, 2)?)?.sub(&(gram * 2.0)?)?.relu()?;
    Ok((d2 + DIST_EPS)?.sqrt()?)
}

/// Batch-all triplet loss.
///
/// Per part, every (anchor, positive, negative) triple with
/// `label(a) = label(p) ≠ label(n)`, `a ≠ p` contributes
/// `max(0, d(a,p) − d(a,n) + margin)`; the hinge values are averaged over the
/// active (strictly positive) triples and the result averaged over parts.
pub fn triplet_loss_batch_all(emb: &Tensor, labels: &[usize], margin: f64) -> Result<Tensor> {
    let (n, _, _) = emb.dims3()?;
    if labels.len() != n {
        return Err(Error::Shape(format!("{} labels for a batch of {n}", labels.len())));
    }
    let mut distinct = labels.to_vec();
    distinct.sort_unstable();
    distinct.dedup();
    if distinct.len() < 2 {
        return Err(Error::TripletUndefined(format!(
            "batch holds {} distinct label(s), need at least 2",
            distinct.len()
        )));
    }
    let mut mask = vec![0.0f64; n * n * n];
    for a in 0..n {
        for p in 0..n {
            if a == p || labels[a] != labels[p] {
                continue;
            }
            for q in 0..n {
                if labels[q] != labels[a] {
                    mask[(a * n + p) * n + q] = 1.0;
                }
            }
        }
    }
    let dtype = emb.dtype();
    let mask = Tensor::from_vec(mask, (1, n, n, n), emb.device())?.to_dtype(dtype)?;
    let d = part_distances(emb)?;
    let d_ap = d.unsqueeze(3)?;
    let d_an = d.unsqueeze(2)?;
    let hinge = (d_ap.broadcast_sub(&d_an)? + margin)?.relu()?.broadcast_mul(&mask)?;
    let active = hinge.detach().gt(0.0)?.to_dtype(dtype)?.sum((1, 2, 3))?;
    let per_part = hinge.sum((1, 2, 3))?.div(&active.clamp(1.0, f64::INFINITY)?)?;
    Ok(per_part.mean_all()?)
}

fn one_hot(labels: &[usize], classes: usize, dtype: DType, device: &Device) -> Result<Tensor> {
    let mut v = vec![0.0f64; labels.len() * classes];
    for (i, &l) in labels.iter().enumerate() {
        if l >= classes {
            return Err(Error::LabelOutOfRange { label: l, classes });
        }
        v[i * classes + l] = 1.0;
    }
    Ok(Tensor::from_vec(v, (1, labels.len(), classes), device)?.to_dtype(dtype)?)
}

/// Softmax cross-entropy of `[P, N, K]` logits, averaged over parts and samples.
pub fn cross_entropy_from_logits(logits: &Tensor, labels: &[usize]) -> Result<Tensor> {
    let (_, n, k) = logits.dims3()?;
    if labels.len() != n {
        return Err(Error::Shape(format!("{} labels for {n} logit rows", labels.len())));
    }
    let targets = one_hot(labels, k, logits.dtype(), logits.device())?;
    let nll = log_softmax_last(logits)?.broadcast_mul(&targets)?.sum(2)?.neg()?;
    Ok(nll.mean_all()?)
}

/// Per-part classification loss: part `p` of `emb` (`[N, C3, P]`) goes through
/// `classifier[p]` (`[C3, K]`).
pub fn cross_entropy_loss(emb: &Tensor, labels: &[usize], classifier: &Tensor) -> Result<Tensor> {
    let x = emb.permute((2, 0, 1))?.contiguous()?;
    let logits = x.matmul(classifier)?;
    cross_entropy_from_logits(&logits, labels)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LossConfig {
    pub margin: f64,
    pub tri_weight: f64,
    pub ce_weight: f64,
}

impl Default for LossConfig {
    fn default() -> Self {
        Self {
            margin: 0.2,
            tri_weight: 1.0,
            ce_weight: 1.0,
        }
    }
}

pub struct LossParts {
    pub total: Tensor,
    pub triplet: Tensor,
    pub ce: Tensor,
}

/// `L = w_tri·L_tri + w_ce·L_ce` (unit weights by default). `class_labels`
/// index the classifier columns; `identities` drive triplet mining.
pub fn total_loss(emb: &Tensor, identities: &[usize], class_labels: &[usize], classifier: &Tensor, cfg: &LossConfig) -> Result<LossParts> {
    let triplet = triplet_loss_batch_all(emb, identities, cfg.margin)?;
    let ce = cross_entropy_loss(emb, class_labels, classifier)?;
    let total = ((&triplet * cfg.tri_weight)? + (&ce * cfg.ce_weight)?)?;
    Ok(LossParts { total, triplet, ce })
}
