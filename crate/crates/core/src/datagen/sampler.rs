//! Batch-all (p subjects × k sequences) sampling with aligned temporal crops.

use std::collections::BTreeMap;

use candle_core::{Device, Tensor};
use rand::seq::index::sample;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::render::{ModalSequencePair, FRAME_RATIO};
use crate::error::{Error, Result};

/// Network input. Values are in `[0, 1]`.
#[derive(Debug, Clone)]
pub struct ModalBatch {
    /// `[N, 1, T_C, H, W]`
    pub silhouettes: Tensor,
    /// `[N, 3, T_L, H, W]`
    pub depths: Tensor,
    /// Subject id of each sample.
    pub labels: Vec<usize>,
}

/// Depth frame indices of a `window`-long crop starting at `start`, looping
/// cyclically over a sequence of `len` frames.
pub fn crop_indices(start: usize, window: usize, len: usize) -> Vec<usize> {
    (0..window).map(|j| (start + j) % len).collect()
}

fn push_silhouettes(out: &mut Vec<f32>, seq: &ModalSequencePair, frames: impl Iterator<Item = usize>) {
    for t in frames {
        out.extend(seq.silhouette(t).iter().map(|&v| f32::from(v)));
    }
}

fn push_depths(out: &mut Vec<f32>, seq: &ModalSequencePair, frames: &[usize]) {
    // [3, T, H, W]: channel-major across the window
    let plane = seq.size * seq.size;
    for c in 0..3 {
        for &t in frames {
            let d = &seq.depth(t)[c * plane..(c + 1) * plane];
            out.extend(d.iter().map(|&v| f32::from(v) / 255.0));
        }
    }
}

/// One full sequence as a batch of size 1.
pub fn sequence_batch(seq: &ModalSequencePair) -> Result<ModalBatch> {
    let n = seq.size;
    let (t_c, t_l) = (seq.t_c(), seq.t_l());
    let mut sils = Vec::with_capacity(t_c * n * n);
    push_silhouettes(&mut sils, seq, 0..t_c);
    let mut depths = Vec::with_capacity(3 * t_l * n * n);
    push_depths(&mut depths, seq, &(0..t_l).collect::<Vec<_>>());
    Ok(ModalBatch {
        silhouettes: Tensor::from_vec(sils, (1, 1, t_c, n, n), &Device::Cpu)?,
        depths: Tensor::from_vec(depths, (1, 3, t_l, n, n), &Device::Cpu)?,
        labels: vec![seq.subject_id],
    })
}

/// Owns the loaded sequences and its own RNG; one sampler per training thread.
pub struct Sampler {
    sequences: Vec<ModalSequencePair>,
    by_subject: BTreeMap<usize, Vec<usize>>,
    rng: ChaCha8Rng,
}

impl Sampler {
    pub fn new(sequences: Vec<ModalSequencePair>, seed: u64) -> Result<Self> {
        let mut by_subject: BTreeMap<usize, Vec<usize>> = BTreeMap::new();
        let mut size = None;
        for (i, s) in sequences.iter().enumerate() {
            if *size.get_or_insert(s.size) != s.size {
                return Err(Error::Sampling(format!("sequence {i} has frame size {}, expected {}", s.size, size.unwrap_or(0))));
            }
            if s.t_l() == 0 || s.t_c() != FRAME_RATIO * s.t_l() {
                return Err(Error::Sampling(format!(
                    "sequence {i} has {} silhouettes for {} depth frames",
                    s.t_c(),
                    s.t_l()
                )));
            }
            by_subject.entry(s.subject_id).or_default().push(i);
        }
        Ok(Self {
            sequences,
            by_subject,
            rng: ChaCha8Rng::seed_from_u64(seed),
        })
    }

    pub fn subjects(&self) -> Vec<usize> {
        self.by_subject.keys().copied().collect()
    }

    pub fn sequences(&self) -> &[ModalSequencePair] {
        &self.sequences
    }

    /// `p` distinct subjects, `k` sequences each, every sequence cropped to
    /// `t_l` depth frames and the `3·t_l` silhouettes aligned with them.
    pub fn sample_batch(&mut self, p: usize, k: usize, t_l: usize) -> Result<ModalBatch> {
        let subjects = self.subjects();
        if p == 0 || k == 0 || t_l == 0 {
            return Err(Error::Sampling(format!("p, k and t_l must be positive (got {p}, {k}, {t_l})")));
        }
        if subjects.len() < p {
            return Err(Error::Sampling(format!(
                "need {p} subjects, dataset has {}",
                subjects.len()
            )));
        }
        let n = self.sequences[0].size;
        let t_c = FRAME_RATIO * t_l;
        let batch = p * k;
        let mut sils = Vec::with_capacity(batch * t_c * n * n);
        let mut depths = Vec::with_capacity(batch * 3 * t_l * n * n);
        let mut labels = Vec::with_capacity(batch);

        let mut chosen = sample(&mut self.rng, subjects.len(), p).into_vec();
        chosen.sort_unstable();
        for si in chosen {
            let sid = subjects[si];
            let pool = &self.by_subject[&sid];
            let picks: Vec<usize> = if pool.len() >= k {
                sample(&mut self.rng, pool.len(), k).into_iter().map(|i| pool[i]).collect()
            } else {
                (0..k).map(|_| pool[self.rng.random_range(0..pool.len())]).collect()
            };
            for idx in picks {
                let seq = &self.sequences[idx];
                let len = seq.t_l();
                let start = self.rng.random_range(0..len);
                let frames = crop_indices(start, t_l, len);
                let sil_frames = (0..t_c).map(|i| (FRAME_RATIO * start + i) % seq.t_c());
                push_silhouettes(&mut sils, seq, sil_frames);
                push_depths(&mut depths, seq, &frames);
                labels.push(sid);
            }
        }
        Ok(ModalBatch {
            silhouettes: Tensor::from_vec(sils, (batch, 1, t_c, n, n), &Device::Cpu)?,
            depths: Tensor::from_vec(depths, (batch, 3, t_l, n, n), &Device::Cpu)?,
            labels,
        })
    }
}
