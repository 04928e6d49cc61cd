//! Deterministic training loop.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use candle_core::DType;

use super::checkpoint;
use super::config::TrainConfig;
use super::sgd::Sgd;
use crate::datagen::{read_manifest, load_sequence, ModalSequencePair, Sampler};
use crate::error::{Error, Result};
use crate::head::total_loss;
use crate::model::Licaf;
use crate::nn::Mode;

pub const LOG_FILE: &str = "train_log.csv";
pub const FINAL_CHECKPOINT: &str = "final.ckpt";

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LogRow {
    pub iter: usize,
    pub l_tri: f64,
    pub l_ce: f64,
    pub total: f64,
    pub lr: f64,
}

pub struct TrainOutcome {
    pub model: Licaf,
    pub log: Vec<LogRow>,
    /// Subject id of each classifier column.
    pub class_ids: Vec<usize>,
}

pub fn log_csv(rows: &[LogRow]) -> String {
    let mut s = String::from("iter,l_tri,l_ce,total,lr\n");
    for r in rows {
        let _ = writeln!(s, "{},{},{},{},{}", r.iter, r.l_tri, r.l_ce, r.total, r.lr);
    }
    s
}

pub fn milestone_checkpoint(iter: usize) -> String {
    format!("iter_{iter:06}.ckpt")
}

/// Dataset sequences paired with their position among the subject's
/// sequences in manifest order.
pub fn load_indexed(root: &Path) -> Result<Vec<(usize, ModalSequencePair)>> {
    let manifest = read_manifest(root)?;
    let mut seen = std::collections::BTreeMap::<usize, usize>::new();
    manifest
        .entries
        .iter()
        .map(|e| {
            let idx = seen.entry(e.subject_id).or_insert(0);
            let i = *idx;
            *idx += 1;
            load_sequence(root, e).map(|s| (i, s))
        })
        .collect()
}

/// `(train, held_out)`: sequences with per-subject index below
/// `train_sequences` train; `None` puts everything in the training split.
pub fn split(indexed: Vec<(usize, ModalSequencePair)>, train_sequences: Option<usize>) -> (Vec<ModalSequencePair>, Vec<ModalSequencePair>) {
    let limit = train_sequences.unwrap_or(usize::MAX);
    let (train, held): (Vec<_>, Vec<_>) = indexed.into_iter().partition(|(i, _)| *i < limit);
    (train.into_iter().map(|(_, s)| s).collect(), held.into_iter().map(|(_, s)| s).collect())
}

/// Train on `sequences`; with `out`, write the config, the CSV log, and the
/// milestone and final checkpoints there.
pub fn train(cfg: &TrainConfig, sequences: Vec<ModalSequencePair>, out: Option<&Path>) -> Result<TrainOutcome> {
    cfg.validate()?;
    let sampler_seed = cfg.seed.wrapping_mul(0x9E37_79B9_7F4A_7C15) ^ 0x5EED;
    let mut sampler = Sampler::new(sequences, sampler_seed)?;
    let class_ids = sampler.subjects();
    let mut model_cfg = cfg.model.clone();
    model_cfg.num_classes = class_ids.len();
    let model = Licaf::new(model_cfg, DType::F32, cfg.seed)?;
    let params = model.store().trainable().map(|(_, v)| v.clone()).collect();
    let mut opt = Sgd::new(params, cfg.momentum, cfg.weight_decay);

    if let Some(dir) = out {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        let path = dir.join("config.txt");
        fs::write(&path, cfg.to_text()).map_err(|e| Error::io(&path, e))?;
    }
    let milestones = cfg.scaled_milestones();
    let total = cfg.iterations();
    let mut log = Vec::with_capacity(total);
    for iter in 0..total {
        if let Some(dir) = out {
            if milestones.contains(&iter) && iter > 0 {
                checkpoint::save(&dir.join(milestone_checkpoint(iter)), &model)?;
            }
        }
        let lr = cfg.lr_at(iter);
        let batch = sampler.sample_batch(cfg.p, cfg.k, cfg.t_l)?;
        let classes: Vec<usize> = batch
            .labels
            .iter()
            .map(|id| class_ids.binary_search(id).expect("sampled subject is known"))
            .collect();
        let fwd = model.forward(&batch.silhouettes, &batch.depths, Mode::Train)?;
        let loss = total_loss(&fwd.embedding, &batch.labels, &classes, model.head().classifier.as_tensor(), &cfg.loss)?;
        let scalar = |t: &candle_core::Tensor| -> Result<f64> { Ok(t.to_dtype(DType::F64)?.to_scalar::<f64>()?) };
        let row = LogRow {
            iter,
            l_tri: scalar(&loss.triplet)?,
            l_ce: scalar(&loss.ce)?,
            total: scalar(&loss.total)?,
            lr,
        };
        if !row.total.is_finite() {
            let detail = format!("l_tri={} l_ce={} labels={:?}", row.l_tri, row.l_ce, batch.labels);
            if let Some(dir) = out {
                let path = dir.join("nonfinite_batch.txt");
                let dump = format!("iter = {iter}\nbatch_id = {iter}\n{detail}\n");
                fs::write(&path, dump).map_err(|e| Error::io(&path, e))?;
            }
            return Err(Error::NonFinite {
                iter,
                batch_id: iter,
                detail,
            });
        }
        let grads = loss.total.backward()?;
        opt.step(&grads, lr)?;
        log.push(row);
    }
    if let Some(dir) = out {
        checkpoint::save(&dir.join(FINAL_CHECKPOINT), &model)?;
        let path = dir.join(LOG_FILE);
        fs::write(&path, log_csv(&log)).map_err(|e| Error::io(&path, e))?;
    }
    Ok(TrainOutcome { model, log, class_ids })
}
