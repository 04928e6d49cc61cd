//! Gallery/probe retrieval evaluation.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::time::Instant;

use candle_core::{DType, Tensor};

use crate::datagen::{sequence_batch, ModalSequencePair};
use crate::error::{Error, Result};
use crate::model::Licaf;
use crate::nn::Mode;

/// Condition tag of the gallery sequences.
pub const GALLERY_CONDITION: &str = "normal";

/// Embeddings `[N, C, P]` with the subject and condition of each row.
#[derive(Debug, Clone)]
pub struct Embeddings {
    pub values: Tensor,
    pub subjects: Vec<usize>,
    pub conditions: Vec<String>,
}

impl Embeddings {
    pub fn len(&self) -> usize {
        self.subjects.len()
    }

    pub fn is_empty(&self) -> bool {
        self.subjects.is_empty()
    }
}

/// Forward every sequence at its full length, one at a time, in eval mode.
pub fn embed_sequences(model: &Licaf, seqs: &[ModalSequencePair]) -> Result<Embeddings> {
    let mut rows = Vec::with_capacity(seqs.len());
    for seq in seqs {
        let b = sequence_batch(seq)?;
        rows.push(model.forward(&b.silhouettes, &b.depths, Mode::Eval)?.embedding.detach());
    }
    let values = if rows.is_empty() {
        Tensor::zeros((0, model.config().embed_dim(), model.config().parts()), model.dtype(), &candle_core::Device::Cpu)?
    } else {
        Tensor::cat(&rows, 0)?
    };
    Ok(Embeddings {
        values,
        subjects: seqs.iter().map(|s| s.subject_id).collect(),
        conditions: seqs.iter().map(|s| s.condition.clone()).collect(),
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct RankStats {
    pub probes: usize,
    /// Percentages in `[0, 100]`.
    pub rank1: f64,
    pub rank5: f64,
}

#[derive(Debug, Clone)]
pub struct EvalReport {
    /// Keyed by condition tag.
    pub per_condition: BTreeMap<String, RankStats>,
    /// Pooled over every evaluated probe.
    pub overall: RankStats,
    pub gallery_size: usize,
    pub probe_size: usize,
    /// Probes whose subject has no gallery entry.
    pub excluded: usize,
    pub wall_time_s: f64,
}

impl EvalReport {
    pub fn table(&self) -> String {
        let mut s = format!("{:<12} {:>7} {:>8} {:>8}\n", "condition", "probes", "rank-1", "rank-5");
        let mut line = |name: &str, r: &RankStats| {
            let _ = writeln!(s, "{name:<12} {:>7} {:>7.2}% {:>7.2}%", r.probes, r.rank1, r.rank5);
        };
        for (c, r) in &self.per_condition {
            line(c, r);
        }
        line("overall", &self.overall);
        let _ = writeln!(
            s,
            "gallery {} | probes {} | excluded {} | {:.2}s",
            self.gallery_size, self.probe_size, self.excluded, self.wall_time_s
        );
        s
    }

    pub fn csv(&self) -> String {
        let mut s = String::from("condition,probes,rank1,rank5\n");
        for (c, r) in self.per_condition.iter().chain(std::iter::once((&"overall".to_string(), &self.overall))) {
            let _ = writeln!(s, "{c},{},{},{}", r.probes, r.rank1, r.rank5);
        }
        s
    }
}

fn rows(t: &Tensor) -> Result<Vec<Vec<Vec<f64>>>> {
    Ok(t.to_dtype(DType::F64)?.to_vec3::<f64>()?)
}

/// Mean over parts of the per-part Euclidean distance between two `[C, P]`
/// embeddings.
pub fn embedding_distance(a: &[Vec<f64>], b: &[Vec<f64>]) -> f64 {
    let parts = a.first().map_or(0, |r| r.len());
    let mut sum = 0.0;
    for p in 0..parts {
        let d2: f64 = a.iter().zip(b).map(|(ra, rb)| (ra[p] - rb[p]).powi(2)).sum();
        sum += d2.sqrt();
    }
    sum / parts as f64
}

/// Rank each probe's gallery by distance (ties broken by gallery order); a
/// rank-r hit means one of the r nearest entries shares the probe's subject.
pub fn evaluate_retrieval(gallery: &Embeddings, probes: &Embeddings) -> Result<EvalReport> {
    let start = Instant::now();
    if gallery.is_empty() {
        return Err(Error::Config("gallery is empty".into()));
    }
    let g = rows(&gallery.values)?;
    let q = rows(&probes.values)?;
    if g[0].len() != q.first().map_or(g[0].len(), |r| r.len()) {
        return Err(Error::Shape("gallery and probe embeddings differ in width".into()));
    }
    let mut hits: BTreeMap<String, (usize, usize, usize)> = BTreeMap::new();
    let mut excluded = 0;
    for (i, probe) in q.iter().enumerate() {
        let sid = probes.subjects[i];
        let dist: Vec<f64> = g.iter().map(|e| embedding_distance(probe, e)).collect();
        // first same-subject entry in (distance, index) order
        let Some(best) = (0..g.len())
            .filter(|&j| gallery.subjects[j] == sid)
            .min_by(|&a, &b| dist[a].total_cmp(&dist[b]).then(a.cmp(&b)))
        else {
            excluded += 1;
            continue;
        };
        let rank = (0..g.len())
            .filter(|&j| dist[j] < dist[best] || (dist[j] == dist[best] && j < best))
            .count();
        let entry = hits.entry(probes.conditions[i].clone()).or_default();
        entry.0 += 1;
        entry.1 += usize::from(rank < 1);
        entry.2 += usize::from(rank < 5);
    }
    let pct = |h: usize, n: usize| if n == 0 { 0.0 } else { 100.0 * h as f64 / n as f64 };
    let stats = |(n, r1, r5): (usize, usize, usize)| RankStats {
        probes: n,
        rank1: pct(r1, n),
        rank5: pct(r5, n),
    };
    let pooled = hits.values().fold((0, 0, 0), |a, b| (a.0 + b.0, a.1 + b.1, a.2 + b.2));
    Ok(EvalReport {
        per_condition: hits.into_iter().map(|(c, h)| (c, stats(h))).collect(),
        overall: stats(pooled),
        gallery_size: gallery.len(),
        probe_size: probes.len(),
        excluded,
        wall_time_s: start.elapsed().as_secs_f64(),
    })
}

/// Which sequences act as probes.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Protocol {
    /// Non-gallery-condition training sequences.
    Train,
    /// Every held-out sequence.
    HeldOut,
}

/// Gallery: training sequences under the gallery condition. Probes per
/// `protocol`.
pub fn evaluate_model(model: &Licaf, train: &[ModalSequencePair], held_out: &[ModalSequencePair], protocol: Protocol) -> Result<EvalReport> {
    let start = Instant::now();
    let (gallery, train_probes): (Vec<_>, Vec<_>) =
        train.iter().cloned().partition(|s| s.condition == GALLERY_CONDITION);
    let probes = match protocol {
        Protocol::Train => train_probes,
        Protocol::HeldOut => held_out.to_vec(),
    };
    let g = embed_sequences(model, &gallery)?;
    let q = embed_sequences(model, &probes)?;
    let mut report = evaluate_retrieval(&g, &q)?;
    report.wall_time_s = start.elapsed().as_secs_f64();
    Ok(report)
}
