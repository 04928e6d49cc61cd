//! The synthetic dataset and reduced-width training setup used by the
//! training-level tests.
#![allow(dead_code)]

use std::path::Path;

use licaf::datagen::{generate_subjects, write_dataset, DatasetSpec, ModalSequencePair, DEFAULT_SIZE};
use licaf::harness::{load_indexed, split, TrainConfig};
use licaf::ModelConfig;

pub const SUBJECTS: usize = 8;
pub const TRAIN_SEQUENCES: usize = 4;
/// Two gallery sequences, two training probes, two held-out probes.
pub const CONDITIONS: [&str; 6] = ["normal", "normal", "bag", "clothing", "carrying", "umbrella"];

/// 8 subjects × 6 sequences of 7 depth frames written under `root`, split
/// into 4 training and 2 held-out sequences per subject.
pub fn dataset(root: &Path) -> (Vec<ModalSequencePair>, Vec<ModalSequencePair>) {
    let spec = DatasetSpec {
        sequences_per_subject: CONDITIONS.len(),
        conditions: CONDITIONS.iter().map(|c| c.to_string()).collect(),
        seed: 0,
        t_l: 7,
        size: DEFAULT_SIZE,
    };
    write_dataset(root, &generate_subjects(0, SUBJECTS), &spec).unwrap();
    split(load_indexed(root).unwrap(), Some(TRAIN_SEQUENCES))
}

/// Reduced-width model, 4×2 batches of 3-frame clips, default optimizer.
pub fn desk_config(scale: f64, seed: u64) -> TrainConfig {
    TrainConfig {
        p: 4,
        k: 2,
        t_l: 3,
        scale,
        seed,
        train_sequences: Some(TRAIN_SEQUENCES),
        model: ModelConfig::desk(),
        ..TrainConfig::default()
    }
}

/// Files written by a training run that must match between repeated runs.
pub const RUN_FILES: [&str; 4] = ["train_log.csv", "final.ckpt", "iter_000020.ckpt", "iter_000030.ckpt"];

/// Train the 40-iteration configuration (milestones 20 and 30) into `out`.
pub fn short_run(train: &[ModalSequencePair], out: &Path) -> Vec<licaf::harness::LogRow> {
    let cfg = desk_config(0.001, 3);
    licaf::harness::train(&cfg, train.to_vec(), Some(out)).unwrap().log
}

/// Names of the run files whose bytes differ between two output directories.
pub fn differing_files(a: &Path, b: &Path) -> Vec<String> {
    RUN_FILES
        .iter()
        .filter(|f| std::fs::read(a.join(f)).ok() != std::fs::read(b.join(f)).ok() || !a.join(f).exists())
        .map(|f| f.to_string())
        .collect()
}

/// Expected lr per iteration of the short run: 0.1, then 0.01 from 20 and
/// 0.001 from 30. Returns the first mismatch.
pub fn schedule_error(log: &[licaf::harness::LogRow], csv: &str) -> Option<String> {
    if log.len() != 40 {
        return Some(format!("{} iterations logged, expected 40", log.len()));
    }
    let want = |i: usize| if i < 20 { 0.1 } else if i < 30 { 0.01 } else { 0.001 };
    for r in log {
        if r.lr != want(r.iter) {
            return Some(format!("iter {}: lr {} (expected {})", r.iter, r.lr, want(r.iter)));
        }
    }
    for (i, line) in csv.lines().skip(1).enumerate() {
        let lr = line.rsplit(',').next().unwrap_or("");
        if lr != want(i).to_string() {
            return Some(format!("log line {i}: lr field {lr:?}"));
        }
    }
    None
}
