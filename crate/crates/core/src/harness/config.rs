//! Flat `key = value` configuration for training runs.

use std::collections::BTreeMap;
use std::fmt::Display;
use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use crate::error::{Error, Result};
use crate::head::LossConfig;
use crate::model::ModelConfig;

#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub p: usize,
    pub k: usize,
    pub t_l: usize,
    pub lr: f64,
    pub momentum: f64,
    pub weight_decay: f64,
    /// Unscaled milestone iterations.
    pub milestones: Vec<usize>,
    /// Unscaled iteration budget.
    pub total_iters: usize,
    /// Multiplier applied to `total_iters` and `milestones`.
    pub scale: f64,
    pub seed: u64,
    pub data: PathBuf,
    pub out: PathBuf,
    /// Per subject, sequences with index below this train; the rest are held
    /// out. `None` trains on everything.
    pub train_sequences: Option<usize>,
    pub model: ModelConfig,
    pub loss: LossConfig,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            p: 8,
            k: 8,
            t_l: 7,
            lr: 0.1,
            momentum: 0.9,
            weight_decay: 5e-4,
            milestones: vec![20_000, 30_000],
            total_iters: 40_000,
            scale: 0.01,
            seed: 0,
            data: PathBuf::from("data"),
            out: PathBuf::from("runs/default"),
            train_sequences: None,
            model: ModelConfig::default(),
            loss: LossConfig::default(),
        }
    }
}

fn scaled(iters: usize, scale: f64) -> usize {
    (iters as f64 * scale).round() as usize
}

fn join<T: Display>(items: &[T]) -> String {
    items.iter().map(|v| v.to_string()).collect::<Vec<_>>().join(",")
}

fn parse<T: FromStr>(key: &str, value: &str) -> Result<T> {
    value
        .trim()
        .parse()
        .map_err(|_| Error::Config(format!("invalid value {value:?} for `{key}`")))
}

fn parse_list<T: FromStr>(key: &str, value: &str) -> Result<Vec<T>> {
    value.split(',').map(|v| parse(key, v)).collect()
}

impl TrainConfig {
    /// Iteration budget after scaling.
    pub fn iterations(&self) -> usize {
        scaled(self.total_iters, self.scale)
    }

    /// Milestones after scaling.
    pub fn scaled_milestones(&self) -> Vec<usize> {
        self.milestones.iter().map(|&m| scaled(m, self.scale)).collect()
    }

    /// `lr · 0.1^{#milestones ≤ iter}` with scaled milestones.
    pub fn lr_at(&self, iter: usize) -> f64 {
        let passed = self.scaled_milestones().iter().filter(|&&m| m <= iter).count();
        // dividing by an exact power of ten keeps 0.1 → 0.01 → 0.001 free of drift
        self.lr / 10f64.powi(passed as i32)
    }

    pub fn validate(&self) -> Result<()> {
        if self.p < 2 || self.k < 2 {
            return Err(Error::Config(format!(
                "batch-all sampling needs p ≥ 2 and k ≥ 2 (got p={}, k={})",
                self.p, self.k
            )));
        }
        if self.t_l == 0 {
            return Err(Error::Config("tl must be positive".into()));
        }
        if !(self.scale > 0.0) {
            return Err(Error::Config(format!("scale must be positive, got {}", self.scale)));
        }
        let total = self.iterations();
        if let Some(&m) = self.scaled_milestones().iter().max() {
            if total <= m {
                return Err(Error::Config(format!(
                    "total iterations {total} must exceed the last milestone {m}"
                )));
            }
        }
        if total == 0 {
            return Err(Error::Config("scaled iteration budget is zero".into()));
        }
        self.model.validate()
    }

    /// Every key with its current value, in a fixed order.
    pub fn to_pairs(&self) -> Vec<(String, String)> {
        let m = &self.model;
        let mut pairs = vec![
            ("p", self.p.to_string()),
            ("k", self.k.to_string()),
            ("tl", self.t_l.to_string()),
            ("lr", self.lr.to_string()),
            ("momentum", self.momentum.to_string()),
            ("weight_decay", self.weight_decay.to_string()),
            ("milestones", join(&self.milestones)),
            ("total_iters", self.total_iters.to_string()),
            ("scale", self.scale.to_string()),
            ("seed", self.seed.to_string()),
            ("data", self.data.display().to_string()),
            ("out", self.out.display().to_string()),
            (
                "train_sequences",
                self.train_sequences.map_or_else(|| "all".to_string(), |n| n.to_string()),
            ),
            ("loss.margin", self.loss.margin.to_string()),
            ("loss.tri_weight", self.loss.tri_weight.to_string()),
            ("loss.ce_weight", self.loss.ce_weight.to_string()),
        ]
        .into_iter()
        .map(|(k, v)| (k.to_string(), v))
        .collect::<Vec<_>>();
        pairs.extend(model_pairs(m));
        pairs
    }

    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        let v = value.trim();
        match key {
            "p" => self.p = parse(key, v)?,
            "k" => self.k = parse(key, v)?,
            "tl" => self.t_l = parse(key, v)?,
            "lr" => self.lr = parse(key, v)?,
            "momentum" => self.momentum = parse(key, v)?,
            "weight_decay" => self.weight_decay = parse(key, v)?,
            "milestones" => self.milestones = if v.is_empty() { Vec::new() } else { parse_list(key, v)? },
            "total_iters" => self.total_iters = parse(key, v)?,
            "scale" => self.scale = parse(key, v)?,
            "seed" => self.seed = parse(key, v)?,
            "data" => self.data = PathBuf::from(v),
            "out" => self.out = PathBuf::from(v),
            "train_sequences" => self.train_sequences = if v == "all" { None } else { Some(parse(key, v)?) },
            "loss.margin" => self.loss.margin = parse(key, v)?,
            "loss.tri_weight" => self.loss.tri_weight = parse(key, v)?,
            "loss.ce_weight" => self.loss.ce_weight = parse(key, v)?,
            _ => set_model(&mut self.model, key, v)?,
        }
        Ok(())
    }

    pub fn parse_str(text: &str) -> Result<Self> {
        let mut cfg = Self::default();
        for (key, value) in parse_pairs(text)? {
            cfg.set(&key, &value)?;
        }
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse_str(&text)
    }

    pub fn to_text(&self) -> String {
        self.to_pairs().into_iter().map(|(k, v)| format!("{k} = {v}\n")).collect()
    }

    /// Keys whose values differ between two configurations.
    pub fn diff(&self, other: &TrainConfig) -> Vec<String> {
        let a: BTreeMap<_, _> = self.to_pairs().into_iter().collect();
        let b: BTreeMap<_, _> = other.to_pairs().into_iter().collect();
        a.iter().filter(|(k, v)| b.get(*k) != Some(v)).map(|(k, _)| k.clone()).collect()
    }
}

/// `key = value` lines; blank lines and `#` comments are skipped.
pub fn parse_pairs(text: &str) -> Result<Vec<(String, String)>> {
    let mut out = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let (k, v) = line
            .split_once('=')
            .ok_or_else(|| Error::Config(format!("line {}: expected `key = value`, got {raw:?}", i + 1)))?;
        out.push((k.trim().to_string(), v.trim().to_string()));
    }
    Ok(out)
}

pub fn model_pairs(m: &ModelConfig) -> Vec<(String, String)> {
    [
        ("model.widths", join(&m.widths)),
        ("model.stem_stride", m.stem_stride.to_string()),
        ("model.input_size", m.input_size.to_string()),
        ("model.bins", join(&m.bins)),
        ("model.embed_half", m.embed_half.to_string()),
        ("model.num_classes", m.num_classes.to_string()),
        ("ictm.heads", m.heads.to_string()),
        ("ictm.layers", m.layers.to_string()),
        ("ictm.strategy", m.ictm_strategy.key().to_string()),
        ("ictm.q_is_target", m.q_is_target.to_string()),
        ("acca.strategy", m.acca_strategy.key().to_string()),
        ("use_acca", m.use_acca.to_string()),
        ("use_ictm", m.use_ictm.to_string()),
    ]
    .into_iter()
    .map(|(k, v)| (k.to_string(), v))
    .collect()
}

pub fn set_model(m: &mut ModelConfig, key: &str, v: &str) -> Result<()> {
    match key {
        "model.preset" => {
            *m = match v {
                "full" => ModelConfig::default(),
                "desk" => ModelConfig::desk(),
                _ => return Err(Error::Config(format!("unknown model preset {v:?} (valid: full, desk)"))),
            }
        }
        "model.widths" => {
            let w: Vec<usize> = parse_list(key, v)?;
            m.widths = w
                .try_into()
                .map_err(|_| Error::Config("model.widths needs exactly 4 values".into()))?;
        }
        "model.stem_stride" => m.stem_stride = parse(key, v)?,
        "model.input_size" => m.input_size = parse(key, v)?,
        "model.bins" => m.bins = parse_list(key, v)?,
        "model.embed_half" => m.embed_half = parse(key, v)?,
        "model.num_classes" => m.num_classes = parse(key, v)?,
        "ictm.heads" => m.heads = parse(key, v)?,
        "ictm.layers" => m.layers = parse(key, v)?,
        "ictm.strategy" => m.ictm_strategy = parse(key, v)?,
        "ictm.q_is_target" => m.q_is_target = parse(key, v)?,
        "acca.strategy" => m.acca_strategy = parse(key, v)?,
        "use_acca" => m.use_acca = parse(key, v)?,
        "use_ictm" => m.use_ictm = parse(key, v)?,
        _ => return Err(Error::Config(format!("unknown config key `{key}`"))),
    }
    Ok(())
}

/// Model configuration from `model_pairs` text.
pub fn model_from_text(text: &str) -> Result<ModelConfig> {
    let mut m = ModelConfig::default();
    for (k, v) in parse_pairs(text)? {
        set_model(&mut m, &k, &v)?;
    }
    Ok(m)
}

pub fn model_to_text(m: &ModelConfig) -> String {
    model_pairs(m).into_iter().map(|(k, v)| format!("{k} = {v}\n")).collect()
}
