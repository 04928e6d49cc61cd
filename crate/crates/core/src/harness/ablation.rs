//! Strategy and component ablations: one training run per row, all else fixed.

use std::fmt::Write as _;
use std::path::Path;
use std::str::FromStr;

use super::config::TrainConfig;
use super::eval::{evaluate_model, Protocol};
use super::train::train;
use crate::datagen::ModalSequencePair;
use crate::error::{Error, Result};
use crate::strategy::Strategy;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AblationModule {
    Acca,
    Ictm,
    /// Baseline, +ICTM, +ICTM+ACCA.
    Components,
}

impl FromStr for AblationModule {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "acca" => Ok(Self::Acca),
            "ictm" => Ok(Self::Ictm),
            "components" => Ok(Self::Components),
            _ => Err(Error::Config(format!("unknown ablation module {s:?} (valid: acca, ictm, components)"))),
        }
    }
}

impl AblationModule {
    /// Keys a row may change relative to the base configuration.
    fn varied_keys(self) -> &'static [&'static str] {
        match self {
            Self::Acca => &["acca.strategy"],
            Self::Ictm => &["ictm.strategy"],
            Self::Components => &["use_acca", "use_ictm"],
        }
    }

    fn title(self) -> &'static str {
        match self {
            Self::Acca => "Modeling strategy in ACCA",
            Self::Ictm => "Modeling strategy in ICTM",
            Self::Components => "Effectiveness of main components",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct AblationRow {
    pub label: String,
    pub rank1: f64,
    pub rank5: f64,
}

#[derive(Debug, Clone)]
pub struct AblationTable {
    pub module: AblationModule,
    pub rows: Vec<AblationRow>,
}

impl AblationTable {
    pub fn render(&self) -> String {
        let width = self.rows.iter().map(|r| r.label.chars().count()).max().unwrap_or(8).max(8);
        let mut s = format!("{}\n{:<width$}  {:>7}  {:>7}\n", self.module.title(), "strategy", "rank-1", "rank-5");
        for r in &self.rows {
            let pad = width - r.label.chars().count();
            let _ = writeln!(s, "{}{}  {:>7.2}  {:>7.2}", r.label, " ".repeat(pad), r.rank1, r.rank5);
        }
        s
    }

    pub fn csv(&self) -> String {
        let mut s = String::from("row,rank1,rank5\n");
        for r in &self.rows {
            let _ = writeln!(s, "{},{},{}", r.label, r.rank1, r.rank5);
        }
        s
    }
}

/// The five strategies with the module default last and marked.
fn strategy_rows(default: Strategy) -> Vec<(String, Strategy)> {
    let mut order: Vec<Strategy> = Strategy::ALL.iter().copied().filter(|&s| s != default).collect();
    order.push(default);
    order
        .into_iter()
        .map(|s| {
            let label = if s == default { format!("{} (default)", s.label()) } else { s.label().to_string() };
            (label, s)
        })
        .collect()
}

/// Row labels and their configurations.
pub fn ablation_configs(base: &TrainConfig, module: AblationModule) -> Vec<(String, TrainConfig)> {
    let with = |f: &dyn Fn(&mut TrainConfig)| {
        let mut c = base.clone();
        f(&mut c);
        c
    };
    match module {
        AblationModule::Acca => strategy_rows(Strategy::ACCA_DEFAULT)
            .into_iter()
            .map(|(label, s)| (label, with(&|c| c.model.acca_strategy = s)))
            .collect(),
        AblationModule::Ictm => strategy_rows(Strategy::ICTM_DEFAULT)
            .into_iter()
            .map(|(label, s)| (label, with(&|c| c.model.ictm_strategy = s)))
            .collect(),
        AblationModule::Components => vec![
            (
                "Baseline".to_string(),
                with(&|c| {
                    c.model.use_acca = false;
                    c.model.use_ictm = false;
                }),
            ),
            (
                "+ICTM".to_string(),
                with(&|c| {
                    c.model.use_acca = false;
                    c.model.use_ictm = true;
                }),
            ),
            (
                "+ICTM+ACCA".to_string(),
                with(&|c| {
                    c.model.use_acca = true;
                    c.model.use_ictm = true;
                }),
            ),
        ],
    }
}

/// Errors if any two row configurations differ outside the module's keys.
pub fn check_isolation(module: AblationModule, configs: &[(String, TrainConfig)]) -> Result<()> {
    let allowed = module.varied_keys();
    for (label, cfg) in configs {
        for key in configs[0].1.diff(cfg) {
            if !allowed.contains(&key.as_str()) {
                return Err(Error::Config(format!("ablation row {label:?} also changes `{key}`")));
            }
        }
    }
    Ok(())
}

/// Train and evaluate every row. Rows are scored on held-out probes when the
/// data has any, else on the training probes.
pub fn run_ablation(
    base: &TrainConfig,
    module: AblationModule,
    train_seqs: &[ModalSequencePair],
    held_out: &[ModalSequencePair],
    out: Option<&Path>,
) -> Result<AblationTable> {
    let configs = ablation_configs(base, module);
    check_isolation(module, &configs)?;
    let protocol = if held_out.is_empty() { Protocol::Train } else { Protocol::HeldOut };
    let mut rows = Vec::with_capacity(configs.len());
    for (i, (label, cfg)) in configs.iter().enumerate() {
        let dir = out.map(|d| d.join(format!("row{i}")));
        let outcome = train(cfg, train_seqs.to_vec(), dir.as_deref())?;
        let report = evaluate_model(&outcome.model, train_seqs, held_out, protocol)?;
        rows.push(AblationRow {
            label: label.clone(),
            rank1: report.overall.rank1,
            rank5: report.overall.rank5,
        });
    }
    Ok(AblationTable { module, rows })
}
