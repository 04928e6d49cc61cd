//! Training, evaluation, ablation and gradient-check tooling.

pub mod ablation;
pub mod checkpoint;
pub mod config;
pub mod eval;
pub mod gradcheck;
pub mod sgd;
pub mod train;

pub use ablation::{ablation_configs, run_ablation, AblationModule, AblationRow, AblationTable};
pub use config::TrainConfig;
pub use eval::{embed_sequences, evaluate_model, evaluate_retrieval, EvalReport, Embeddings, Protocol, RankStats};
pub use gradcheck::{gradcheck, GradcheckReport};
pub use sgd::Sgd;
pub use train::{load_indexed, split, train, LogRow, TrainOutcome};
