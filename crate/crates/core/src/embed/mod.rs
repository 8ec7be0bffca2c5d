//! DistMult embeddings: training, enrichment, snapshots and link prediction.

mod enrich;
mod eval;
mod nce;
mod optim;
mod sampler;
mod table;
mod train;

use thiserror::Error;

use crate::kg::KgError;

pub use enrich::{enrich_relational, Activation, EnrichConfig, WeightInit};
pub use eval::{
    evaluate_link_prediction, gold_rank, CandidateScope, EvalOptions, LinkPredictionReport, QuerySlots, RankingMode,
};
pub use nce::{log_sum_exp, nce_loss, nce_loss_and_grad, Gradients};
pub use optim::{Adam, Optimizer, OptimizerFactory, OptimizerRegistry, ParamGroup, Sgd};
pub use sampler::{
    InBatchSampler, NegativeSampler, SampleRequest, SamplerFactory, SamplerRegistry, SansSampler, Slot, UniformSampler,
};
pub use table::{distmult_score, EmbeddingTable, Provenance, Snapshot, SNAPSHOT_MAGIC};
pub use train::{train, train_with, TrainOutcome, TrainingConfig};

#[derive(Debug, Error, PartialEq)]
pub enum EmbedError {
    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },
    #[error("embedding dimension must be at least 1")]
    ZeroDimension,
    #[error("cannot build embeddings for an empty vocabulary")]
    EmptyVocabulary,
    #[error("non-finite value in embedding input")]
    NonFinite,
    #[error("table shape {entities:?}/{relations:?} (rows, dim) does not match the graph")]
    ShapeMismatch { entities: (usize, usize), relations: (usize, usize) },
    #[error("snapshot: {0}")]
    Snapshot(String),
    #[error("no negatives supplied")]
    NoNegatives,
    #[error("negative pool is empty")]
    EmptyPool,
    #[error("{0}")]
    UnknownStrategy(String),
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
    #[error("training diverged at epoch {epoch}")]
    DivergenceDetected { epoch: usize },
    #[error("no held-out triples to evaluate")]
    EmptyHoldout,
    #[error(transparent)]
    Kg(#[from] KgError),
}
