//! Entity retrieval over k-hop subgraphs and span refinement.

mod query;
mod refine;

use thiserror::Error;

use crate::dialogue::DialogueError;
use crate::embed::{EmbedError, EmbeddingTable, Slot};
use crate::kg::{EntityId, KgError, Subgraph};

pub use query::{
    ExternalQueries, InferredRelation, OracleRelation, QueryBuilder, QueryContext, QueryFactory, QueryProvenance,
    QueryRegistry, QueryVector,
};
pub use refine::{
    refine_response, Edit, EditEntry, Failure, FailureEntry, FailureReason, RefineConfig, RefineLine, RefinementOutcome,
};

#[derive(Debug, Error, PartialEq)]
pub enum RetrieveError {
    #[error(transparent)]
    Kg(#[from] KgError),
    #[error(transparent)]
    Embed(#[from] EmbedError),
    #[error(transparent)]
    Dialogue(#[from] DialogueError),
    #[error("no grounding triple touches the anchor entity")]
    NoGroundingRelation,
    #[error("subgraph has no candidates besides the anchor")]
    EmptySubgraph,
    #[error("anchor {0} is not a subgraph node")]
    UnknownAnchor(EntityId),
    #[error("query dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },
    #[error("external query source is exhausted")]
    SourceExhausted,
    #[error("query vector has non-finite entries")]
    NonFiniteQuery,
    #[error("{0}")]
    UnknownMode(String),
    #[error("record has flagged mentions but no derivable anchors")]
    NoAnchors,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RankedCandidates {
    pub anchor: EntityId,
    pub slot: Slot,
    /// Descending score, ties by ascending id.
    pub entries: Vec<(EntityId, f64)>,
}

impl RankedCandidates {
    pub fn top(&self) -> Option<(EntityId, f64)> {
        self.entries.first().copied()
    }
}

/// Score `⟨c, q, e⟩` for every subgraph node `e ≠ c`. DistMult is symmetric
/// in its entity arguments, so `slot` is carried as metadata only.
pub fn rank_candidates(
    q: &QueryVector,
    anchor: EntityId,
    sub: &Subgraph,
    table: &EmbeddingTable,
    slot: Slot,
) -> Result<RankedCandidates, RetrieveError> {
    if !sub.contains(anchor) {
        return Err(RetrieveError::UnknownAnchor(anchor));
    }
    if q.vector.len() != table.dim() {
        return Err(RetrieveError::DimensionMismatch { expected: table.dim(), found: q.vector.len() });
    }
    let zc = table.entity(anchor);
    let mut entries = sub
        .nodes()
        .iter()
        .filter(|&&e| e != anchor)
        .map(|&e| Ok((e, crate::embed::distmult_score(zc, &q.vector, table.entity(e))?)))
        .collect::<Result<Vec<_>, EmbedError>>()?;
    if entries.is_empty() {
        return Err(RetrieveError::EmptySubgraph);
    }
    entries.sort_by(|a, b| b.1.total_cmp(&a.1).then(a.0.cmp(&b.0)));
    Ok(RankedCandidates { anchor, slot, entries })
}
