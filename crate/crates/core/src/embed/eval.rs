use serde::{Deserialize, Serialize};

use super::sampler::Slot;
use super::table::EmbeddingTable;
use super::EmbedError;
use crate::kg::{EntityId, KnowledgeGraph, Triple};
use crate::metrics::ranking_metrics;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum RankingMode {
    Raw,
    #[default]
    Filtered,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CandidateScope {
    #[default]
    AllEntities,
    /// Nodes within this many hops of the query's anchor (the gold entity is
    /// always ranked, even when it lies outside).
    Subgraph(usize),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum QuerySlots {
    #[default]
    Object,
    Subject,
    /// One query per slot, two ranks per triple.
    Both,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct EvalOptions {
    pub mode: RankingMode,
    pub scope: CandidateScope,
    pub slots: QuerySlots,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LinkPredictionReport {
    pub ranks: Vec<usize>,
    pub hits_at_1: f64,
    pub hits_at_3: f64,
    pub hits_at_10: f64,
    pub mean_rank: f64,
    pub mrr: f64,
    pub filtered: bool,
}

/// `1 + #{score > gold} + #{score == gold, id < gold id}` over `candidates`
/// (which must not contain the gold entity).
pub fn gold_rank(gold: EntityId, gold_score: f64, candidates: impl IntoIterator<Item = (EntityId, f64)>) -> usize {
    1 + candidates
        .into_iter()
        .filter(|&(e, s)| s > gold_score || (s == gold_score && e < gold))
        .count()
}

fn query_rank(
    table: &EmbeddingTable,
    known: &KnowledgeGraph,
    t: &Triple,
    slot: Slot,
    opts: &EvalOptions,
) -> Result<usize, EmbedError> {
    let gold = slot.gold(t);
    let gold_score = table.score(t);
    let pool: Vec<EntityId> = match opts.scope {
        CandidateScope::AllEntities => (0..table.num_entities() as u32).map(EntityId).collect(),
        CandidateScope::Subgraph(k) => known.khop_subgraph([slot.anchor(t)], k)?.nodes().iter().copied().collect(),
    };
    let candidates = pool.into_iter().filter(|&e| e != gold).filter_map(|e| {
        let c = slot.replace(t, e);
        if opts.mode == RankingMode::Filtered && known.contains(&c) {
            None
        } else {
            Some((e, table.score(&c)))
        }
    });
    Ok(gold_rank(gold, gold_score, candidates))
}

/// Rank each held-out triple's gold entity among the candidate entities.
/// `known` supplies the filter set (all true triples) and neighbourhoods.
pub fn evaluate_link_prediction(
    table: &EmbeddingTable,
    holdout: &[Triple],
    known: &KnowledgeGraph,
    opts: &EvalOptions,
) -> Result<LinkPredictionReport, EmbedError> {
    if holdout.is_empty() {
        return Err(EmbedError::EmptyHoldout);
    }
    table.check_shape(known)?;
    let slots: &[Slot] = match opts.slots {
        QuerySlots::Object => &[Slot::Object],
        QuerySlots::Subject => &[Slot::Subject],
        QuerySlots::Both => &[Slot::Object, Slot::Subject],
    };
    let mut ranks = Vec::with_capacity(holdout.len() * slots.len());
    for t in holdout {
        for &slot in slots {
            ranks.push(query_rank(table, known, t, slot, opts)?);
        }
    }
    let m = ranking_metrics(&ranks, &[1, 3, 10]).expect("ranks are positive and non-empty");
    Ok(LinkPredictionReport {
        hits_at_1: m.hits[&1],
        hits_at_3: m.hits[&3],
        hits_at_10: m.hits[&10],
        mean_rank: m.mean_rank,
        mrr: m.mrr,
        filtered: opts.mode == RankingMode::Filtered,
        ranks,
    })
}
