use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

use super::query::{QueryBuilder, QueryContext};
use super::{rank_candidates, RetrieveError};
use crate::critic::{AliasTable, CriticReport};
use crate::dialogue::{derive_anchors, AnchorSource, DialogueRecord};
use crate::embed::{EmbeddingTable, Slot};
use crate::kg::{EntityId, KnowledgeGraph};
use crate::text::{byte_offset, char_len};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RefineConfig {
    pub k: usize,
    pub chain: bool,
    pub anchors: AnchorSource,
    /// How many ranked candidates to keep per edit.
    pub head: usize,
}

impl Default for RefineConfig {
    fn default() -> Self {
        Self { k: 2, chain: true, anchors: AnchorSource::default(), head: 5 }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Edit {
    /// Span in the input response.
    pub begin: usize,
    pub end: usize,
    pub old: String,
    pub new_entity: EntityId,
    pub new_surface: String,
    /// Span of the spliced surface in the refined response.
    pub new_begin: usize,
    pub new_end: usize,
    pub rank1_score: f64,
    pub anchor: EntityId,
    pub head: Vec<(EntityId, f64)>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FailureReason {
    /// No candidate in the subgraph besides anchors.
    RetrievalImpossible,
    /// Oracle mode without a grounding triple at the anchor.
    NoGroundingRelation,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Failure {
    pub begin: usize,
    pub end: usize,
    pub surface: String,
    pub reason: FailureReason,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RefinementOutcome {
    pub refined_response: String,
    pub edits: Vec<Edit>,
    pub failures: Vec<Failure>,
    /// Anchor set after each flagged mention.
    pub anchor_trace: Vec<BTreeSet<EntityId>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EditEntry {
    pub begin: usize,
    pub end: usize,
    pub old: String,
    pub new_entity: String,
    pub new_surface: String,
    pub new_begin: usize,
    pub new_end: usize,
    pub rank1_score: f64,
    pub anchor: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FailureEntry {
    pub begin: usize,
    pub end: usize,
    pub surface: String,
    pub reason: FailureReason,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RefineLine {
    #[serde(flatten)]
    pub record: DialogueRecord,
    pub refined_response: String,
    pub edits: Vec<EditEntry>,
    pub failures: Vec<FailureEntry>,
}

impl RefinementOutcome {
    pub fn to_line(&self, record: &DialogueRecord, g: &KnowledgeGraph) -> RefineLine {
        RefineLine {
            record: record.clone(),
            refined_response: self.refined_response.clone(),
            edits: self
                .edits
                .iter()
                .map(|e| EditEntry {
                    begin: e.begin,
                    end: e.end,
                    old: e.old.clone(),
                    new_entity: g.entity_name(e.new_entity).to_string(),
                    new_surface: e.new_surface.clone(),
                    new_begin: e.new_begin,
                    new_end: e.new_end,
                    rank1_score: e.rank1_score,
                    anchor: g.entity_name(e.anchor).to_string(),
                })
                .collect(),
            failures: self
                .failures
                .iter()
                .map(|f| FailureEntry { begin: f.begin, end: f.end, surface: f.surface.clone(), reason: f.reason })
                .collect(),
        }
    }
}

fn splice_chars(s: &mut String, begin: usize, end: usize, with: &str) {
    let b = byte_offset(s, begin).expect("span inside text");
    let e = byte_offset(s, end).expect("span inside text");
    s.replace_range(b..e, with);
}

/// Replace each flagged mention, left to right, with the best-scoring
/// subgraph entity that is not already an anchor.
pub fn refine_response(
    record: &DialogueRecord,
    report: &CriticReport,
    g: &KnowledgeGraph,
    table: &EmbeddingTable,
    aliases: &AliasTable,
    cfg: &RefineConfig,
    builder: &mut dyn QueryBuilder,
) -> Result<RefinementOutcome, RetrieveError> {
    let mut flagged: Vec<_> = report.flagged().collect();
    flagged.sort_by_key(|m| m.span.begin);
    let mut out = RefinementOutcome {
        refined_response: record.response.clone(),
        edits: Vec::new(),
        failures: Vec::new(),
        anchor_trace: Vec::new(),
    };
    if flagged.is_empty() {
        return Ok(out);
    }
    table.check_shape(g)?;
    let anchors = derive_anchors(record, g, aliases, cfg.anchors)?.ok_or(RetrieveError::NoAnchors)?;
    let context = anchors.context;
    let mut set = anchors.set;
    let mut delta: isize = 0;
    let mut previous = None;

    for (i, m) in flagged.into_iter().enumerate() {
        let span = &m.span;
        let fail = |reason| Failure { begin: span.begin, end: span.end, surface: span.surface.clone(), reason };
        let sub = g.khop_subgraph(set.iter().copied(), cfg.k)?;
        let ctx = QueryContext { record, graph: g, table, sub: &sub, anchor: context, mention_index: i, previous };
        let picked = match builder.build(&ctx) {
            Ok(q) => match rank_candidates(&q, context, &sub, table, Slot::Object) {
                Ok(ranked) => {
                    let head: Vec<_> = ranked.entries.iter().copied().take(cfg.head).collect();
                    ranked.entries.into_iter().find(|(e, _)| !set.contains(e)).map(|best| (best, head))
                }
                Err(RetrieveError::EmptySubgraph) => None,
                Err(e) => return Err(e),
            },
            Err(RetrieveError::EmptySubgraph) => None,
            Err(RetrieveError::NoGroundingRelation) => {
                out.failures.push(fail(FailureReason::NoGroundingRelation));
                out.anchor_trace.push(set.clone());
                continue;
            }
            Err(e) => return Err(e),
        };
        match picked {
            None => out.failures.push(fail(FailureReason::RetrievalImpossible)),
            Some(((entity, score), head)) => {
                let surface = aliases.surface(g, entity);
                let new_begin = (span.begin as isize + delta) as usize;
                splice_chars(&mut out.refined_response, new_begin, new_begin + (span.end - span.begin), &surface);
                let new_len = char_len(&surface);
                delta += new_len as isize - (span.end - span.begin) as isize;
                out.edits.push(Edit {
                    begin: span.begin,
                    end: span.end,
                    old: span.surface.clone(),
                    new_entity: entity,
                    new_surface: surface,
                    new_begin,
                    new_end: new_begin + new_len,
                    rank1_score: score,
                    anchor: context,
                    head,
                });
                previous = Some(entity);
                if cfg.chain {
                    set.insert(entity);
                }
            }
        }
        out.anchor_trace.push(set.clone());
    }
    Ok(out)
}
