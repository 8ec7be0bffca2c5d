//! Dialogue records: history turns, grounding triples and the response under
//! inspection, as exchanged through JSON Lines files.

use std::collections::BTreeSet;
use std::fs;
use std::io::{BufRead, BufReader, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};
use thiserror::Error;

use crate::critic::AliasTable;
use crate::kg::{EntityId, KgError, KnowledgeGraph, Triple};
use crate::text::{char_len, char_slice};

#[derive(Debug, Error, PartialEq)]
pub enum DialogueError {
    #[error(transparent)]
    Kg(#[from] KgError),
    #[error("span [{begin}, {end}) for {entity} is invalid: {reason}")]
    InvalidSpan { entity: String, begin: usize, end: usize, reason: &'static str },
    #[error("line {line}: {message}")]
    Json { line: usize, message: String },
    #[error("io error on {path}: {message}")]
    Io { path: String, message: String },
}

/// `[entity, begin, end]` with character offsets into the response.
pub type SpanRef = (String, usize, usize);

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DialogueRecord {
    #[serde(default)]
    pub history: Vec<String>,
    #[serde(default)]
    pub triples: Vec<[String; 3]>,
    pub response: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub gold_response: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub spans: Option<Vec<SpanRef>>,
    /// Unrecognised fields, carried through to every output untouched.
    #[serde(flatten)]
    pub extra: Map<String, Value>,
}

/// A linked entity mention; offsets are in characters, `end` exclusive.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct MentionSpan {
    pub entity: EntityId,
    pub begin: usize,
    pub end: usize,
    pub surface: String,
}

impl DialogueRecord {
    pub fn new(history: Vec<String>, triples: Vec<[String; 3]>, response: impl Into<String>) -> Self {
        Self {
            history,
            triples,
            response: response.into(),
            gold_response: None,
            spans: None,
            extra: Map::new(),
        }
    }

    /// Grounding triples `K_n` resolved against the graph vocabulary.
    pub fn grounding(&self, g: &KnowledgeGraph) -> Result<Vec<Triple>, KgError> {
        self.triples.iter().map(|[s, p, o]| g.resolve(s, p, o)).collect()
    }

    /// Pre-linked spans, validated against the response text.
    pub fn given_spans(&self, g: &KnowledgeGraph) -> Result<Option<Vec<MentionSpan>>, DialogueError> {
        let Some(spans) = &self.spans else {
            return Ok(None);
        };
        let len = char_len(&self.response);
        let mut out: Vec<MentionSpan> = Vec::with_capacity(spans.len());
        for (name, begin, end) in spans {
            let bad = |reason| DialogueError::InvalidSpan {
                entity: name.clone(),
                begin: *begin,
                end: *end,
                reason,
            };
            if begin >= end || *end > len {
                return Err(bad("offsets out of range"));
            }
            let entity = g.entity_id(name)?;
            let surface = char_slice(&self.response, *begin, *end).ok_or_else(|| bad("offsets out of range"))?;
            out.push(MentionSpan { entity, begin: *begin, end: *end, surface: surface.to_string() });
        }
        out.sort_by_key(|m| (m.begin, m.end));
        for w in out.windows(2) {
            if w[1].begin < w[0].end {
                return Err(DialogueError::InvalidSpan {
                    entity: g.entity_name(w[1].entity).to_string(),
                    begin: w[1].begin,
                    end: w[1].end,
                    reason: "overlaps a previous span",
                });
            }
        }
        Ok(Some(out))
    }

    /// Mention spans of the response: the pre-linked ones when present,
    /// otherwise the alias linker's output.
    pub fn mentions(&self, g: &KnowledgeGraph, aliases: &AliasTable) -> Result<Vec<MentionSpan>, DialogueError> {
        Ok(match self.given_spans(g)? {
            Some(spans) => spans,
            None => aliases.link(&self.response),
        })
    }

    pub fn spans_from(g: &KnowledgeGraph, spans: &[MentionSpan]) -> Vec<SpanRef> {
        spans
            .iter()
            .map(|m| (g.entity_name(m.entity).to_string(), m.begin, m.end))
            .collect()
    }
}

/// Where the anchor (context) entities of a record come from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AnchorSource {
    /// Entities of the grounding triples only.
    Grounding,
    /// Entities linked in the last history turn only.
    LastTurn,
    /// Grounding triples, falling back to the last turn when there are none.
    #[default]
    GroundingThenLastTurn,
}

impl std::str::FromStr for AnchorSource {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "grounding" => Ok(Self::Grounding),
            "last_turn" | "last-turn" => Ok(Self::LastTurn),
            "grounding_then_last_turn" | "auto" => Ok(Self::GroundingThenLastTurn),
            other => Err(format!("unknown anchor source {other:?}")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Anchors {
    /// The context entity `c` that queries are scored against.
    pub context: EntityId,
    pub set: BTreeSet<EntityId>,
}

/// Derive the anchor set of a record.
///
/// From grounding triples, the context entity is the one occurring most often
/// across `K_n`, ties going to the earliest occurrence (so the subject of the
/// first triple wins a full tie). From the last turn it is the first linked
/// mention.
pub fn derive_anchors(
    record: &DialogueRecord,
    g: &KnowledgeGraph,
    aliases: &AliasTable,
    source: AnchorSource,
) -> Result<Option<Anchors>, KgError> {
    let from_grounding = || -> Result<Option<Anchors>, KgError> {
        let triples = record.grounding(g)?;
        let mut order: Vec<(EntityId, usize)> = Vec::new();
        for t in &triples {
            for e in [t.subject, t.object] {
                match order.iter_mut().find(|(x, _)| *x == e) {
                    Some((_, n)) => *n += 1,
                    None => order.push((e, 1)),
                }
            }
        }
        let Some(&(first, _)) = order.first() else {
            return Ok(None);
        };
        let max = order.iter().map(|&(_, n)| n).max().unwrap_or(0);
        let context = order.iter().find(|&&(_, n)| n == max).map(|&(e, _)| e).unwrap_or(first);
        Ok(Some(Anchors { context, set: order.iter().map(|&(e, _)| e).collect() }))
    };
    let from_last_turn = || {
        let turn = record.history.last()?;
        let linked = aliases.link(turn);
        let context = linked.first()?.entity;
        Some(Anchors { context, set: linked.iter().map(|m| m.entity).collect() })
    };
    Ok(match source {
        AnchorSource::Grounding => from_grounding()?,
        AnchorSource::LastTurn => from_last_turn(),
        AnchorSource::GroundingThenLastTurn => match from_grounding()? {
            Some(a) => Some(a),
            None => from_last_turn(),
        },
    })
}

/// Whether `surface` occurs (case-insensitively) in any history turn.
pub fn in_history(history: &[String], surface: &str) -> bool {
    let needle = crate::text::fold(surface);
    !needle.is_empty() && history.iter().any(|h| crate::text::fold(h).contains(&needle))
}

/// Read a JSON Lines file of `T`. Blank lines are skipped.
pub fn read_jsonl<T: for<'de> Deserialize<'de>>(path: impl AsRef<Path>) -> Result<Vec<T>, DialogueError> {
    let path = path.as_ref();
    let file = fs::File::open(path).map_err(|e| DialogueError::Io {
        path: path.display().to_string(),
        message: e.to_string(),
    })?;
    let mut out = Vec::new();
    for (i, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|e| DialogueError::Io {
            path: path.display().to_string(),
            message: e.to_string(),
        })?;
        if line.trim().is_empty() {
            continue;
        }
        out.push(
            serde_json::from_str(&line).map_err(|e| DialogueError::Json { line: i + 1, message: e.to_string() })?,
        );
    }
    Ok(out)
}

pub fn write_jsonl<T: Serialize, W: Write>(mut w: W, items: &[T]) -> std::io::Result<()> {
    for item in items {
        serde_json::to_writer(&mut w, item)?;
        w.write_all(b"\n")?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kg::fixtures::toy;

    fn record(json: &str) -> DialogueRecord {
        serde_json::from_str(json).unwrap()
    }

    #[test]
    fn extra_fields_survive_round_trip() {
        let r = record(r#"{"history":[],"triples":[],"response":"x","dialogue_id":17}"#);
        assert_eq!(r.extra["dialogue_id"], 17);
        let back = serde_json::to_value(&r).unwrap();
        assert_eq!(back["dialogue_id"], 17);
        assert!(back.get("spans").is_none());
    }

    #[test]
    fn given_spans_are_validated() {
        let g = toy();
        let r = record(r#"{"response":"I love The BFG","spans":[["the_bfg",7,14]]}"#);
        let spans = r.given_spans(&g).unwrap().unwrap();
        assert_eq!(spans[0].surface, "The BFG");

        let r = record(r#"{"response":"I love The BFG","spans":[["the_bfg",7,15]]}"#);
        assert!(matches!(r.given_spans(&g), Err(DialogueError::InvalidSpan { .. })));
        let r = record(r#"{"response":"I love The BFG","spans":[["the_bfg",7,14],["the_witches",8,10]]}"#);
        assert!(matches!(r.given_spans(&g), Err(DialogueError::InvalidSpan { .. })));
        let r = record(r#"{"response":"I love The BFG","spans":[["nobody",7,14]]}"#);
        assert!(matches!(r.given_spans(&g), Err(DialogueError::Kg(KgError::UnknownEntity(_)))));
    }

    #[test]
    fn context_entity_is_most_frequent() {
        let g = toy();
        let aliases = AliasTable::from_canonical_names(&g);
        let r = record(
            r#"{"triples":[["the_witches","has_genre","fantasy"],["roald_dahl","wrote","the_witches"]],"response":""}"#,
        );
        let a = derive_anchors(&r, &g, &aliases, AnchorSource::Grounding).unwrap().unwrap();
        assert_eq!(g.entity_name(a.context), "the_witches");
        assert_eq!(a.set.len(), 3);

        let r = record(r#"{"triples":[["roald_dahl","wrote","the_witches"]],"response":""}"#);
        let a = derive_anchors(&r, &g, &aliases, AnchorSource::Grounding).unwrap().unwrap();
        assert_eq!(g.entity_name(a.context), "roald_dahl");
    }

    #[test]
    fn last_turn_fallback() {
        let g = toy();
        let aliases = AliasTable::from_canonical_names(&g);
        let r = record(r#"{"history":["hi","what about the hobbit and fantasy?"],"response":""}"#);
        assert!(derive_anchors(&r, &g, &aliases, AnchorSource::Grounding).unwrap().is_none());
        let a = derive_anchors(&r, &g, &aliases, AnchorSource::GroundingThenLastTurn).unwrap().unwrap();
        assert_eq!(g.entity_name(a.context), "the_hobbit");
        assert_eq!(a.set.len(), 2);
    }

    #[test]
    fn history_membership_ignores_case() {
        let h = vec!["The Witches is written by Roald Dahl.".to_string()];
        assert!(in_history(&h, "the witches"));
        assert!(!in_history(&h, "The BFG"));
        assert!(!in_history(&h, ""));
    }
}
