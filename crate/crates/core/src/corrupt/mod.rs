//! Synthetic hallucination generation.
//!
//! Extrinsic corruption swaps each mention for a same-type entity from
//! outside the record's subgraph and history; intrinsic corruption exchanges
//! the subject and object surfaces of grounding pairs. Labels are
//! character-level spans over the corrupted text.

mod dataset;

use std::collections::{BTreeMap, HashMap};

use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::critic::AliasTable;
use crate::dialogue::{in_history, DialogueError, DialogueRecord, MentionSpan};
use crate::kg::{EntityId, KgError, KnowledgeGraph, RelationId, Subgraph, Triple};
use crate::text::{apply_splices, char_slice, Splice};

pub use dataset::{build_synthetic_dataset, CorruptionConfig, CorruptionSummary, FailurePolicy};

#[derive(Debug, Error, PartialEq)]
pub enum CorruptError {
    #[error(transparent)]
    Dialogue(#[from] DialogueError),
    #[error("no mention has an eligible replacement entity")]
    NoEligibleReplacement,
    #[error("no swappable subject/object pair in the response")]
    NotApplicable,
    #[error("record has no anchor entities")]
    NoAnchors,
    #[error("extrinsic fraction {0} is outside [0, 1]")]
    InvalidFraction(f64),
    #[error("no input records")]
    EmptyInput,
    #[error("every record was dropped")]
    AllRecordsDropped,
}

impl From<KgError> for CorruptError {
    fn from(e: KgError) -> Self {
        Self::Dialogue(e.into())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CorruptionKind {
    Extrinsic,
    Intrinsic,
}

impl CorruptionKind {
    pub fn other(self) -> Self {
        match self {
            Self::Extrinsic => Self::Intrinsic,
            Self::Intrinsic => Self::Extrinsic,
        }
    }
}

/// Entity type assignments (`entity<TAB>type`).
#[derive(Debug, Clone, Default)]
pub struct EntityTypes {
    of: HashMap<EntityId, String>,
    members: BTreeMap<String, Vec<EntityId>>,
}

impl EntityTypes {
    pub fn from_pairs<'a, I>(g: &KnowledgeGraph, pairs: I) -> Result<Self, KgError>
    where
        I: IntoIterator<Item = (&'a str, &'a str)>,
    {
        let mut t = Self::default();
        for (name, ty) in pairs {
            let e = g.entity_id(name)?;
            if t.of.contains_key(&e) {
                continue;
            }
            t.of.insert(e, ty.to_string());
            t.members.entry(ty.to_string()).or_default().push(e);
        }
        for m in t.members.values_mut() {
            m.sort();
        }
        Ok(t)
    }

    pub fn type_of(&self, e: EntityId) -> Option<&str> {
        self.of.get(&e).map(String::as_str)
    }

    pub fn members(&self, ty: &str) -> &[EntityId] {
        self.members.get(ty).map(Vec::as_slice).unwrap_or(&[])
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
enum Slot {
    Subject,
    Object,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CorruptedRecord {
    pub original: DialogueRecord,
    pub response: String,
    pub kind: CorruptionKind,
    /// Character spans of the hallucinated text in `response`.
    pub labels: Vec<(usize, usize)>,
    /// `(original entity, entity now written in its place)`.
    pub replacements: Vec<(EntityId, EntityId)>,
    /// Every mention of `response`, re-offset after splicing.
    pub spans: Vec<MentionSpan>,
}

impl CorruptedRecord {
    /// Per-character binary labels over `response`.
    pub fn char_labels(&self) -> Vec<u8> {
        let mut marks = vec![0u8; crate::text::char_len(&self.response)];
        for &(b, e) in &self.labels {
            marks[b..e].iter_mut().for_each(|m| *m = 1);
        }
        marks
    }

    /// The corrupted response as a dialogue record: pre-linked spans are
    /// set and the clean text is kept as the gold response.
    pub fn as_record(&self, g: &KnowledgeGraph) -> DialogueRecord {
        let mut r = self.original.clone();
        r.gold_response = Some(self.original.response.clone());
        r.response = self.response.clone();
        r.spans = Some(DialogueRecord::spans_from(g, &self.spans));
        r
    }

    pub fn to_line(&self, g: &KnowledgeGraph) -> CorruptedLine {
        CorruptedLine {
            record: self.as_record(g),
            labels: self.labels.iter().map(|&(b, e)| [b, e]).collect(),
            kind: self.kind,
            replacements: self
                .replacements
                .iter()
                .map(|&(a, b)| [g.entity_name(a).to_string(), g.entity_name(b).to_string()])
                .collect(),
        }
    }
}

/// Output line of the corruptor.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CorruptedLine {
    #[serde(flatten)]
    pub record: DialogueRecord,
    pub labels: Vec<[usize; 2]>,
    pub kind: CorruptionKind,
    pub replacements: Vec<[String; 2]>,
}

/// Shared read-only state for corruption.
pub struct Corruptor<'a> {
    graph: &'a KnowledgeGraph,
    aliases: &'a AliasTable,
    types: &'a EntityTypes,
    by_role: HashMap<(RelationId, Slot), Vec<EntityId>>,
}

impl<'a> Corruptor<'a> {
    pub fn new(graph: &'a KnowledgeGraph, aliases: &'a AliasTable, types: &'a EntityTypes) -> Self {
        let mut by_role: HashMap<(RelationId, Slot), Vec<EntityId>> = HashMap::new();
        for t in graph.triples() {
            by_role.entry((t.predicate, Slot::Subject)).or_default().push(t.subject);
            by_role.entry((t.predicate, Slot::Object)).or_default().push(t.object);
        }
        for v in by_role.values_mut() {
            v.sort();
            v.dedup();
        }
        Self { graph, aliases, types, by_role }
    }

    pub fn graph(&self) -> &KnowledgeGraph {
        self.graph
    }

    pub fn aliases(&self) -> &AliasTable {
        self.aliases
    }

    /// Entities considered the same type as `e`: its declared type when
    /// known, otherwise every entity filling the same argument slot of a
    /// predicate `e` fills.
    pub fn same_type_pool(&self, e: EntityId) -> Vec<EntityId> {
        if let Some(ty) = self.types.type_of(e) {
            return self.types.members(ty).to_vec();
        }
        let roles = self
            .graph
            .outgoing(e)
            .iter()
            .map(|&(r, _)| (r, Slot::Subject))
            .chain(self.graph.incoming(e).iter().map(|&(r, _)| (r, Slot::Object)));
        let mut pool: Vec<EntityId> = roles
            .filter_map(|role| self.by_role.get(&role))
            .flatten()
            .copied()
            .collect();
        pool.sort();
        pool.dedup();
        pool
    }

    /// Entities that may replace `e`: same type, not `e`, outside `sub`,
    /// and not written anywhere in `history`. Sorted by id.
    pub fn eligible_replacements(&self, e: EntityId, sub: &Subgraph, history: &[String]) -> Vec<EntityId> {
        self.same_type_pool(e)
            .into_iter()
            .filter(|&x| x != e && !sub.contains(x))
            .filter(|&x| !in_history(history, &self.aliases.surface(self.graph, x)))
            .collect()
    }

    /// Replace every mention of the response by a uniformly drawn eligible
    /// entity. Mentions without candidates are left untouched.
    pub fn corrupt_extrinsic<R: Rng + ?Sized>(
        &self,
        record: &DialogueRecord,
        sub: &Subgraph,
        rng: &mut R,
    ) -> Result<CorruptedRecord, CorruptError> {
        let mentions = record.mentions(self.graph, self.aliases)?;
        let mut splices = Vec::with_capacity(mentions.len());
        let mut new_entities = Vec::with_capacity(mentions.len());
        let mut replaced = Vec::new();
        for (i, m) in mentions.iter().enumerate() {
            let pool = self.eligible_replacements(m.entity, sub, &record.history);
            let entity = if pool.is_empty() {
                m.entity
            } else {
                let x = pool[rng.gen_range(0..pool.len())];
                replaced.push(i);
                x
            };
            let text = if entity == m.entity { m.surface.clone() } else { self.aliases.surface(self.graph, entity) };
            splices.push(Splice { begin: m.begin, end: m.end, text });
            new_entities.push(entity);
        }
        if replaced.is_empty() {
            return Err(CorruptError::NoEligibleReplacement);
        }
        let out = apply_splices(&record.response, &splices).expect("mention spans are disjoint");
        Ok(CorruptedRecord {
            original: record.clone(),
            kind: CorruptionKind::Extrinsic,
            labels: replaced.iter().map(|&i| out.placed[i]).collect(),
            replacements: replaced.iter().map(|&i| (mentions[i].entity, new_entities[i])).collect(),
            spans: respan(&out.text, &out.placed, &new_entities),
            response: out.text,
        })
    }

    /// Exchange the surfaces of every grounding (subject, object) pair
    /// mentioned in the response, skipping pairs whose predicate also holds
    /// in the reverse orientation.
    pub fn corrupt_intrinsic(&self, record: &DialogueRecord) -> Result<CorruptedRecord, CorruptError> {
        let mentions = record.mentions(self.graph, self.aliases)?;
        let grounding: Vec<Triple> = record.grounding(self.graph)?;
        let mut used = vec![false; mentions.len()];
        let mut pairs: Vec<(usize, usize)> = Vec::new();
        for t in &grounding {
            if t.subject == t.object {
                continue;
            }
            let find = |e: EntityId, used: &[bool]| (0..mentions.len()).find(|&i| !used[i] && mentions[i].entity == e);
            let (Some(s), Some(o)) = (find(t.subject, &used), find(t.object, &used)) else {
                continue;
            };
            if self.graph.contains(&Triple::new(t.object, t.predicate, t.subject)) {
                log::debug!("skipping bidirectional pair {} / {}", mentions[s].surface, mentions[o].surface);
                continue;
            }
            used[s] = true;
            used[o] = true;
            pairs.push((s, o));
        }
        if pairs.is_empty() {
            return Err(CorruptError::NotApplicable);
        }

        let mut source: Vec<usize> = (0..mentions.len()).collect();
        for &(s, o) in &pairs {
            source.swap(s, o);
        }
        let splices: Vec<Splice> = mentions
            .iter()
            .zip(&source)
            .map(|(m, &from)| Splice {
                begin: m.begin,
                end: m.end,
                text: char_slice(&record.response, mentions[from].begin, mentions[from].end)
                    .unwrap_or_default()
                    .to_string(),
            })
            .collect();
        let entities: Vec<EntityId> = source.iter().map(|&from| mentions[from].entity).collect();
        let out = apply_splices(&record.response, &splices).expect("mention spans are disjoint");
        let mut labels: Vec<(usize, usize)> = pairs.iter().flat_map(|&(s, o)| [out.placed[s], out.placed[o]]).collect();
        labels.sort();
        Ok(CorruptedRecord {
            original: record.clone(),
            kind: CorruptionKind::Intrinsic,
            labels,
            replacements: pairs.iter().map(|&(s, o)| (mentions[s].entity, mentions[o].entity)).collect(),
            spans: respan(&out.text, &out.placed, &entities),
            response: out.text,
        })
    }
}

fn respan(text: &str, placed: &[(usize, usize)], entities: &[EntityId]) -> Vec<MentionSpan> {
    placed
        .iter()
        .zip(entities)
        .map(|(&(begin, end), &entity)| MentionSpan {
            entity,
            begin,
            end,
            surface: char_slice(text, begin, end).unwrap_or_default().to_string(),
        })
        .collect()
}

#[cfg(test)]
pub(crate) mod tests {
    use super::*;
    use crate::kg::fixtures::toy;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    pub fn toy_setup() -> (KnowledgeGraph, AliasTable, EntityTypes) {
        let g = toy();
        let mut aliases = AliasTable::from_pairs(
            &g,
            [
                ("the_bfg", "The BFG"),
                ("the_hobbit", "The Hobbit"),
                ("the_witches", "The Witches"),
                ("roald_dahl", "Roald Dahl"),
            ],
        )
        .unwrap();
        aliases.add_canonical_names(&g);
        let types = EntityTypes::from_pairs(
            &g,
            [
                ("roald_dahl", "person"),
                ("jrr_tolkien", "person"),
                ("quentin_blake", "person"),
                ("the_witches", "book"),
                ("the_bfg", "book"),
                ("charlie_and_the_chocolate_factory", "book"),
                ("the_hobbit", "book"),
                ("fantasy", "genre"),
            ],
        )
        .unwrap();
        (g, aliases, types)
    }

    #[test]
    fn extrinsic_picks_only_eligible_book() {
        let (g, aliases, types) = toy_setup();
        let c = Corruptor::new(&g, &aliases, &types);
        let sub = g.khop_subgraph([g.entity_id("roald_dahl").unwrap()], 1).unwrap();
        let r = DialogueRecord::new(vec![], vec![], "I really liked The BFG.");
        for seed in 0..5 {
            let out = c.corrupt_extrinsic(&r, &sub, &mut ChaCha8Rng::seed_from_u64(seed)).unwrap();
            assert_eq!(out.response, "I really liked The Hobbit.");
            assert_eq!(out.replacements, vec![(g.entity_id("the_bfg").unwrap(), g.entity_id("the_hobbit").unwrap())]);
            assert_eq!(out.labels, vec![(15, 25)]);
            let marks = out.char_labels();
            assert_eq!(marks.iter().filter(|&&m| m == 1).count(), 10);
            assert!(marks[..15].iter().all(|&m| m == 0) && marks[25..].iter().all(|&m| m == 0));
        }
    }

    #[test]
    fn extrinsic_respects_history() {
        let (g, aliases, types) = toy_setup();
        let c = Corruptor::new(&g, &aliases, &types);
        let sub = g.khop_subgraph([g.entity_id("roald_dahl").unwrap()], 1).unwrap();
        let r = DialogueRecord::new(vec!["I read The Hobbit".into()], vec![], "I really liked The BFG.");
        let err = c.corrupt_extrinsic(&r, &sub, &mut ChaCha8Rng::seed_from_u64(0)).unwrap_err();
        assert_eq!(err, CorruptError::NoEligibleReplacement);
    }

    #[test]
    fn extrinsic_needs_a_mention() {
        let (g, aliases, types) = toy_setup();
        let c = Corruptor::new(&g, &aliases, &types);
        let sub = g.khop_subgraph([g.entity_id("roald_dahl").unwrap()], 1).unwrap();
        let r = DialogueRecord::new(vec![], vec![], "nothing to see");
        assert_eq!(
            c.corrupt_extrinsic(&r, &sub, &mut ChaCha8Rng::seed_from_u64(0)).unwrap_err(),
            CorruptError::NoEligibleReplacement
        );
    }

    #[test]
    fn untyped_entities_fall_back_to_predicate_roles() {
        let (g, aliases, _) = toy_setup();
        let empty = EntityTypes::default();
        let c = Corruptor::new(&g, &aliases, &empty);
        let pool: Vec<&str> = c.same_type_pool(g.entity_id("the_bfg").unwrap()).iter().map(|&e| g.entity_name(e)).collect();
        // objects of `wrote` and of `illustrated`
        assert_eq!(pool, ["the_witches", "the_bfg", "charlie_and_the_chocolate_factory", "the_hobbit"]);
    }

    #[test]
    fn intrinsic_swap_matches_example_and_is_an_involution() {
        let g = KnowledgeGraph::from_named([("crescendo", "written_by", "becca_fitzpatrick")]).unwrap();
        let aliases = AliasTable::from_canonical_names(&g);
        let types = EntityTypes::default();
        let c = Corruptor::new(&g, &aliases, &types);
        let r = DialogueRecord::new(
            vec![],
            vec![["crescendo".into(), "written_by".into(), "becca_fitzpatrick".into()]],
            "Crescendo was written by Becca Fitzpatrick",
        );
        let once = c.corrupt_intrinsic(&r).unwrap();
        assert_eq!(once.response, "Becca Fitzpatrick was written by Crescendo");
        assert_eq!(once.labels, vec![(0, 17), (33, 42)]);
        let twice = c.corrupt_intrinsic(&once.as_record(&g)).unwrap();
        assert_eq!(twice.response, r.response);
    }

    #[test]
    fn bidirectional_pairs_are_skipped() {
        let g = KnowledgeGraph::from_named([("ann", "married_to", "bob"), ("bob", "married_to", "ann")]).unwrap();
        let aliases = AliasTable::from_canonical_names(&g);
        let types = EntityTypes::default();
        let c = Corruptor::new(&g, &aliases, &types);
        let r = DialogueRecord::new(vec![], vec![["ann".into(), "married_to".into(), "bob".into()]], "Ann is married to Bob");
        assert_eq!(c.corrupt_intrinsic(&r).unwrap_err(), CorruptError::NotApplicable);
    }
}
