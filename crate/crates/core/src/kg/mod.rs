//! Multi-relational knowledge graph: vocabularies, triple set and the
//! adjacency indexes used for neighbourhood queries.

mod io;
mod subgraph;

use std::collections::{BTreeMap, HashMap, HashSet};
use std::fmt;

use serde::Serialize;
use thiserror::Error;

use crate::text::normalize_key;

pub use io::{load_triples, parse_triples, read_tsv_pairs};
pub use subgraph::Subgraph;

#[derive(Debug, Error, PartialEq)]
pub enum KgError {
    #[error("line {line}: expected {expected} tab-separated fields, found {found}")]
    MalformedLine { line: usize, expected: usize, found: usize },
    #[error("the triple file contains no triples")]
    EmptyGraph,
    #[error("unknown entity {0}")]
    UnknownEntity(String),
    #[error("unknown relation {0}")]
    UnknownRelation(String),
    #[error("at least one anchor entity is required")]
    NoAnchors,
    #[error("io error on {path}: {message}")]
    Io { path: String, message: String },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize)]
pub struct EntityId(pub u32);

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize)]
pub struct RelationId(pub u32);

impl EntityId {
    pub fn index(self) -> usize {
        self.0 as usize
    }
}

impl RelationId {
    pub fn index(self) -> usize {
        self.0 as usize
    }
}

impl fmt::Display for EntityId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "e{}", self.0)
    }
}

impl fmt::Display for RelationId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "r{}", self.0)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize)]
pub struct Triple {
    pub subject: EntityId,
    pub predicate: RelationId,
    pub object: EntityId,
}

impl Triple {
    pub fn new(subject: EntityId, predicate: RelationId, object: EntityId) -> Self {
        Self { subject, predicate, object }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Direction {
    Outgoing,
    Incoming,
}

/// Dense id assignment for surface strings. Lookups go through the
/// normalized key (lowercase, collapsed whitespace); the first-seen spelling
/// is kept as the canonical name.
#[derive(Debug, Clone, Default)]
pub struct Vocab {
    names: Vec<String>,
    index: HashMap<String, u32>,
}

impl Vocab {
    pub fn len(&self) -> usize {
        self.names.len()
    }

    pub fn is_empty(&self) -> bool {
        self.names.is_empty()
    }

    pub fn get(&self, name: &str) -> Option<u32> {
        self.index.get(&normalize_key(name)).copied()
    }

    pub fn name(&self, id: u32) -> Option<&str> {
        self.names.get(id as usize).map(String::as_str)
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn intern(&mut self, name: &str) -> u32 {
        let key = normalize_key(name);
        if let Some(&id) = self.index.get(&key) {
            return id;
        }
        let id = self.names.len() as u32;
        self.names.push(name.split_whitespace().collect::<Vec<_>>().join(" "));
        self.index.insert(key, id);
        id
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GraphStats {
    pub entities: usize,
    pub relations: usize,
    pub triples: usize,
    pub per_relation: BTreeMap<String, usize>,
}

/// Immutable indexed triple set.
#[derive(Debug, Clone)]
pub struct KnowledgeGraph {
    entities: Vocab,
    relations: Vocab,
    triples: Vec<Triple>,
    triple_set: HashSet<Triple>,
    out_index: Vec<Vec<(RelationId, EntityId)>>,
    in_index: Vec<Vec<(RelationId, EntityId)>>,
}

/// Accumulates named triples and produces a [`KnowledgeGraph`].
#[derive(Debug, Default)]
pub struct GraphBuilder {
    entities: Vocab,
    relations: Vocab,
    triples: Vec<Triple>,
    seen: HashSet<Triple>,
    duplicates: usize,
}

impl GraphBuilder {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn entity(&mut self, name: &str) -> EntityId {
        EntityId(self.entities.intern(name))
    }

    pub fn relation(&mut self, name: &str) -> RelationId {
        RelationId(self.relations.intern(name))
    }

    /// Add a triple by name. Returns false when it was already present.
    pub fn add(&mut self, subject: &str, predicate: &str, object: &str) -> bool {
        let s = self.entity(subject);
        let p = self.relation(predicate);
        let o = self.entity(object);
        self.add_ids(Triple::new(s, p, o))
    }

    pub fn add_ids(&mut self, t: Triple) -> bool {
        if self.seen.insert(t) {
            self.triples.push(t);
            true
        } else {
            self.duplicates += 1;
            false
        }
    }

    pub fn duplicates(&self) -> usize {
        self.duplicates
    }

    pub fn build(self) -> Result<KnowledgeGraph, KgError> {
        if self.triples.is_empty() {
            return Err(KgError::EmptyGraph);
        }
        if self.duplicates > 0 {
            log::info!("dropped {} duplicate triples", self.duplicates);
        }
        let n = self.entities.len();
        let mut out_index = vec![Vec::new(); n];
        let mut in_index = vec![Vec::new(); n];
        for t in &self.triples {
            out_index[t.subject.index()].push((t.predicate, t.object));
            in_index[t.object.index()].push((t.predicate, t.subject));
        }
        Ok(KnowledgeGraph {
            entities: self.entities,
            relations: self.relations,
            triples: self.triples,
            triple_set: self.seen,
            out_index,
            in_index,
        })
    }
}

impl KnowledgeGraph {
    pub fn from_named<'a, I>(triples: I) -> Result<Self, KgError>
    where
        I: IntoIterator<Item = (&'a str, &'a str, &'a str)>,
    {
        let mut b = GraphBuilder::new();
        for (s, p, o) in triples {
            b.add(s, p, o);
        }
        b.build()
    }

    /// Extend the entity vocabulary with names that carry no edges (e.g.
    /// entities only known from an alias or type file).
    pub fn with_extra_entities<'a, I>(mut self, names: I) -> Self
    where
        I: IntoIterator<Item = &'a str>,
    {
        for name in names {
            let before = self.entities.len();
            self.entities.intern(name);
            if self.entities.len() > before {
                self.out_index.push(Vec::new());
                self.in_index.push(Vec::new());
            }
        }
        self
    }

    pub fn entities(&self) -> &Vocab {
        &self.entities
    }

    pub fn relations(&self) -> &Vocab {
        &self.relations
    }

    pub fn num_entities(&self) -> usize {
        self.entities.len()
    }

    pub fn num_relations(&self) -> usize {
        self.relations.len()
    }

    pub fn triples(&self) -> &[Triple] {
        &self.triples
    }

    pub fn contains(&self, t: &Triple) -> bool {
        self.triple_set.contains(t)
    }

    pub fn entity_id(&self, name: &str) -> Result<EntityId, KgError> {
        self.entities
            .get(name)
            .map(EntityId)
            .ok_or_else(|| KgError::UnknownEntity(name.to_string()))
    }

    pub fn relation_id(&self, name: &str) -> Result<RelationId, KgError> {
        self.relations
            .get(name)
            .map(RelationId)
            .ok_or_else(|| KgError::UnknownRelation(name.to_string()))
    }

    pub fn entity_name(&self, e: EntityId) -> &str {
        self.entities.name(e.0).unwrap_or("<unknown>")
    }

    pub fn relation_name(&self, r: RelationId) -> &str {
        self.relations.name(r.0).unwrap_or("<unknown>")
    }

    pub fn resolve(&self, s: &str, p: &str, o: &str) -> Result<Triple, KgError> {
        Ok(Triple::new(self.entity_id(s)?, self.relation_id(p)?, self.entity_id(o)?))
    }

    pub(crate) fn check_entity(&self, e: EntityId) -> Result<(), KgError> {
        if e.index() < self.entities.len() {
            Ok(())
        } else {
            Err(KgError::UnknownEntity(e.to_string()))
        }
    }

    pub fn outgoing(&self, e: EntityId) -> &[(RelationId, EntityId)] {
        self.out_index.get(e.index()).map(Vec::as_slice).unwrap_or(&[])
    }

    pub fn incoming(&self, e: EntityId) -> &[(RelationId, EntityId)] {
        self.in_index.get(e.index()).map(Vec::as_slice).unwrap_or(&[])
    }

    pub fn degree(&self, e: EntityId) -> usize {
        self.outgoing(e).len() + self.incoming(e).len()
    }

    /// All incident edges of `e` with their orientation: outgoing first, then
    /// incoming, each in insertion order.
    pub fn neighbors(&self, e: EntityId) -> Result<Vec<(RelationId, EntityId, Direction)>, KgError> {
        self.check_entity(e)?;
        let out = self.outgoing(e).iter().map(|&(r, v)| (r, v, Direction::Outgoing));
        let inc = self.incoming(e).iter().map(|&(r, u)| (r, u, Direction::Incoming));
        Ok(out.chain(inc).collect())
    }

    /// Relations on direct edges between `u` and `v`. With `oriented` only
    /// `u -> v` edges count. Sorted by relation id.
    pub fn has_direct_edge(
        &self,
        u: EntityId,
        v: EntityId,
        oriented: bool,
    ) -> Result<Vec<RelationId>, KgError> {
        self.check_entity(u)?;
        self.check_entity(v)?;
        let mut rels: Vec<RelationId> = self
            .outgoing(u)
            .iter()
            .filter(|&&(_, o)| o == v)
            .map(|&(r, _)| r)
            .collect();
        if !oriented {
            rels.extend(self.outgoing(v).iter().filter(|&&(_, o)| o == u).map(|&(r, _)| r));
        }
        rels.sort();
        rels.dedup();
        Ok(rels)
    }

    pub fn stats(&self) -> GraphStats {
        let mut per_relation = BTreeMap::new();
        for t in &self.triples {
            *per_relation
                .entry(self.relation_name(t.predicate).to_string())
                .or_insert(0) += 1;
        }
        GraphStats {
            entities: self.num_entities(),
            relations: self.num_relations(),
            triples: self.triples.len(),
            per_relation,
        }
    }

    /// A copy of this graph without the given triples. Vocabularies (and so
    /// all ids) are unchanged, which keeps embeddings trained on the result
    /// aligned with the original graph.
    pub fn without(&self, removed: &[Triple]) -> Result<Self, KgError> {
        let drop: HashSet<&Triple> = removed.iter().collect();
        let triples: Vec<Triple> = self.triples.iter().filter(|t| !drop.contains(t)).copied().collect();
        if triples.is_empty() {
            return Err(KgError::EmptyGraph);
        }
        let mut out_index = vec![Vec::new(); self.num_entities()];
        let mut in_index = vec![Vec::new(); self.num_entities()];
        for t in &triples {
            out_index[t.subject.index()].push((t.predicate, t.object));
            in_index[t.object.index()].push((t.predicate, t.subject));
        }
        Ok(Self {
            entities: self.entities.clone(),
            relations: self.relations.clone(),
            triple_set: triples.iter().copied().collect(),
            triples,
            out_index,
            in_index,
        })
    }
}

#[cfg(test)]
pub(crate) mod fixtures {
    use super::*;

    pub const TOY: [(&str, &str, &str); 7] = [
        ("roald_dahl", "wrote", "the_witches"),
        ("roald_dahl", "wrote", "the_bfg"),
        ("roald_dahl", "wrote", "charlie_and_the_chocolate_factory"),
        ("the_witches", "has_genre", "fantasy"),
        ("quentin_blake", "illustrated", "the_bfg"),
        ("jrr_tolkien", "wrote", "the_hobbit"),
        ("the_hobbit", "has_genre", "fantasy"),
    ];

    pub fn toy() -> KnowledgeGraph {
        KnowledgeGraph::from_named(TOY).unwrap()
    }
}

#[cfg(test)]
mod tests {
    use super::fixtures::toy;
    use super::*;

    #[test]
    fn toy_stats() {
        let s = toy().stats();
        assert_eq!((s.entities, s.relations, s.triples), (8, 3, 7));
        assert_eq!(s.per_relation.values().sum::<usize>(), 7);
        assert_eq!(s.per_relation["wrote"], 4);
    }

    #[test]
    fn neighbors_of_author_and_genre() {
        let g = toy();
        let dahl = g.entity_id("roald_dahl").unwrap();
        let n = g.neighbors(dahl).unwrap();
        assert_eq!(n.len(), 3);
        assert!(n.iter().all(|&(r, _, d)| d == Direction::Outgoing && g.relation_name(r) == "wrote"));
        let objs: Vec<&str> = n.iter().map(|&(_, e, _)| g.entity_name(e)).collect();
        assert_eq!(objs, ["the_witches", "the_bfg", "charlie_and_the_chocolate_factory"]);

        let fantasy = g.entity_id("fantasy").unwrap();
        let n = g.neighbors(fantasy).unwrap();
        let subj: Vec<&str> = n.iter().map(|&(_, e, _)| g.entity_name(e)).collect();
        assert!(n.iter().all(|&(_, _, d)| d == Direction::Incoming));
        assert_eq!(subj, ["the_witches", "the_hobbit"]);
    }

    #[test]
    fn alias_only_entity_has_no_neighbors() {
        let g = toy().with_extra_entities(["the_time_machine"]);
        let e = g.entity_id("the_time_machine").unwrap();
        assert_eq!(e, EntityId(8));
        assert!(g.neighbors(e).unwrap().is_empty());
        assert_eq!(g.stats().triples, 7);
    }

    #[test]
    fn unknown_entity_rejected() {
        let g = toy();
        assert!(matches!(g.neighbors(EntityId(99)), Err(KgError::UnknownEntity(_))));
        assert!(g.has_direct_edge(EntityId(0), EntityId(99), false).is_err());
    }

    #[test]
    fn direct_edges() {
        let g = toy();
        let id = |n: &str| g.entity_id(n).unwrap();
        let has_genre = g.relation_id("has_genre").unwrap();
        assert_eq!(g.has_direct_edge(id("the_witches"), id("fantasy"), false).unwrap(), vec![has_genre]);
        assert_eq!(g.has_direct_edge(id("fantasy"), id("the_witches"), false).unwrap(), vec![has_genre]);
        assert!(g.has_direct_edge(id("fantasy"), id("the_witches"), true).unwrap().is_empty());
        assert!(g.has_direct_edge(id("roald_dahl"), id("fantasy"), false).unwrap().is_empty());
        assert!(g.has_direct_edge(id("the_bfg"), id("the_bfg"), false).unwrap().is_empty());
    }

    #[test]
    fn vocabulary_is_case_and_space_insensitive() {
        let g = KnowledgeGraph::from_named([("The  BFG", "by", "x"), ("the bfg", "BY", "X")]).unwrap();
        assert_eq!(g.num_entities(), 2);
        assert_eq!(g.triples().len(), 1);
        assert_eq!(g.entity_name(EntityId(0)), "The BFG");
    }

    #[test]
    fn index_consistency() {
        let g = toy();
        let total: usize = (0..g.num_entities() as u32)
            .map(|e| g.outgoing(EntityId(e)).len() + g.incoming(EntityId(e)).len())
            .sum();
        assert_eq!(total, 2 * g.triples().len());
        for t in g.triples() {
            assert!(g.outgoing(t.subject).contains(&(t.predicate, t.object)));
            assert!(g.incoming(t.object).contains(&(t.predicate, t.subject)));
        }
    }
}
