use std::collections::{BTreeMap, VecDeque};

use serde::{Deserialize, Serialize};

use super::RetrieveError;
use crate::dialogue::DialogueRecord;
use crate::embed::{distmult_score, EmbeddingTable};
use crate::kg::{EntityId, KnowledgeGraph, RelationId, Subgraph};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum QueryProvenance {
    OracleRelation,
    InferredRelation,
    External,
}

#[derive(Debug, Clone, PartialEq)]
pub struct QueryVector {
    pub vector: Vec<f64>,
    pub provenance: QueryProvenance,
    /// Relation the vector was read from, for relation-based modes.
    pub relation: Option<RelationId>,
}

/// Everything a query builder may look at for one flagged mention.
pub struct QueryContext<'a> {
    pub record: &'a DialogueRecord,
    pub graph: &'a KnowledgeGraph,
    pub table: &'a EmbeddingTable,
    pub sub: &'a Subgraph,
    pub anchor: EntityId,
    /// Position of the mention among the record's flagged mentions.
    pub mention_index: usize,
    pub previous: Option<EntityId>,
}

pub trait QueryBuilder: Send {
    fn name(&self) -> &'static str;
    fn build(&mut self, ctx: &QueryContext<'_>) -> Result<QueryVector, RetrieveError>;
}

/// Relation of the grounding triple touching the anchor; lowest relation id
/// when several do.
#[derive(Debug, Clone, Default)]
pub struct OracleRelation;

impl QueryBuilder for OracleRelation {
    fn name(&self) -> &'static str {
        "oracle"
    }

    fn build(&mut self, ctx: &QueryContext<'_>) -> Result<QueryVector, RetrieveError> {
        let r = ctx
            .record
            .grounding(ctx.graph)?
            .iter()
            .filter(|t| t.subject == ctx.anchor || t.object == ctx.anchor)
            .map(|t| t.predicate)
            .min()
            .ok_or(RetrieveError::NoGroundingRelation)?;
        Ok(QueryVector {
            vector: ctx.table.relation(r).to_vec(),
            provenance: QueryProvenance::OracleRelation,
            relation: Some(r),
        })
    }
}

/// `argmax_r max_e score(c, r, e)` over every relation and every subgraph
/// node other than the anchor. Ties go to the lowest relation id.
#[derive(Debug, Clone, Default)]
pub struct InferredRelation;

impl InferredRelation {
    pub fn infer(table: &EmbeddingTable, sub: &Subgraph, anchor: EntityId) -> Result<RelationId, RetrieveError> {
        if sub.edges().is_empty() {
            return Err(RetrieveError::EmptySubgraph);
        }
        let zc = table.entity(anchor);
        let mut best: Option<(RelationId, f64)> = None;
        for r in (0..table.num_relations() as u32).map(RelationId) {
            let zr = table.relation(r);
            for &e in sub.nodes().iter().filter(|&&e| e != anchor) {
                let s = distmult_score(zc, zr, table.entity(e))?;
                if best.is_none_or(|(_, b)| s > b) {
                    best = Some((r, s));
                }
            }
        }
        best.map(|(r, _)| r).ok_or(RetrieveError::EmptySubgraph)
    }
}

impl QueryBuilder for InferredRelation {
    fn name(&self) -> &'static str {
        "inferred"
    }

    fn build(&mut self, ctx: &QueryContext<'_>) -> Result<QueryVector, RetrieveError> {
        let r = Self::infer(ctx.table, ctx.sub, ctx.anchor)?;
        Ok(QueryVector {
            vector: ctx.table.relation(r).to_vec(),
            provenance: QueryProvenance::InferredRelation,
            relation: Some(r),
        })
    }
}

/// Vectors produced elsewhere, consumed one per flagged mention in order.
#[derive(Debug, Clone, Default)]
pub struct ExternalQueries {
    queue: VecDeque<Vec<f64>>,
}

impl ExternalQueries {
    pub fn new(vectors: impl IntoIterator<Item = Vec<f64>>) -> Self {
        Self { queue: vectors.into_iter().collect() }
    }

    pub fn remaining(&self) -> usize {
        self.queue.len()
    }
}

impl QueryBuilder for ExternalQueries {
    fn name(&self) -> &'static str {
        "external"
    }

    fn build(&mut self, ctx: &QueryContext<'_>) -> Result<QueryVector, RetrieveError> {
        let v = self.queue.pop_front().ok_or(RetrieveError::SourceExhausted)?;
        if v.len() != ctx.table.dim() {
            return Err(RetrieveError::DimensionMismatch { expected: ctx.table.dim(), found: v.len() });
        }
        if v.iter().any(|x| !x.is_finite()) {
            return Err(RetrieveError::NonFiniteQuery);
        }
        Ok(QueryVector { vector: v, provenance: QueryProvenance::External, relation: None })
    }
}

pub type QueryFactory = fn(Option<Vec<Vec<f64>>>) -> Result<Box<dyn QueryBuilder>, RetrieveError>;

/// Query modes by name. Factories receive the external vector list when one
/// was supplied.
#[derive(Clone)]
pub struct QueryRegistry {
    factories: BTreeMap<String, QueryFactory>,
}

impl QueryRegistry {
    pub fn empty() -> Self {
        Self { factories: BTreeMap::new() }
    }

    pub fn builtin() -> Self {
        let mut r = Self::empty();
        r.register("oracle", |_| Ok(Box::new(OracleRelation)));
        r.register("inferred", |_| Ok(Box::new(InferredRelation)));
        r.register("external", |v| match v {
            Some(v) => Ok(Box::new(ExternalQueries::new(v))),
            None => Err(RetrieveError::UnknownMode("external mode needs a query vector file".into())),
        });
        r
    }

    pub fn register(&mut self, name: &str, f: QueryFactory) {
        self.factories.insert(name.to_string(), f);
    }

    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.factories.keys().map(String::as_str)
    }

    pub fn build(&self, name: &str, external: Option<Vec<Vec<f64>>>) -> Result<Box<dyn QueryBuilder>, RetrieveError> {
        let f = self.factories.get(name).ok_or_else(|| RetrieveError::UnknownMode(format!("unknown query mode {name:?}")))?;
        f(external)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::embed::Provenance;
    use crate::kg::fixtures::toy;

    fn table(g: &KnowledgeGraph) -> EmbeddingTable {
        let rows: Vec<Vec<f64>> =
            (0..g.num_entities()).map(|i| vec![(i as f64 * 0.7).sin(), (i as f64 * 1.3).cos()]).collect();
        let rels = vec![vec![1.0, -0.5], vec![0.2, 2.0], vec![-1.0, 1.0]];
        EmbeddingTable::from_rows(2, &rows, &rels, Provenance::External).unwrap()
    }

    fn ctx<'a>(
        record: &'a DialogueRecord,
        g: &'a KnowledgeGraph,
        t: &'a EmbeddingTable,
        sub: &'a Subgraph,
        anchor: EntityId,
    ) -> QueryContext<'a> {
        QueryContext { record, graph: g, table: t, sub, anchor, mention_index: 0, previous: None }
    }

    #[test]
    fn oracle_reads_grounding_relation() {
        let g = toy();
        let t = table(&g);
        let dahl = g.entity_id("roald_dahl").unwrap();
        let sub = g.khop_subgraph([dahl], 1).unwrap();
        let r = DialogueRecord::new(
            vec![],
            vec![["roald_dahl".into(), "wrote".into(), "charlie_and_the_chocolate_factory".into()]],
            "",
        );
        let q = OracleRelation.build(&ctx(&r, &g, &t, &sub, dahl)).unwrap();
        let wrote = g.relation_id("wrote").unwrap();
        assert_eq!(q.vector, t.relation(wrote));
        assert_eq!(q.relation, Some(wrote));

        let unrelated = DialogueRecord::new(vec![], vec![["jrr_tolkien".into(), "wrote".into(), "the_hobbit".into()]], "");
        assert_eq!(
            OracleRelation.build(&ctx(&unrelated, &g, &t, &sub, dahl)).unwrap_err(),
            RetrieveError::NoGroundingRelation
        );
    }

    #[test]
    fn inferred_matches_exhaustive_enumeration() {
        let g = toy();
        let t = table(&g);
        let dahl = g.entity_id("roald_dahl").unwrap();
        let sub = g.khop_subgraph([dahl], 1).unwrap();
        let mut all = Vec::new();
        for r in 0..3u32 {
            for &e in sub.nodes() {
                if e != dahl {
                    let s: f64 = (0..2).map(|i| t.entity(dahl)[i] * t.relation(RelationId(r))[i] * t.entity(e)[i]).sum();
                    all.push((s, r));
                }
            }
        }
        let best = all.iter().cloned().fold((f64::NEG_INFINITY, 0), |acc, x| if x.0 > acc.0 { x } else { acc });
        let r = DialogueRecord::new(vec![], vec![], "");
        let q = InferredRelation.build(&ctx(&r, &g, &t, &sub, dahl)).unwrap();
        assert_eq!(q.relation, Some(RelationId(best.1)));
    }

    #[test]
    fn inferred_needs_edges() {
        let g = toy().with_extra_entities(["loner"]);
        let t = EmbeddingTable::init(g.num_entities(), g.num_relations(), 2, 0).unwrap();
        let loner = g.entity_id("loner").unwrap();
        let sub = g.khop_subgraph([loner], 2).unwrap();
        let r = DialogueRecord::new(vec![], vec![], "");
        assert_eq!(InferredRelation.build(&ctx(&r, &g, &t, &sub, loner)).unwrap_err(), RetrieveError::EmptySubgraph);
    }

    #[test]
    fn external_checks_dimension_and_exhaustion() {
        let g = toy();
        let t = table(&g);
        let dahl = g.entity_id("roald_dahl").unwrap();
        let sub = g.khop_subgraph([dahl], 1).unwrap();
        let r = DialogueRecord::new(vec![], vec![], "");
        let c = ctx(&r, &g, &t, &sub, dahl);
        let mut ext = ExternalQueries::new([vec![1.0, 2.0], vec![1.0, 2.0, 3.0]]);
        assert_eq!(ext.build(&c).unwrap().vector, vec![1.0, 2.0]);
        assert_eq!(ext.build(&c).unwrap_err(), RetrieveError::DimensionMismatch { expected: 2, found: 3 });
        assert_eq!(ext.build(&c).unwrap_err(), RetrieveError::SourceExhausted);
    }

    #[test]
    fn registry() {
        let reg = QueryRegistry::builtin();
        assert_eq!(reg.names().collect::<Vec<_>>(), ["external", "inferred", "oracle"]);
        assert_eq!(reg.build("oracle", None).unwrap().name(), "oracle");
        assert!(reg.build("external", None).is_err());
        assert!(matches!(reg.build("psychic", None), Err(RetrieveError::UnknownMode(_))));
    }
}
