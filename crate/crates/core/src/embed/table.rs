use std::fmt::Write as _;

use rand::distributions::{Distribution, Uniform};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use super::EmbedError;
use crate::kg::{EntityId, KnowledgeGraph, RelationId, Triple};

pub const SNAPSHOT_MAGIC: &str = "pathhunter-emb";
pub const SNAPSHOT_VERSION: &str = "v1";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Provenance {
    Learned,
    External,
    Enriched,
}

/// Dense entity and relation vectors (the KG-entity memory), stored row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingTable {
    dim: usize,
    entities: Vec<f64>,
    relations: Vec<f64>,
    provenance: Provenance,
}

/// `Σ_i u_i · r_i · v_i`.
pub fn distmult_score(u: &[f64], r: &[f64], v: &[f64]) -> Result<f64, EmbedError> {
    if u.len() != r.len() || r.len() != v.len() {
        return Err(EmbedError::DimensionMismatch { expected: r.len(), found: if u.len() != r.len() { u.len() } else { v.len() } });
    }
    Ok(trilinear(u, r, v))
}

#[inline]
pub(crate) fn trilinear(u: &[f64], r: &[f64], v: &[f64]) -> f64 {
    u.iter().zip(r).zip(v).map(|((a, b), c)| a * c * b).sum()
}

impl EmbeddingTable {
    /// Uniform initialisation on `[-sqrt(6/d), sqrt(6/d)]`.
    pub fn init(num_entities: usize, num_relations: usize, dim: usize, seed: u64) -> Result<Self, EmbedError> {
        if dim == 0 {
            return Err(EmbedError::ZeroDimension);
        }
        if num_entities == 0 || num_relations == 0 {
            return Err(EmbedError::EmptyVocabulary);
        }
        let bound = (6.0 / dim as f64).sqrt();
        let dist = Uniform::new_inclusive(-bound, bound);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let entities = (0..num_entities * dim).map(|_| dist.sample(&mut rng)).collect();
        let relations = (0..num_relations * dim).map(|_| dist.sample(&mut rng)).collect();
        Ok(Self { dim, entities, relations, provenance: Provenance::Learned })
    }

    /// Build from explicit rows; every row must have length `dim`.
    pub fn from_rows(
        dim: usize,
        entity_rows: &[Vec<f64>],
        relation_rows: &[Vec<f64>],
        provenance: Provenance,
    ) -> Result<Self, EmbedError> {
        if dim == 0 {
            return Err(EmbedError::ZeroDimension);
        }
        let flatten = |rows: &[Vec<f64>]| -> Result<Vec<f64>, EmbedError> {
            let mut out = Vec::with_capacity(rows.len() * dim);
            for row in rows {
                if row.len() != dim {
                    return Err(EmbedError::DimensionMismatch { expected: dim, found: row.len() });
                }
                if row.iter().any(|x| !x.is_finite()) {
                    return Err(EmbedError::NonFinite);
                }
                out.extend_from_slice(row);
            }
            Ok(out)
        };
        Ok(Self { dim, entities: flatten(entity_rows)?, relations: flatten(relation_rows)?, provenance })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn num_entities(&self) -> usize {
        self.entities.len() / self.dim
    }

    pub fn num_relations(&self) -> usize {
        self.relations.len() / self.dim
    }

    pub fn provenance(&self) -> Provenance {
        self.provenance
    }

    pub fn set_provenance(&mut self, p: Provenance) {
        self.provenance = p;
    }

    pub fn entity(&self, e: EntityId) -> &[f64] {
        let i = e.index() * self.dim;
        &self.entities[i..i + self.dim]
    }

    pub fn entity_mut(&mut self, e: EntityId) -> &mut [f64] {
        let i = e.index() * self.dim;
        &mut self.entities[i..i + self.dim]
    }

    pub fn relation(&self, r: RelationId) -> &[f64] {
        let i = r.index() * self.dim;
        &self.relations[i..i + self.dim]
    }

    pub fn relation_mut(&mut self, r: RelationId) -> &mut [f64] {
        let i = r.index() * self.dim;
        &mut self.relations[i..i + self.dim]
    }

    pub fn score(&self, t: &Triple) -> f64 {
        trilinear(self.entity(t.subject), self.relation(t.predicate), self.entity(t.object))
    }

    pub fn is_finite(&self) -> bool {
        self.entities.iter().chain(&self.relations).all(|x| x.is_finite())
    }

    /// Multiply every entry by `factor`.
    pub fn scale(&mut self, factor: f64) {
        self.entities.iter_mut().chain(self.relations.iter_mut()).for_each(|x| *x *= factor);
    }

    /// Row counts must match the graph vocabularies.
    pub fn check_shape(&self, g: &KnowledgeGraph) -> Result<(), EmbedError> {
        if self.num_entities() != g.num_entities() || self.num_relations() != g.num_relations() {
            return Err(EmbedError::ShapeMismatch {
                entities: (self.num_entities(), g.num_entities()),
                relations: (self.num_relations(), g.num_relations()),
            });
        }
        Ok(())
    }

    /// Text snapshot: a header line then one `E|R<TAB>name<TAB>values` row
    /// per vector, values printed in shortest round-trip form.
    pub fn to_snapshot(&self, g: &KnowledgeGraph) -> Result<String, EmbedError> {
        self.check_shape(g)?;
        let mut out = format!(
            "{SNAPSHOT_MAGIC} {SNAPSHOT_VERSION} {} {} {}\n",
            self.num_entities(),
            self.num_relations(),
            self.dim
        );
        let mut row = |kind: char, name: &str, values: &[f64]| {
            let _ = write!(out, "{kind}\t{name}\t");
            for (i, v) in values.iter().enumerate() {
                if i > 0 {
                    out.push(' ');
                }
                let _ = write!(out, "{v}");
            }
            out.push('\n');
        };
        for (i, name) in g.entities().names().iter().enumerate() {
            row('E', name, self.entity(EntityId(i as u32)));
        }
        for (i, name) in g.relations().names().iter().enumerate() {
            row('R', name, self.relation(RelationId(i as u32)));
        }
        Ok(out)
    }

    /// Load a snapshot and align its rows to the graph vocabulary by name.
    pub fn from_snapshot(text: &str, g: &KnowledgeGraph) -> Result<Self, EmbedError> {
        let snap = Snapshot::parse(text)?;
        let mut entity_rows = vec![None; g.num_entities()];
        let mut relation_rows = vec![None; g.num_relations()];
        for (name, v) in snap.entities {
            let id = g.entity_id(&name).map_err(|_| EmbedError::Snapshot(format!("entity {name:?} not in graph")))?;
            entity_rows[id.index()] = Some(v);
        }
        for (name, v) in snap.relations {
            let id = g.relation_id(&name).map_err(|_| EmbedError::Snapshot(format!("relation {name:?} not in graph")))?;
            relation_rows[id.index()] = Some(v);
        }
        let missing = |rows: Vec<Option<Vec<f64>>>, what: &str| -> Result<Vec<Vec<f64>>, EmbedError> {
            rows.into_iter()
                .enumerate()
                .map(|(i, r)| r.ok_or_else(|| EmbedError::Snapshot(format!("no vector for {what} #{i}"))))
                .collect()
        };
        let e = missing(entity_rows, "entity")?;
        let r = missing(relation_rows, "relation")?;
        Self::from_rows(snap.dim, &e, &r, Provenance::External)
    }
}

/// A parsed snapshot file with rows in file order.
#[derive(Debug, Clone, PartialEq)]
pub struct Snapshot {
    pub dim: usize,
    pub entities: Vec<(String, Vec<f64>)>,
    pub relations: Vec<(String, Vec<f64>)>,
}

impl Snapshot {
    pub fn parse(text: &str) -> Result<Self, EmbedError> {
        let bad = |msg: String| EmbedError::Snapshot(msg);
        let mut lines = text.lines().enumerate().filter(|(_, l)| !l.trim().is_empty());
        let (_, header) = lines.next().ok_or_else(|| bad("empty snapshot".into()))?;
        let h: Vec<&str> = header.split_whitespace().collect();
        if h.len() != 5 || h[0] != SNAPSHOT_MAGIC || h[1] != SNAPSHOT_VERSION {
            return Err(bad(format!("bad header {header:?}")));
        }
        let num = |s: &str| s.parse::<usize>().map_err(|_| bad(format!("bad count {s:?} in header")));
        let (ne, nr, dim) = (num(h[2])?, num(h[3])?, num(h[4])?);
        if dim == 0 {
            return Err(EmbedError::ZeroDimension);
        }
        let mut snap = Snapshot { dim, entities: Vec::new(), relations: Vec::new() };
        for (i, line) in lines {
            let fields: Vec<&str> = line.split('\t').collect();
            if fields.len() != 3 {
                return Err(bad(format!("line {}: expected 3 tab-separated fields", i + 1)));
            }
            let values = fields[2]
                .split_whitespace()
                .map(|v| v.parse::<f64>())
                .collect::<Result<Vec<f64>, _>>()
                .map_err(|e| bad(format!("line {}: {e}", i + 1)))?;
            if values.len() != dim {
                return Err(EmbedError::DimensionMismatch { expected: dim, found: values.len() });
            }
            if values.iter().any(|v| !v.is_finite()) {
                return Err(EmbedError::NonFinite);
            }
            match fields[0] {
                "E" => snap.entities.push((fields[1].to_string(), values)),
                "R" => snap.relations.push((fields[1].to_string(), values)),
                other => return Err(bad(format!("line {}: unknown row kind {other:?}", i + 1))),
            }
        }
        if snap.entities.len() != ne || snap.relations.len() != nr {
            return Err(bad(format!(
                "header announces {ne} entities / {nr} relations, found {} / {}",
                snap.entities.len(),
                snap.relations.len()
            )));
        }
        Ok(snap)
    }

    /// All vectors in file order, entities first. Used for external query
    /// files, where names carry no meaning.
    pub fn vectors(&self) -> Vec<Vec<f64>> {
        self.entities.iter().chain(&self.relations).map(|(_, v)| v.clone()).collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kg::fixtures::toy;

    #[test]
    fn init_shapes_and_determinism() {
        let a = EmbeddingTable::init(8, 3, 4, 7).unwrap();
        assert_eq!((a.num_entities(), a.num_relations(), a.dim()), (8, 3, 4));
        let b = EmbeddingTable::init(8, 3, 4, 7).unwrap();
        assert_eq!(a, b);
        let bound = (6.0f64 / 4.0).sqrt();
        assert!(a.entities.iter().chain(&a.relations).all(|x| x.abs() <= bound));
        assert_ne!(a, EmbeddingTable::init(8, 3, 4, 8).unwrap());
        assert_eq!(EmbeddingTable::init(8, 3, 0, 7).unwrap_err(), EmbedError::ZeroDimension);
    }

    #[test]
    fn distmult_examples() {
        assert_eq!(distmult_score(&[1.0, 2.0], &[1.0, 0.0], &[3.0, 1.0]).unwrap(), 3.0);
        assert_eq!(distmult_score(&[0.0, 0.0], &[1.0, 5.0], &[3.0, 1.0]).unwrap(), 0.0);
        let (u, r, v) = ([1.0, 2.0], [2.0, 2.0], [3.0, 1.0]);
        assert_eq!(distmult_score(&u, &r, &v).unwrap(), 10.0);
        assert_eq!(distmult_score(&v, &r, &u).unwrap(), 10.0);
        assert!(matches!(distmult_score(&[1.0], &[1.0, 2.0], &[1.0, 2.0]), Err(EmbedError::DimensionMismatch { .. })));
    }

    #[test]
    fn snapshot_round_trip_is_exact() {
        let g = toy();
        let t = EmbeddingTable::init(g.num_entities(), g.num_relations(), 5, 3).unwrap();
        let text = t.to_snapshot(&g).unwrap();
        assert!(text.starts_with("pathhunter-emb v1 8 3 5\nE\troald_dahl\t"));
        let back = EmbeddingTable::from_snapshot(&text, &g).unwrap();
        assert_eq!(back.entities, t.entities);
        assert_eq!(back.relations, t.relations);
        assert_eq!(back.provenance(), Provenance::External);
    }

    #[test]
    fn snapshot_validation() {
        let g = toy();
        let t = EmbeddingTable::init(g.num_entities(), g.num_relations(), 2, 3).unwrap();
        let text = t.to_snapshot(&g).unwrap();
        let wrong_count = text.replacen("v1 8 3 2", "v1 9 3 2", 1);
        assert!(matches!(Snapshot::parse(&wrong_count), Err(EmbedError::Snapshot(_))));
        let mut lines: Vec<&str> = text.lines().collect();
        lines[1] = "E\troald_dahl\tNaN 1";
        assert_eq!(Snapshot::parse(&lines.join("\n")).unwrap_err(), EmbedError::NonFinite);
        lines[1] = "E\troald_dahl\t1 2 3";
        assert!(matches!(Snapshot::parse(&lines.join("\n")), Err(EmbedError::DimensionMismatch { .. })));
        assert!(Snapshot::parse("not-a-snapshot v1 1 1 1").is_err());
    }
}
