use std::collections::{BTreeSet, HashMap, VecDeque};

use super::{EntityId, KgError, KnowledgeGraph, RelationId, Triple};

/// Induced k-hop neighbourhood around a set of anchor entities.
#[derive(Debug, Clone)]
pub struct Subgraph {
    anchors: BTreeSet<EntityId>,
    hops: usize,
    nodes: BTreeSet<EntityId>,
    edges: Vec<Triple>,
    oriented: HashMap<(EntityId, EntityId), Vec<RelationId>>,
}

impl Subgraph {
    /// A neighbourhood with no nodes, for records without anchors.
    pub fn empty(hops: usize) -> Self {
        Self {
            anchors: BTreeSet::new(),
            hops,
            nodes: BTreeSet::new(),
            edges: Vec::new(),
            oriented: HashMap::new(),
        }
    }

    pub fn anchors(&self) -> &BTreeSet<EntityId> {
        &self.anchors
    }

    pub fn hops(&self) -> usize {
        self.hops
    }

    pub fn nodes(&self) -> &BTreeSet<EntityId> {
        &self.nodes
    }

    /// Induced triples, sorted.
    pub fn edges(&self) -> &[Triple] {
        &self.edges
    }

    pub fn contains(&self, e: EntityId) -> bool {
        self.nodes.contains(&e)
    }

    /// Same contract as [`KnowledgeGraph::has_direct_edge`], restricted to the
    /// induced edges. Both endpoints must be nodes of the subgraph.
    pub fn has_direct_edge(
        &self,
        u: EntityId,
        v: EntityId,
        oriented: bool,
    ) -> Result<Vec<RelationId>, KgError> {
        for e in [u, v] {
            if !self.contains(e) {
                return Err(KgError::UnknownEntity(e.to_string()));
            }
        }
        let mut rels = self.oriented.get(&(u, v)).cloned().unwrap_or_default();
        if !oriented {
            if let Some(back) = self.oriented.get(&(v, u)) {
                rels.extend(back);
            }
            rels.sort();
            rels.dedup();
        }
        Ok(rels)
    }
}

impl KnowledgeGraph {
    /// Breadth-first expansion over both edge directions up to `k` hops from
    /// any anchor, plus every triple whose endpoints both fall inside.
    pub fn khop_subgraph<I>(&self, anchors: I, k: usize) -> Result<Subgraph, KgError>
    where
        I: IntoIterator<Item = EntityId>,
    {
        let anchors: BTreeSet<EntityId> = anchors.into_iter().collect();
        if anchors.is_empty() {
            return Err(KgError::NoAnchors);
        }
        for &a in &anchors {
            self.check_entity(a)?;
        }

        let mut depth: HashMap<EntityId, usize> = anchors.iter().map(|&a| (a, 0)).collect();
        let mut queue: VecDeque<EntityId> = anchors.iter().copied().collect();
        while let Some(u) = queue.pop_front() {
            let d = depth[&u];
            if d == k {
                continue;
            }
            let next = self.outgoing(u).iter().chain(self.incoming(u)).map(|&(_, v)| v);
            for v in next {
                if !depth.contains_key(&v) {
                    depth.insert(v, d + 1);
                    queue.push_back(v);
                }
            }
        }
        let nodes: BTreeSet<EntityId> = depth.into_keys().collect();

        let mut edges = Vec::new();
        let mut oriented: HashMap<(EntityId, EntityId), Vec<RelationId>> = HashMap::new();
        for &u in &nodes {
            for &(r, v) in self.outgoing(u) {
                if nodes.contains(&v) {
                    edges.push(Triple::new(u, r, v));
                    oriented.entry((u, v)).or_default().push(r);
                }
            }
        }
        edges.sort();
        for rels in oriented.values_mut() {
            rels.sort();
        }
        Ok(Subgraph { anchors, hops: k, nodes, edges, oriented })
    }
}

#[cfg(test)]
mod tests {
    use super::super::fixtures::toy;
    use super::*;

    fn names(g: &KnowledgeGraph, s: &Subgraph) -> Vec<String> {
        let mut v: Vec<String> = s.nodes().iter().map(|&e| g.entity_name(e).to_string()).collect();
        v.sort();
        v
    }

    #[test]
    fn one_hop_from_author() {
        let g = toy();
        let dahl = g.entity_id("roald_dahl").unwrap();
        let s = g.khop_subgraph([dahl], 1).unwrap();
        assert_eq!(
            names(&g, &s),
            ["charlie_and_the_chocolate_factory", "roald_dahl", "the_bfg", "the_witches"]
        );
        assert_eq!(s.edges().len(), 3);
        let wrote = g.relation_id("wrote").unwrap();
        assert!(s.edges().iter().all(|t| t.subject == dahl && t.predicate == wrote));
    }

    #[test]
    fn two_hops_from_author() {
        let g = toy();
        let s = g.khop_subgraph([g.entity_id("roald_dahl").unwrap()], 2).unwrap();
        assert_eq!(
            names(&g, &s),
            [
                "charlie_and_the_chocolate_factory",
                "fantasy",
                "quentin_blake",
                "roald_dahl",
                "the_bfg",
                "the_witches"
            ]
        );
        assert_eq!(s.edges().len(), 5);
        assert!(s.edges().contains(&g.resolve("the_witches", "has_genre", "fantasy").unwrap()));
        assert!(s.edges().contains(&g.resolve("quentin_blake", "illustrated", "the_bfg").unwrap()));
        assert!(!s.contains(g.entity_id("the_hobbit").unwrap()));
    }

    #[test]
    fn zero_hops_keeps_anchor_edges_only() {
        let g = toy();
        let id = |n: &str| g.entity_id(n).unwrap();
        let s = g.khop_subgraph([id("the_witches"), id("fantasy"), id("the_bfg")], 0).unwrap();
        assert_eq!(s.nodes().len(), 3);
        assert_eq!(s.edges(), &[g.resolve("the_witches", "has_genre", "fantasy").unwrap()]);
    }

    #[test]
    fn subgraph_direct_edges() {
        let g = toy();
        let id = |n: &str| g.entity_id(n).unwrap();
        let s = g.khop_subgraph([id("roald_dahl")], 2).unwrap();
        assert_eq!(s.has_direct_edge(id("fantasy"), id("the_witches"), false).unwrap().len(), 1);
        assert!(s.has_direct_edge(id("fantasy"), id("the_witches"), true).unwrap().is_empty());
        assert!(s.has_direct_edge(id("the_hobbit"), id("fantasy"), false).is_err());
    }

    #[test]
    fn anchor_validation() {
        let g = toy();
        assert_eq!(g.khop_subgraph([], 1).unwrap_err(), KgError::NoAnchors);
        assert!(matches!(g.khop_subgraph([EntityId(42)], 1), Err(KgError::UnknownEntity(_))));
    }
}
