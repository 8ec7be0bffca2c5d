//! Negative samplers, registered by name.
//!
//! Every sampler corrupts one slot of a positive triple; the other slot is
//! the anchor. A spec string selects a sampler: `uniform`, `sans:K`
//! (structure-aware, K-hop neighbourhood of the anchor) or `inbatch`.

use std::collections::BTreeMap;

use rand::seq::index;
use rand::{Rng, RngCore};

use super::EmbedError;
use crate::kg::{EntityId, KnowledgeGraph, Subgraph, Triple};

/// The corrupted position of a triple.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Slot {
    Subject,
    Object,
}

impl Slot {
    pub fn gold(self, t: &Triple) -> EntityId {
        match self {
            Slot::Subject => t.subject,
            Slot::Object => t.object,
        }
    }

    pub fn anchor(self, t: &Triple) -> EntityId {
        match self {
            Slot::Subject => t.object,
            Slot::Object => t.subject,
        }
    }

    pub fn replace(self, t: &Triple, e: EntityId) -> Triple {
        match self {
            Slot::Subject => Triple::new(e, t.predicate, t.object),
            Slot::Object => Triple::new(t.subject, t.predicate, e),
        }
    }
}

pub struct SampleRequest<'a> {
    pub positive: Triple,
    pub slot: Slot,
    /// The mini-batch the positive belongs to (including itself).
    pub batch: &'a [Triple],
    /// Explicit neighbourhood to draw from; overrides a sampler's own pools.
    pub subgraph: Option<&'a Subgraph>,
}

impl<'a> SampleRequest<'a> {
    pub fn new(positive: Triple, slot: Slot) -> Self {
        Self { positive, slot, batch: &[], subgraph: None }
    }
}

pub trait NegativeSampler: Send + Sync {
    /// Spec string this sampler was built from.
    fn name(&self) -> String;

    /// Called once per training run before any sampling.
    fn prepare(&mut self, _graph: &KnowledgeGraph) -> Result<(), EmbedError> {
        Ok(())
    }

    fn sample(
        &self,
        graph: &KnowledgeGraph,
        req: &SampleRequest<'_>,
        n: usize,
        rng: &mut dyn RngCore,
    ) -> Result<Vec<Triple>, EmbedError>;
}

/// Draw `n` entities from `pool`: distinct when the pool is large enough,
/// with replacement otherwise.
fn draw(pool: &[EntityId], n: usize, rng: &mut dyn RngCore) -> Vec<EntityId> {
    if pool.len() >= n {
        index::sample(rng, pool.len(), n).into_iter().map(|i| pool[i]).collect()
    } else {
        log::debug!("pool of {} below {n} requested negatives; sampling with replacement", pool.len());
        (0..n).map(|_| pool[rng.gen_range(0..pool.len())]).collect()
    }
}

/// Entities drawn uniformly (with replacement) from the whole vocabulary,
/// gold excluded.
#[derive(Debug, Default, Clone)]
pub struct UniformSampler;

impl NegativeSampler for UniformSampler {
    fn name(&self) -> String {
        "uniform".into()
    }

    fn sample(
        &self,
        graph: &KnowledgeGraph,
        req: &SampleRequest<'_>,
        n: usize,
        rng: &mut dyn RngCore,
    ) -> Result<Vec<Triple>, EmbedError> {
        let v = graph.num_entities() as u32;
        if v < 2 {
            return Err(EmbedError::EmptyPool);
        }
        let gold = req.slot.gold(&req.positive).0;
        Ok((0..n)
            .map(|_| {
                let mut x = rng.gen_range(0..v - 1);
                if x >= gold {
                    x += 1;
                }
                req.slot.replace(&req.positive, EntityId(x))
            })
            .collect())
    }
}

/// Structure-aware negatives from the anchor's k-hop neighbourhood.
#[derive(Debug, Clone)]
pub struct SansSampler {
    hops: usize,
    pools: Vec<Vec<EntityId>>,
}

impl SansSampler {
    pub fn new(hops: usize) -> Self {
        Self { hops, pools: Vec::new() }
    }

    pub fn hops(&self) -> usize {
        self.hops
    }
}

impl NegativeSampler for SansSampler {
    fn name(&self) -> String {
        format!("sans:{}", self.hops)
    }

    fn prepare(&mut self, graph: &KnowledgeGraph) -> Result<(), EmbedError> {
        self.pools = (0..graph.num_entities() as u32)
            .map(|e| {
                graph
                    .khop_subgraph([EntityId(e)], self.hops)
                    .map(|s| s.nodes().iter().copied().collect())
            })
            .collect::<Result<_, _>>()?;
        Ok(())
    }

    fn sample(
        &self,
        graph: &KnowledgeGraph,
        req: &SampleRequest<'_>,
        n: usize,
        rng: &mut dyn RngCore,
    ) -> Result<Vec<Triple>, EmbedError> {
        let gold = req.slot.gold(&req.positive);
        let owned;
        let nodes: &[EntityId] = match req.subgraph {
            Some(sub) => {
                owned = sub.nodes().iter().copied().collect::<Vec<_>>();
                &owned
            }
            None => match self.pools.get(req.slot.anchor(&req.positive).index()) {
                Some(p) => p,
                None => {
                    owned = graph
                        .khop_subgraph([req.slot.anchor(&req.positive)], self.hops)?
                        .nodes()
                        .iter()
                        .copied()
                        .collect();
                    &owned
                }
            },
        };
        let pool: Vec<EntityId> = nodes.iter().copied().filter(|&e| e != gold).collect();
        if pool.is_empty() {
            return Err(EmbedError::EmptyPool);
        }
        Ok(draw(&pool, n, rng).into_iter().map(|e| req.slot.replace(&req.positive, e)).collect())
    }
}

/// The other batch members' entities in the corrupted slot. Members sharing
/// the positive's gold entity are skipped, so the yield is at most B - 1.
#[derive(Debug, Default, Clone)]
pub struct InBatchSampler;

impl NegativeSampler for InBatchSampler {
    fn name(&self) -> String {
        "inbatch".into()
    }

    fn sample(
        &self,
        _graph: &KnowledgeGraph,
        req: &SampleRequest<'_>,
        _n: usize,
        _rng: &mut dyn RngCore,
    ) -> Result<Vec<Triple>, EmbedError> {
        let gold = req.slot.gold(&req.positive);
        let mut skipped_self = false;
        let mut out = Vec::with_capacity(req.batch.len().saturating_sub(1));
        for t in req.batch {
            if !skipped_self && *t == req.positive {
                skipped_self = true;
                continue;
            }
            let e = req.slot.gold(t);
            if e != gold {
                out.push(req.slot.replace(&req.positive, e));
            }
        }
        if out.is_empty() {
            return Err(EmbedError::EmptyPool);
        }
        Ok(out)
    }
}

pub type SamplerFactory = fn(Option<&str>) -> Result<Box<dyn NegativeSampler>, EmbedError>;

/// Name → constructor table for negative samplers.
#[derive(Clone)]
pub struct SamplerRegistry {
    factories: BTreeMap<String, SamplerFactory>,
}

fn no_argument(name: &str, arg: Option<&str>) -> Result<(), EmbedError> {
    match arg {
        None => Ok(()),
        Some(a) => Err(EmbedError::UnknownStrategy(format!("{name} takes no argument, got {a:?}"))),
    }
}

impl SamplerRegistry {
    pub fn empty() -> Self {
        Self { factories: BTreeMap::new() }
    }

    pub fn builtin() -> Self {
        let mut r = Self::empty();
        r.register("uniform", |arg| {
            no_argument("uniform", arg)?;
            Ok(Box::new(UniformSampler))
        });
        r.register("sans", |arg| {
            let hops = match arg {
                None => 1,
                Some(k) => k
                    .parse()
                    .map_err(|_| EmbedError::UnknownStrategy(format!("sans hop count {k:?} is not an integer")))?,
            };
            Ok(Box::new(SansSampler::new(hops)))
        });
        let inbatch: SamplerFactory = |arg| {
            no_argument("inbatch", arg)?;
            Ok(Box::new(InBatchSampler))
        };
        r.register("inbatch", inbatch);
        r.register("in_batch", inbatch);
        r
    }

    pub fn register(&mut self, name: &str, factory: SamplerFactory) {
        self.factories.insert(name.to_string(), factory);
    }

    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.factories.keys().map(String::as_str)
    }

    /// Build from `name` or `name:arg`.
    pub fn build(&self, spec: &str) -> Result<Box<dyn NegativeSampler>, EmbedError> {
        let (name, arg) = match spec.split_once(':') {
            Some((n, a)) => (n, Some(a)),
            None => (spec, None),
        };
        let factory = self
            .factories
            .get(name)
            .ok_or_else(|| EmbedError::UnknownStrategy(format!("unknown sampler {spec:?}")))?;
        factory(arg)
    }
}
