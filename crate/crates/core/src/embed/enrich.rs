//! Relational message passing with multiplicative composition.
//!
//! Per layer, for entity `v`:
//!
//! ```text
//! z'_v = act(W_self z_v + W_in Σ_{(u,r)→v} z_u∘z_r + W_out Σ_{v→(r,u)} z_u∘z_r)
//! z'_r = W_rel z_r
//! ```

use rand::distributions::{Distribution, Uniform};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::table::{EmbeddingTable, Provenance};
use super::EmbedError;
use crate::kg::{EntityId, KnowledgeGraph, RelationId};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum WeightInit {
    /// Seeded Glorot-uniform matrices.
    #[default]
    Glorot,
    Identity,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Activation {
    #[default]
    Identity,
    Tanh,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnrichConfig {
    pub layers: usize,
    pub seed: u64,
    pub weights: WeightInit,
    pub activation: Activation,
}

impl Default for EnrichConfig {
    fn default() -> Self {
        Self { layers: 1, seed: 0, weights: WeightInit::Glorot, activation: Activation::Identity }
    }
}

/// Square matrix, row-major.
struct Matrix {
    d: usize,
    w: Vec<f64>,
}

impl Matrix {
    fn identity(d: usize) -> Self {
        let mut w = vec![0.0; d * d];
        (0..d).for_each(|i| w[i * d + i] = 1.0);
        Self { d, w }
    }

    fn glorot(d: usize, rng: &mut ChaCha8Rng) -> Self {
        let bound = (6.0 / (2 * d) as f64).sqrt();
        let dist = Uniform::new_inclusive(-bound, bound);
        Self { d, w: (0..d * d).map(|_| dist.sample(rng)).collect() }
    }

    fn apply_add(&self, x: &[f64], out: &mut [f64]) {
        for (i, o) in out.iter_mut().enumerate() {
            *o += self.w[i * self.d..(i + 1) * self.d].iter().zip(x).map(|(a, b)| a * b).sum::<f64>();
        }
    }
}

pub fn enrich_relational(
    table: &EmbeddingTable,
    g: &KnowledgeGraph,
    cfg: &EnrichConfig,
) -> Result<EmbeddingTable, EmbedError> {
    if cfg.layers == 0 {
        return Err(EmbedError::InvalidConfig("enrichment needs at least one layer".into()));
    }
    table.check_shape(g)?;
    let d = table.dim();
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut current = table.clone();

    for _ in 0..cfg.layers {
        let [w_self, w_in, w_out, w_rel] = match cfg.weights {
            WeightInit::Identity => std::array::from_fn(|_| Matrix::identity(d)),
            WeightInit::Glorot => std::array::from_fn(|_| Matrix::glorot(d, &mut rng)),
        };
        let mut entity_rows = Vec::with_capacity(g.num_entities());
        let mut msg = vec![0.0; d];
        for e in 0..g.num_entities() as u32 {
            let v = EntityId(e);
            let mut out = vec![0.0; d];
            w_self.apply_add(current.entity(v), &mut out);
            for (index, w) in [(g.incoming(v), &w_in), (g.outgoing(v), &w_out)] {
                if index.is_empty() {
                    continue;
                }
                msg.iter_mut().for_each(|m| *m = 0.0);
                for &(r, u) in index {
                    for ((m, a), b) in msg.iter_mut().zip(current.entity(u)).zip(current.relation(r)) {
                        *m += a * b;
                    }
                }
                w.apply_add(&msg, &mut out);
            }
            if cfg.activation == Activation::Tanh {
                out.iter_mut().for_each(|x| *x = x.tanh());
            }
            entity_rows.push(out);
        }
        let relation_rows: Vec<Vec<f64>> = (0..g.num_relations() as u32)
            .map(|r| {
                let mut out = vec![0.0; d];
                w_rel.apply_add(current.relation(RelationId(r)), &mut out);
                out
            })
            .collect();
        current = EmbeddingTable::from_rows(d, &entity_rows, &relation_rows, Provenance::Enriched)?;
    }
    Ok(current)
}
