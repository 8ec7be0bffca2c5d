use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::nce::{nce_loss_and_grad, Gradients};
use super::optim::{Optimizer, OptimizerRegistry, ParamGroup};
use super::sampler::{NegativeSampler, SampleRequest, SamplerRegistry, Slot};
use super::table::EmbeddingTable;
use super::EmbedError;
use crate::kg::{KnowledgeGraph, Triple};
use crate::seed::stage_seed;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainingConfig {
    pub dim: usize,
    pub learning_rate: f64,
    pub epochs: usize,
    pub batch_size: usize,
    /// Negatives per positive (ignored by the in-batch sampler).
    pub negatives: usize,
    /// Sampler spec, e.g. `uniform`, `sans:2`, `inbatch`.
    pub sampler: String,
    pub optimizer: String,
    /// L2 penalty applied to every row touched in a batch.
    pub l2: f64,
    pub seed: u64,
}

impl Default for TrainingConfig {
    fn default() -> Self {
        Self {
            dim: 64,
            learning_rate: 1e-2,
            epochs: 100,
            batch_size: 32,
            negatives: 50,
            sampler: "uniform".into(),
            optimizer: "sgd".into(),
            l2: 1e-4,
            seed: 0,
        }
    }
}

impl TrainingConfig {
    pub fn validate(&self) -> Result<(), EmbedError> {
        let bad = |m: &str| Err(EmbedError::InvalidConfig(m.to_string()));
        if self.dim == 0 {
            return Err(EmbedError::ZeroDimension);
        }
        if self.negatives == 0 {
            return bad("negatives must be at least 1");
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return bad("learning rate must be positive");
        }
        if self.batch_size == 0 || self.epochs == 0 {
            return bad("batch size and epochs must be at least 1");
        }
        if !(self.l2 >= 0.0) {
            return bad("l2 must be non-negative");
        }
        Ok(())
    }
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub table: EmbeddingTable,
    /// Mean NCE loss per epoch.
    pub losses: Vec<f64>,
}

impl TrainOutcome {
    /// Loss trace as `epoch,mean_loss` CSV, epochs counted from 1.
    pub fn loss_csv(&self) -> String {
        let mut s = String::from("epoch,mean_loss\n");
        for (i, l) in self.losses.iter().enumerate() {
            s.push_str(&format!("{},{}\n", i + 1, l));
        }
        s
    }
}

/// Train with samplers and optimizers from the built-in registries.
pub fn train(g: &KnowledgeGraph, cfg: &TrainingConfig) -> Result<TrainOutcome, EmbedError> {
    let mut sampler = SamplerRegistry::builtin().build(&cfg.sampler)?;
    let optimizer = OptimizerRegistry::builtin().build(&cfg.optimizer, cfg.learning_rate)?;
    train_with(g, cfg, sampler.as_mut(), optimizer)
}

/// Mini-batch training over shuffled triples. Each positive contributes two
/// NCE terms, one per corrupted slot; batch gradients are averaged over
/// terms before the optimizer step.
pub fn train_with(
    g: &KnowledgeGraph,
    cfg: &TrainingConfig,
    sampler: &mut dyn NegativeSampler,
    mut optimizer: Box<dyn Optimizer>,
) -> Result<TrainOutcome, EmbedError> {
    cfg.validate()?;
    let mut table = EmbeddingTable::init(g.num_entities(), g.num_relations(), cfg.dim, stage_seed(cfg.seed, "embed-init"))?;
    sampler.prepare(g)?;
    let mut rng = ChaCha8Rng::seed_from_u64(stage_seed(cfg.seed, "embed-train"));
    let mut order: Vec<Triple> = g.triples().to_vec();
    let mut losses = Vec::with_capacity(cfg.epochs);
    let mut batch_grads = Gradients::default();

    for epoch in 1..=cfg.epochs {
        order.shuffle(&mut rng);
        let (mut loss_sum, mut terms) = (0.0, 0usize);
        for batch in order.chunks(cfg.batch_size) {
            batch_grads.clear();
            let mut batch_terms = 0usize;
            for pos in batch {
                for slot in [Slot::Object, Slot::Subject] {
                    let req = SampleRequest { positive: *pos, slot, batch, subgraph: None };
                    let negatives = match sampler.sample(g, &req, cfg.negatives, &mut rng) {
                        Ok(n) => n,
                        Err(EmbedError::EmptyPool) => continue,
                        Err(e) => return Err(e),
                    };
                    let (loss, grads) = nce_loss_and_grad(&table, pos, &negatives)?;
                    loss_sum += loss;
                    batch_terms += 1;
                    batch_grads.merge(&grads, 1.0);
                }
            }
            if batch_terms == 0 {
                continue;
            }
            terms += batch_terms;
            let scale = 1.0 / batch_terms as f64;
            for (e, grad) in &batch_grads.entities {
                let row = table.entity_mut(*e);
                let step: Vec<f64> = grad.iter().zip(row.iter()).map(|(g, p)| g * scale + cfg.l2 * p).collect();
                optimizer.step(ParamGroup::Entity, e.index(), row, &step);
            }
            for (r, grad) in &batch_grads.relations {
                let row = table.relation_mut(*r);
                let step: Vec<f64> = grad.iter().zip(row.iter()).map(|(g, p)| g * scale + cfg.l2 * p).collect();
                optimizer.step(ParamGroup::Relation, r.index(), row, &step);
            }
        }
        if terms == 0 {
            return Err(EmbedError::EmptyPool);
        }
        let mean = loss_sum / terms as f64;
        if !mean.is_finite() || !table.is_finite() {
            return Err(EmbedError::DivergenceDetected { epoch });
        }
        log::debug!("epoch {epoch}: mean loss {mean:.6}");
        losses.push(mean);
    }
    Ok(TrainOutcome { table, losses })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kg::fixtures::toy;

    fn cfg() -> TrainingConfig {
        TrainingConfig { dim: 16, epochs: 50, seed: 3, learning_rate: 0.1, ..Default::default() }
    }

    #[test]
    fn loss_decreases_on_toy_graph() {
        let out = train(&toy(), &cfg()).unwrap();
        assert_eq!(out.losses.len(), 50);
        assert!(out.losses.last().unwrap() < out.losses.first().unwrap());
    }

    #[test]
    fn default_learning_rate_also_descends() {
        let c = TrainingConfig { learning_rate: 1e-2, ..cfg() };
        let out = train(&toy(), &c).unwrap();
        assert!(out.losses.last().unwrap() < out.losses.first().unwrap());
    }

    #[test]
    fn training_is_deterministic() {
        for sampler in ["uniform", "sans:2", "inbatch"] {
            let c = TrainingConfig { sampler: sampler.into(), batch_size: 4, ..cfg() };
            let a = train(&toy(), &c).unwrap();
            let b = train(&toy(), &c).unwrap();
            assert_eq!(a.losses, b.losses, "{sampler}");
            assert_eq!(a.table, b.table);
        }
    }

    #[test]
    fn huge_learning_rate_diverges() {
        let c = TrainingConfig { learning_rate: 1e6, ..cfg() };
        assert!(matches!(train(&toy(), &c), Err(EmbedError::DivergenceDetected { .. })));
    }

    #[test]
    fn adam_trains() {
        let c = TrainingConfig { optimizer: "adam".into(), learning_rate: 0.01, ..cfg() };
        let out = train(&toy(), &c).unwrap();
        assert!(out.losses.last().unwrap() < out.losses.first().unwrap());
    }

    #[test]
    fn config_validation() {
        let g = toy();
        for bad in [
            TrainingConfig { negatives: 0, ..cfg() },
            TrainingConfig { learning_rate: 0.0, ..cfg() },
            TrainingConfig { batch_size: 0, ..cfg() },
        ] {
            assert!(matches!(train(&g, &bad), Err(EmbedError::InvalidConfig(_))));
        }
        assert_eq!(train(&g, &TrainingConfig { dim: 0, ..cfg() }).unwrap_err(), EmbedError::ZeroDimension);
    }

    #[test]
    fn loss_csv_format() {
        let out = TrainOutcome { table: EmbeddingTable::init(1, 1, 1, 0).unwrap(), losses: vec![1.5, 0.25] };
        assert_eq!(out.loss_csv(), "epoch,mean_loss\n1,1.5\n2,0.25\n");
    }
}
