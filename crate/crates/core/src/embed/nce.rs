//! Sampled-softmax noise-contrastive loss over DistMult scores:
//!
//! `L = -s(t) + log(exp s(t) + Σ_j exp s(t'_j))`

use std::collections::BTreeMap;

use super::table::{trilinear, EmbeddingTable};
use super::EmbedError;
use crate::kg::{EntityId, RelationId, Triple};

/// Sparse gradient over the rows a loss term touched.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Gradients {
    pub entities: BTreeMap<EntityId, Vec<f64>>,
    pub relations: BTreeMap<RelationId, Vec<f64>>,
}

impl Gradients {
    fn axpy(dst: &mut [f64], w: f64, a: &[f64], b: &[f64]) {
        for ((d, x), y) in dst.iter_mut().zip(a).zip(b) {
            *d += w * x * y;
        }
    }

    /// Accumulate `w · ∂s(t)/∂θ`.
    fn add_triple(&mut self, table: &EmbeddingTable, t: &Triple, w: f64) {
        let d = table.dim();
        let (u, r, v) = (table.entity(t.subject), table.relation(t.predicate), table.entity(t.object));
        Self::axpy(self.entities.entry(t.subject).or_insert_with(|| vec![0.0; d]), w, r, v);
        Self::axpy(self.relations.entry(t.predicate).or_insert_with(|| vec![0.0; d]), w, u, v);
        Self::axpy(self.entities.entry(t.object).or_insert_with(|| vec![0.0; d]), w, u, r);
    }

    /// `self += scale · other`.
    pub fn merge(&mut self, other: &Gradients, scale: f64) {
        for (k, g) in &other.entities {
            let dst = self.entities.entry(*k).or_insert_with(|| vec![0.0; g.len()]);
            dst.iter_mut().zip(g).for_each(|(d, x)| *d += scale * x);
        }
        for (k, g) in &other.relations {
            let dst = self.relations.entry(*k).or_insert_with(|| vec![0.0; g.len()]);
            dst.iter_mut().zip(g).for_each(|(d, x)| *d += scale * x);
        }
    }

    pub fn clear(&mut self) {
        self.entities.clear();
        self.relations.clear();
    }
}

/// Max-shifted log-sum-exp.
pub fn log_sum_exp(xs: &[f64]) -> f64 {
    let m = xs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if !m.is_finite() {
        return m;
    }
    m + xs.iter().map(|x| (x - m).exp()).sum::<f64>().ln()
}

/// Loss from raw scores alone.
pub fn nce_loss(positive: f64, negatives: &[f64]) -> f64 {
    let mut all = Vec::with_capacity(negatives.len() + 1);
    all.push(positive);
    all.extend_from_slice(negatives);
    log_sum_exp(&all) - positive
}

/// Loss and exact gradient for one positive triple against its negatives.
pub fn nce_loss_and_grad(
    table: &EmbeddingTable,
    positive: &Triple,
    negatives: &[Triple],
) -> Result<(f64, Gradients), EmbedError> {
    if negatives.is_empty() {
        return Err(EmbedError::NoNegatives);
    }
    let scores: Vec<f64> = std::iter::once(positive)
        .chain(negatives)
        .map(|t| trilinear(table.entity(t.subject), table.relation(t.predicate), table.entity(t.object)))
        .collect();
    let lse = log_sum_exp(&scores);
    let loss = lse - scores[0];

    let mut grads = Gradients::default();
    // dL/ds+ = p+ - 1, dL/ds_j = p_j
    grads.add_triple(table, positive, (scores[0] - lse).exp() - 1.0);
    for (t, s) in negatives.iter().zip(&scores[1..]) {
        grads.add_triple(table, t, (s - lse).exp());
    }
    Ok((loss, grads))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kg::{EntityId as E, RelationId as R};

    fn t(s: u32, r: u32, o: u32) -> Triple {
        Triple::new(E(s), R(r), E(o))
    }

    #[test]
    fn closed_form_losses() {
        assert!((nce_loss(0.0, &[0.0, 0.0, 0.0]) - 4f64.ln()).abs() < 1e-12);
        assert!((nce_loss(1.0, &[1.0]) - 2f64.ln()).abs() < 1e-12);
        assert!(nce_loss(60.0, &[0.0, 1.0]) < 1e-20);
    }

    #[test]
    fn zero_table_gives_log_n_plus_one() {
        let table = EmbeddingTable::from_rows(2, &vec![vec![0.0; 2]; 4], &[vec![0.0; 2]], super::super::Provenance::External).unwrap();
        let (loss, grads) = nce_loss_and_grad(&table, &t(0, 0, 1), &[t(0, 0, 2), t(0, 0, 3), t(0, 0, 0)]).unwrap();
        assert!((loss - 4f64.ln()).abs() < 1e-12);
        assert!(grads.entities.values().flatten().all(|&g| g == 0.0));
    }

    #[test]
    fn large_scores_stay_finite() {
        assert!(nce_loss(1e4, &[-1e4, 1e4]).is_finite());
        assert!(nce_loss(-1e4, &[1e4, 1e4]).is_finite());
        assert!((nce_loss(-1e4, &[1e4]) - 2e4).abs() < 1e-6);
    }

    #[test]
    fn empty_negatives_rejected() {
        let table = EmbeddingTable::init(2, 1, 2, 0).unwrap();
        assert_eq!(nce_loss_and_grad(&table, &t(0, 0, 1), &[]).unwrap_err(), EmbedError::NoNegatives);
    }
}
