use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{CorruptError, CorruptedRecord, CorruptionKind, Corruptor};
use crate::dialogue::{derive_anchors, AnchorSource, DialogueRecord};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FailurePolicy {
    /// Try the other strategy, then drop.
    #[default]
    Fallback,
    Drop,
}

impl std::str::FromStr for FailurePolicy {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "fallback" => Ok(Self::Fallback),
            "drop" => Ok(Self::Drop),
            other => Err(format!("unknown failure policy {other:?}")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorruptionConfig {
    pub extrinsic_fraction: f64,
    pub seed: u64,
    pub policy: FailurePolicy,
    /// Radius of the subgraph extrinsic replacements must avoid.
    pub hops: usize,
    pub anchors: AnchorSource,
}

impl Default for CorruptionConfig {
    fn default() -> Self {
        Self {
            extrinsic_fraction: 0.6,
            seed: 0,
            policy: FailurePolicy::Fallback,
            hops: 1,
            anchors: AnchorSource::default(),
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct CorruptionSummary {
    pub records: usize,
    pub assigned_extrinsic: usize,
    pub assigned_intrinsic: usize,
    pub extrinsic: usize,
    pub intrinsic: usize,
    pub fallback_to_extrinsic: usize,
    pub fallback_to_intrinsic: usize,
    pub dropped: usize,
}

/// Number of records assigned the extrinsic strategy.
pub fn extrinsic_quota(fraction: f64, n: usize) -> usize {
    ((fraction * n as f64).round() as usize).min(n)
}

/// Per-record random stream, derived from the root seed and the record index
/// only, so output does not depend on processing order.
fn record_rng(seed: u64, index: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(index as u64 + 1);
    rng
}

impl Corruptor<'_> {
    fn apply(
        &self,
        kind: CorruptionKind,
        record: &DialogueRecord,
        cfg: &CorruptionConfig,
        rng: &mut ChaCha8Rng,
    ) -> Result<CorruptedRecord, CorruptError> {
        match kind {
            CorruptionKind::Intrinsic => self.corrupt_intrinsic(record),
            CorruptionKind::Extrinsic => {
                let anchors = derive_anchors(record, self.graph, self.aliases, cfg.anchors)?
                    .ok_or(CorruptError::NoAnchors)?;
                let sub = self.graph.khop_subgraph(anchors.set.iter().copied(), cfg.hops)?;
                self.corrupt_extrinsic(record, &sub, rng)
            }
        }
    }
}

/// Assign strategies by a seeded shuffle split at the configured fraction,
/// corrupt every record, and apply the failure policy.
pub fn build_synthetic_dataset(
    corruptor: &Corruptor<'_>,
    records: &[DialogueRecord],
    cfg: &CorruptionConfig,
) -> Result<(Vec<CorruptedRecord>, CorruptionSummary), CorruptError> {
    if !(0.0..=1.0).contains(&cfg.extrinsic_fraction) {
        return Err(CorruptError::InvalidFraction(cfg.extrinsic_fraction));
    }
    if records.is_empty() {
        return Err(CorruptError::EmptyInput);
    }
    let n = records.len();
    let quota = extrinsic_quota(cfg.extrinsic_fraction, n);
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(cfg.seed));
    let mut assigned = vec![CorruptionKind::Intrinsic; n];
    for &i in &order[..quota] {
        assigned[i] = CorruptionKind::Extrinsic;
    }

    let mut summary = CorruptionSummary {
        records: n,
        assigned_extrinsic: quota,
        assigned_intrinsic: n - quota,
        ..Default::default()
    };
    let mut out = Vec::with_capacity(n);
    for (i, (record, &kind)) in records.iter().zip(&assigned).enumerate() {
        let mut rng = record_rng(cfg.seed, i);
        let result = match corruptor.apply(kind, record, cfg, &mut rng) {
            Ok(c) => Some(c),
            Err(e) if cfg.policy == FailurePolicy::Fallback => {
                log::debug!("record {i}: {kind:?} failed ({e}), trying {:?}", kind.other());
                match corruptor.apply(kind.other(), record, cfg, &mut rng) {
                    Ok(c) => {
                        match c.kind {
                            CorruptionKind::Extrinsic => summary.fallback_to_extrinsic += 1,
                            CorruptionKind::Intrinsic => summary.fallback_to_intrinsic += 1,
                        }
                        Some(c)
                    }
                    Err(e2) => {
                        log::info!("record {i} dropped: {e}; {e2}");
                        None
                    }
                }
            }
            Err(e) => {
                log::info!("record {i} dropped: {e}");
                None
            }
        };
        match result {
            Some(c) => {
                match c.kind {
                    CorruptionKind::Extrinsic => summary.extrinsic += 1,
                    CorruptionKind::Intrinsic => summary.intrinsic += 1,
                }
                out.push(c);
            }
            None => summary.dropped += 1,
        }
    }
    if out.is_empty() {
        return Err(CorruptError::AllRecordsDropped);
    }
    Ok((out, summary))
}

#[cfg(test)]
mod tests {
    use super::super::tests::toy_setup;
    use super::*;

    fn swappable() -> Vec<DialogueRecord> {
        (0..10)
            .map(|_| {
                DialogueRecord::new(
                    vec![],
                    vec![["roald_dahl".into(), "wrote".into(), "the_bfg".into()]],
                    "Roald Dahl wrote The BFG",
                )
            })
            .collect()
    }

    #[test]
    fn quota_is_exact() {
        let (g, aliases, types) = toy_setup();
        let c = Corruptor::new(&g, &aliases, &types);
        let cfg = CorruptionConfig { seed: 11, ..Default::default() };
        let (out, summary) = build_synthetic_dataset(&c, &swappable(), &cfg).unwrap();
        assert_eq!(out.len(), 10);
        assert_eq!((summary.extrinsic, summary.intrinsic), (6, 4));
        assert_eq!(summary.fallback_to_extrinsic + summary.fallback_to_intrinsic + summary.dropped, 0);
    }

    #[test]
    fn same_seed_same_output() {
        let (g, aliases, types) = toy_setup();
        let c = Corruptor::new(&g, &aliases, &types);
        let cfg = CorruptionConfig { seed: 5, ..Default::default() };
        let (a, _) = build_synthetic_dataset(&c, &swappable(), &cfg).unwrap();
        let (b, _) = build_synthetic_dataset(&c, &swappable(), &cfg).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn intrinsic_failures_fall_back_to_extrinsic() {
        let (g, aliases, types) = toy_setup();
        let c = Corruptor::new(&g, &aliases, &types);
        // no grounding pair in the text: intrinsic never applies
        let records: Vec<DialogueRecord> = (0..10)
            .map(|_| {
                DialogueRecord::new(
                    vec![],
                    vec![["roald_dahl".into(), "wrote".into(), "the_witches".into()]],
                    "He also wrote The BFG",
                )
            })
            .collect();
        let cfg = CorruptionConfig { seed: 2, ..Default::default() };
        let (out, summary) = build_synthetic_dataset(&c, &records, &cfg).unwrap();
        assert_eq!(out.len(), 10);
        assert!(out.iter().all(|r| r.kind == CorruptionKind::Extrinsic));
        assert_eq!(summary.assigned_extrinsic, 6);
        assert_eq!(summary.extrinsic, 10);
        assert_eq!(summary.fallback_to_extrinsic, 4);

        let drop = CorruptionConfig { policy: FailurePolicy::Drop, ..cfg };
        let (out, summary) = build_synthetic_dataset(&c, &records, &drop).unwrap();
        assert_eq!(out.len(), 6);
        assert_eq!(summary.dropped, 4);
    }

    #[test]
    fn invalid_inputs() {
        let (g, aliases, types) = toy_setup();
        let c = Corruptor::new(&g, &aliases, &types);
        let bad = CorruptionConfig { extrinsic_fraction: 1.5, ..Default::default() };
        assert_eq!(build_synthetic_dataset(&c, &swappable(), &bad).unwrap_err(), CorruptError::InvalidFraction(1.5));
        assert_eq!(
            build_synthetic_dataset(&c, &[], &CorruptionConfig::default()).unwrap_err(),
            CorruptError::EmptyInput
        );
        let hopeless = vec![DialogueRecord::new(vec![], vec![], "no entities")];
        assert_eq!(
            build_synthetic_dataset(&c, &hopeless, &CorruptionConfig::default()).unwrap_err(),
            CorruptError::AllRecordsDropped
        );
    }
}
