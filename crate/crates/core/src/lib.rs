//! Knowledge-graph faithfulness toolkit.
//!
//! The pipeline detects hallucinated entity mentions in KG-grounded
//! responses ([`critic`]), synthesises labelled hallucinations for training
//! data ([`corrupt`]), learns DistMult entity/relation embeddings with a
//! sampled-softmax contrastive objective ([`embed`]), and repairs flagged
//! mentions by ranking the entities of a k-hop subgraph ([`retrieve`]).

pub mod corrupt;
pub mod critic;
pub mod dialogue;
pub mod embed;
pub mod kg;
pub mod metrics;
pub mod retrieve;
pub mod seed;
pub mod text;
