//! Corpus-level evaluation: ranking metrics, BLEU and the critic-based
//! hallucination rate.

use std::collections::{BTreeMap, HashMap};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::critic::CriticReport;

#[derive(Debug, Error, PartialEq)]
pub enum MetricsError {
    #[error("no items to evaluate")]
    EmptyInput,
    #[error("rank {rank} at position {index} is not a positive integer")]
    InvalidRank { index: usize, rank: usize },
    #[error("{hypotheses} hypotheses but {references} references")]
    LengthMismatch { hypotheses: usize, references: usize },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RankingSummary {
    pub count: usize,
    /// Hits@k keyed by k.
    pub hits: BTreeMap<usize, f64>,
    pub mean_rank: f64,
    pub mrr: f64,
}

impl RankingSummary {
    pub fn hits_at(&self, k: usize) -> Option<f64> {
        self.hits.get(&k).copied()
    }
}

/// Hits@k for each requested k, mean rank and mean reciprocal rank.
pub fn ranking_metrics(ranks: &[usize], ks: &[usize]) -> Result<RankingSummary, MetricsError> {
    if ranks.is_empty() {
        return Err(MetricsError::EmptyInput);
    }
    if let Some((index, &rank)) = ranks.iter().enumerate().find(|(_, &r)| r == 0) {
        return Err(MetricsError::InvalidRank { index, rank });
    }
    let n = ranks.len() as f64;
    let hits = ks
        .iter()
        .map(|&k| (k, ranks.iter().filter(|&&r| r <= k).count() as f64 / n))
        .collect();
    Ok(RankingSummary {
        count: ranks.len(),
        hits,
        mean_rank: ranks.iter().map(|&r| r as f64).sum::<f64>() / n,
        mrr: ranks.iter().map(|&r| 1.0 / r as f64).sum::<f64>() / n,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BleuLevel {
    /// Pooled counts, no smoothing.
    #[default]
    Corpus,
    /// Mean of per-pair scores with add-one smoothing of zero precisions.
    Sentence,
}

fn tokenize(s: &str) -> Vec<String> {
    s.split_whitespace().map(str::to_lowercase).collect()
}

fn ngram_counts(tokens: &[String], n: usize) -> HashMap<&[String], usize> {
    let mut counts = HashMap::new();
    if tokens.len() >= n {
        for w in tokens.windows(n) {
            *counts.entry(w).or_insert(0) += 1;
        }
    }
    counts
}

#[derive(Debug, Clone, Default)]
struct BleuStats {
    matches: Vec<usize>,
    totals: Vec<usize>,
    hyp_len: usize,
    ref_len: usize,
}

impl BleuStats {
    fn new(max_n: usize) -> Self {
        Self { matches: vec![0; max_n], totals: vec![0; max_n], hyp_len: 0, ref_len: 0 }
    }

    fn add(&mut self, hyp: &[String], reference: &[String]) {
        self.hyp_len += hyp.len();
        self.ref_len += reference.len();
        for n in 1..=self.matches.len() {
            let h = ngram_counts(hyp, n);
            let r = ngram_counts(reference, n);
            self.matches[n - 1] += h.iter().map(|(g, &c)| c.min(r.get(g).copied().unwrap_or(0))).sum::<usize>();
            self.totals[n - 1] += hyp.len().saturating_sub(n - 1);
        }
    }

    /// Orders with no hypothesis n-grams at all are left out of the mean.
    fn score(&self, smooth: bool) -> f64 {
        if self.hyp_len == 0 {
            return 0.0;
        }
        let mut log_sum = 0.0;
        let mut orders = 0;
        for (&m, &t) in self.matches.iter().zip(&self.totals) {
            if t == 0 {
                continue;
            }
            let p = match (m, smooth) {
                (0, false) => return 0.0,
                (0, true) => 1.0 / (t as f64 + 1.0),
                _ => m as f64 / t as f64,
            };
            log_sum += p.ln();
            orders += 1;
        }
        let bp = if self.hyp_len < self.ref_len {
            (1.0 - self.ref_len as f64 / self.hyp_len as f64).exp()
        } else {
            1.0
        };
        bp * (log_sum / orders as f64).exp()
    }
}

/// BLEU with one reference per hypothesis; tokens are lowercased
/// whitespace-separated words.
pub fn bleu<H, R>(hypotheses: &[H], references: &[R], max_n: usize, level: BleuLevel) -> Result<f64, MetricsError>
where
    H: AsRef<str>,
    R: AsRef<str>,
{
    if hypotheses.len() != references.len() {
        return Err(MetricsError::LengthMismatch {
            hypotheses: hypotheses.len(),
            references: references.len(),
        });
    }
    if hypotheses.is_empty() || max_n == 0 {
        return Err(MetricsError::EmptyInput);
    }
    let pairs = hypotheses.iter().zip(references).map(|(h, r)| (tokenize(h.as_ref()), tokenize(r.as_ref())));
    Ok(match level {
        BleuLevel::Corpus => {
            let mut stats = BleuStats::new(max_n);
            for (h, r) in pairs {
                stats.add(&h, &r);
            }
            stats.score(false)
        }
        BleuLevel::Sentence => {
            let total: f64 = pairs
                .map(|(h, r)| {
                    let mut stats = BleuStats::new(max_n);
                    stats.add(&h, &r);
                    stats.score(true)
                })
                .sum();
            total / hypotheses.len() as f64
        }
    })
}

/// Fraction of sentence-level flags that are set.
pub fn hallucination_rate_from_flags(flags: &[bool]) -> Result<f64, MetricsError> {
    if flags.is_empty() {
        return Err(MetricsError::EmptyInput);
    }
    Ok(flags.iter().filter(|&&f| f).count() as f64 / flags.len() as f64)
}

pub fn hallucination_rate(reports: &[CriticReport]) -> Result<f64, MetricsError> {
    let flags: Vec<bool> = reports.iter().map(|r| r.sentence_flag).collect();
    hallucination_rate_from_flags(&flags)
}

/// Everything the `eval` command reports. Sections not computed are absent.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct EvalSummary {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub ranking: Option<RankingSummary>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub bleu: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub hallucination_rate: Option<f64>,
    pub responses: usize,
    pub flagged_responses: usize,
}
