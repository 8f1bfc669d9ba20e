//! Coarse-to-fine module recommendation: intent expansion, hybrid
//! semantic/lexical recall, reranking and a final popularity ordering.

mod pipeline;

use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

use crate::providers::{EmbeddingProvider, ProviderError};

pub use pipeline::{
    expand_intent, popularity_order, popularity_score, rerank, Document, EntryKind, EntryRef, Intent,
    RetrievalError, RetrievalIndex, ScoredCandidate, Stats,
};

/// How the popularity stage treats the reranked list.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum PopularityMode {
    /// Sort by popularity, rerank score breaks ties.
    #[default]
    Reorder,
    /// Keep the rerank order, popularity only breaks ties.
    TieBreak,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RetrievalConfig {
    pub w_semantic: f64,
    pub w_lexical: f64,
    pub recall_k: usize,
    pub final_k: usize,
    pub popularity: PopularityMode,
}

impl Default for RetrievalConfig {
    fn default() -> Self {
        Self {
            w_semantic: 0.7,
            w_lexical: 0.3,
            recall_k: 30,
            final_k: 3,
            popularity: PopularityMode::Reorder,
        }
    }
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
#[error("invalid retrieval config: {0}")]
pub struct ConfigError(pub String);

impl RetrievalConfig {
    pub fn validate(&self) -> Result<(), ConfigError> {
        if !(0.0..=1.0).contains(&self.w_semantic) || !(0.0..=1.0).contains(&self.w_lexical) {
            return Err(ConfigError("weights must lie in [0, 1]".into()));
        }
        if (self.w_semantic + self.w_lexical - 1.0).abs() > 1e-9 {
            return Err(ConfigError(format!(
                "weights must sum to 1 (got {} + {})",
                self.w_semantic, self.w_lexical
            )));
        }
        if self.final_k < 1 || self.recall_k < self.final_k {
            return Err(ConfigError(format!(
                "need recall_k >= final_k >= 1 (got recall_k={}, final_k={})",
                self.recall_k, self.final_k
            )));
        }
        Ok(())
    }

    /// `w_semantic·sim_S + w_lexical·sim_L`.
    pub fn combined_score(&self, sim_s: f64, sim_l: f64) -> f64 {
        self.w_semantic * sim_s + self.w_lexical * sim_l
    }
}

/// Free-function form of [`RetrievalConfig::combined_score`].
pub fn combined_score(sim_s: f64, sim_l: f64, cfg: &RetrievalConfig) -> f64 {
    cfg.combined_score(sim_s, sim_l)
}

/// Lowercase alphanumeric word set.
pub fn tokenize(text: &str) -> BTreeSet<String> {
    text.split(|c: char| !c.is_alphanumeric())
        .filter(|w| !w.is_empty())
        .map(str::to_lowercase)
        .collect()
}

/// Share of query words that also occur in the document: |Q ∩ D| / |Q|.
pub fn lexical_sim(query: &str, doc: &str) -> f64 {
    let q = tokenize(query);
    if q.is_empty() {
        return 0.0;
    }
    let d = tokenize(doc);
    q.intersection(&d).count() as f64 / q.len() as f64
}

/// Cosine similarity; 0 when either vector has zero norm.
pub fn cosine(a: &[f64], b: &[f64]) -> f64 {
    let dot: f64 = a.iter().zip(b).map(|(x, y)| x * y).sum();
    let na = a.iter().map(|x| x * x).sum::<f64>().sqrt();
    let nb = b.iter().map(|x| x * x).sum::<f64>().sqrt();
    if na == 0.0 || nb == 0.0 {
        0.0
    } else {
        dot / (na * nb)
    }
}

/// Cosine mapped from [-1, 1] onto [0, 1] and clamped.
pub fn cosine_to_unit(a: &[f64], b: &[f64]) -> f64 {
    ((cosine(a, b) + 1.0) / 2.0).clamp(0.0, 1.0)
}

pub fn semantic_sim(query: &str, doc: &str, emb: &dyn EmbeddingProvider) -> Result<f64, ProviderError> {
    let vs = emb.embed(&[query.to_string(), doc.to_string()])?;
    Ok(cosine_to_unit(&vs[0], &vs[1]))
}
