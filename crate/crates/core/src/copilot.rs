use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::config::CopilotConfig;
use crate::kb::{KnowledgeBase, ModelKind, NodeRegistry};
use crate::providers::{ProviderError, Providers};
use crate::retrieval::{
    expand_intent, popularity_order, rerank, Document, EntryKind, Intent, RetrievalConfig, RetrievalError,
    RetrievalIndex, ScoredCandidate, Stats,
};

/// The engine: a knowledge base, the providers it talks to and a prebuilt
/// retrieval index per entry kind. Read-only once built and shareable across
/// threads.
pub struct Copilot {
    kb: Arc<KnowledgeBase>,
    providers: Providers,
    config: CopilotConfig,
    workflows: RetrievalIndex,
    nodes: RetrievalIndex,
    models: RetrievalIndex,
}

impl std::fmt::Debug for Copilot {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Copilot")
            .field("nodes", &self.nodes.len())
            .field("models", &self.models.len())
            .field("workflows", &self.workflows.len())
            .field("providers", &self.providers)
            .finish()
    }
}

/// Retrieval documents for one entry kind.
pub fn documents(kb: &KnowledgeBase, kind: EntryKind) -> Vec<Document> {
    match kind {
        EntryKind::Workflow => kb
            .workflows()
            .map(|w| Document {
                id: w.id.clone(),
                kind,
                text: w.retrieval_text(),
                stats: w.stats,
            })
            .collect(),
        EntryKind::Node => kb
            .registry()
            .specs()
            .into_iter()
            .map(|s| Document {
                id: s.class_type.clone(),
                kind,
                text: s.retrieval_text(),
                stats: Stats {
                    stars: s.stars,
                    ..Stats::default()
                },
            })
            .collect(),
        EntryKind::Model => kb
            .models()
            .map(|m| Document {
                id: m.id.clone(),
                kind,
                text: m.retrieval_text(),
                stats: m.stats(),
            })
            .collect(),
    }
}

impl Copilot {
    pub fn new(kb: impl Into<Arc<KnowledgeBase>>, providers: Providers, config: CopilotConfig) -> Result<Self, ProviderError> {
        let kb = kb.into();
        let emb = providers.embed.as_ref();
        let workflows = RetrievalIndex::build(EntryKind::Workflow, documents(&kb, EntryKind::Workflow), emb)?;
        let nodes = RetrievalIndex::build(EntryKind::Node, documents(&kb, EntryKind::Node), emb)?;
        let models = RetrievalIndex::build(EntryKind::Model, documents(&kb, EntryKind::Model), emb)?;
        Ok(Self {
            kb,
            providers,
            config,
            workflows,
            nodes,
            models,
        })
    }

    pub fn offline(kb: impl Into<Arc<KnowledgeBase>>) -> Self {
        Self::new(kb, Providers::offline(), CopilotConfig::default()).expect("offline embedding cannot fail")
    }

    pub fn kb(&self) -> &KnowledgeBase {
        &self.kb
    }

    pub fn registry(&self) -> &NodeRegistry {
        self.kb.registry()
    }

    pub fn providers(&self) -> &Providers {
        &self.providers
    }

    pub fn config(&self) -> &CopilotConfig {
        &self.config
    }

    pub fn index_for(&self, kind: EntryKind) -> &RetrievalIndex {
        match kind {
            EntryKind::Workflow => &self.workflows,
            EntryKind::Node => &self.nodes,
            EntryKind::Model => &self.models,
        }
    }

    pub fn expand(&self, raw: &str, context: Option<&str>) -> Intent {
        expand_intent(raw, context, self.providers.chat.as_ref())
    }

    /// Recall, rerank and popularity ordering for an already expanded intent.
    pub fn recommend(&self, kind: EntryKind, intent: &Intent) -> Result<Vec<ScoredCandidate>, RetrievalError> {
        self.recommend_with(kind, intent, &self.config.retrieval, &|_| true)
    }

    /// As [`Copilot::recommend`] with an explicit config and an admission
    /// filter applied before recall.
    pub fn recommend_with(
        &self,
        kind: EntryKind,
        intent: &Intent,
        cfg: &RetrievalConfig,
        admit: &dyn Fn(&Document) -> bool,
    ) -> Result<Vec<ScoredCandidate>, RetrievalError> {
        let recalled = self
            .index_for(kind)
            .recall_where(intent, cfg, self.providers.embed.as_ref(), admit)?;
        let top = rerank(intent, recalled, self.providers.rerank.as_ref(), cfg);
        Ok(popularity_order(top, cfg.popularity))
    }

    /// Cards for ranked candidates, enriched from the knowledge base.
    pub fn cards(&self, ranked: &[ScoredCandidate]) -> Vec<Card> {
        ranked
            .iter()
            .enumerate()
            .map(|(i, c)| self.card(i + 1, c))
            .collect()
    }

    fn card(&self, rank: usize, c: &ScoredCandidate) -> Card {
        let mut card = Card {
            rank,
            kind: c.entry.kind,
            id: c.entry.id.clone(),
            title: c.entry.id.clone(),
            description: c.text.clone(),
            stats: c.stats,
            pop: c.pop,
            scores: CardScores {
                sim_s: c.sim_s,
                sim_l: c.sim_l,
                sim_o: c.sim_o,
                rerank: c.rerank,
            },
            repo_url: None,
            category: None,
            base_model: None,
            model_kind: None,
        };
        match c.entry.kind {
            EntryKind::Node => {
                if let Some(s) = self.registry().get(&c.entry.id) {
                    card.title = s.display_name.clone();
                    card.repo_url = s.repo_url.clone();
                    card.category = Some(s.category.clone()).filter(|c| !c.is_empty());
                }
            }
            EntryKind::Model => {
                if let Ok(m) = self.kb.lookup_model(&c.entry.id) {
                    card.title = m.name.clone();
                    card.base_model = m.base_model.clone();
                    card.model_kind = Some(m.kind);
                    card.repo_url = m.extra.get("url").and_then(|u| u.as_str()).map(str::to_string);
                }
            }
            EntryKind::Workflow => {
                if let Ok(w) = self.kb.lookup_workflow(&c.entry.id) {
                    card.title = w.title.clone();
                }
            }
        }
        card
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CardScores {
    pub sim_s: f64,
    pub sim_l: f64,
    pub sim_o: f64,
    pub rerank: Option<f64>,
}

/// A recommended entry as shown to the user.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Card {
    pub rank: usize,
    pub kind: EntryKind,
    pub id: String,
    pub title: String,
    pub description: String,
    pub stats: Stats,
    pub pop: f64,
    pub scores: CardScores,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub repo_url: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub category: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub base_model: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub model_kind: Option<ModelKind>,
}
