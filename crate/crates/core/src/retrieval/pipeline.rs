use std::cmp::Ordering;
use std::fmt;

use serde::{Deserialize, Serialize};

use super::{cosine_to_unit, lexical_sim, PopularityMode, RetrievalConfig};
use crate::providers::{ChatMessage, ChatProvider, EmbeddingProvider, ProviderError, RerankProvider};

/// A user request, before and after expansion.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Intent {
    pub raw: String,
    pub expanded: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub language_tag: Option<String>,
}

impl Intent {
    pub fn new(raw: impl Into<String>) -> Self {
        let raw = raw.into();
        Self {
            expanded: raw.clone(),
            raw,
            language_tag: None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EntryKind {
    Workflow,
    Node,
    Model,
}

impl fmt::Display for EntryKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            EntryKind::Workflow => "workflow",
            EntryKind::Node => "node",
            EntryKind::Model => "model",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct EntryRef {
    pub id: String,
    pub kind: EntryKind,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct Stats {
    pub stars: u64,
    pub downloads: u64,
    pub upvotes: u64,
}

/// `ln(1 + stars + downloads + upvotes)`.
pub fn popularity_score(stats: &Stats) -> f64 {
    let total = stats.stars.saturating_add(stats.downloads).saturating_add(stats.upvotes);
    (total as f64).ln_1p()
}

/// One retrievable unit: its id, the text it is matched on and its stats.
#[derive(Debug, Clone, PartialEq)]
pub struct Document {
    pub id: String,
    pub kind: EntryKind,
    pub text: String,
    pub stats: Stats,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoredCandidate {
    pub entry: EntryRef,
    pub sim_s: f64,
    pub sim_l: f64,
    pub sim_o: f64,
    pub rerank: Option<f64>,
    pub pop: f64,
    pub stats: Stats,
    #[serde(skip)]
    pub text: String,
}

impl ScoredCandidate {
    pub fn id(&self) -> &str {
        &self.entry.id
    }

    fn rerank_or_sim(&self) -> f64 {
        self.rerank.unwrap_or(self.sim_o)
    }
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum RetrievalError {
    #[error("the {0} knowledge base is empty")]
    EmptyKb(EntryKind),
    #[error(transparent)]
    Provider(#[from] ProviderError),
}

/// Documents of one kind with their embeddings, kept in ascending id order.
#[derive(Debug, Clone)]
pub struct RetrievalIndex {
    kind: EntryKind,
    docs: Vec<Document>,
    embeddings: Vec<Vec<f64>>,
}

const EMBED_BATCH: usize = 64;

impl RetrievalIndex {
    pub fn build(
        kind: EntryKind,
        mut docs: Vec<Document>,
        emb: &dyn EmbeddingProvider,
    ) -> Result<Self, ProviderError> {
        docs.sort_by(|a, b| a.id.cmp(&b.id));
        let mut embeddings = Vec::with_capacity(docs.len());
        for batch in docs.chunks(EMBED_BATCH) {
            let texts: Vec<String> = batch.iter().map(|d| d.text.clone()).collect();
            embeddings.extend(emb.embed(&texts)?);
        }
        Ok(Self { kind, docs, embeddings })
    }

    pub fn kind(&self) -> EntryKind {
        self.kind
    }

    pub fn len(&self) -> usize {
        self.docs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.docs.is_empty()
    }

    pub fn docs(&self) -> &[Document] {
        &self.docs
    }

    pub fn get(&self, id: &str) -> Option<&Document> {
        self.docs
            .binary_search_by(|d| d.id.as_str().cmp(id))
            .ok()
            .map(|i| &self.docs[i])
    }

    /// Scores every admitted document and sorts by `sim_O` descending, id
    /// ascending.
    pub fn rank_all(
        &self,
        query: &str,
        cfg: &RetrievalConfig,
        emb: &dyn EmbeddingProvider,
        admit: &dyn Fn(&Document) -> bool,
    ) -> Result<Vec<ScoredCandidate>, ProviderError> {
        let q = emb
            .embed(&[query.to_string()])?
            .pop()
            .expect("one embedding per input");
        let mut scored: Vec<ScoredCandidate> = self
            .docs
            .iter()
            .zip(&self.embeddings)
            .filter(|(d, _)| admit(d))
            .map(|(doc, vec)| {
                let sim_s = cosine_to_unit(&q, vec);
                let sim_l = lexical_sim(query, &doc.text);
                ScoredCandidate {
                    entry: EntryRef {
                        id: doc.id.clone(),
                        kind: doc.kind,
                    },
                    sim_s,
                    sim_l,
                    sim_o: cfg.combined_score(sim_s, sim_l),
                    rerank: None,
                    pop: popularity_score(&doc.stats),
                    stats: doc.stats,
                    text: doc.text.clone(),
                }
            })
            .collect();
        scored.sort_by(|a, b| b.sim_o.total_cmp(&a.sim_o).then_with(|| a.entry.id.cmp(&b.entry.id)));
        Ok(scored)
    }

    /// The `recall_k` best documents for the intent.
    pub fn recall(
        &self,
        intent: &Intent,
        cfg: &RetrievalConfig,
        emb: &dyn EmbeddingProvider,
    ) -> Result<Vec<ScoredCandidate>, RetrievalError> {
        self.recall_where(intent, cfg, emb, &|_| true)
    }

    pub fn recall_where(
        &self,
        intent: &Intent,
        cfg: &RetrievalConfig,
        emb: &dyn EmbeddingProvider,
        admit: &dyn Fn(&Document) -> bool,
    ) -> Result<Vec<ScoredCandidate>, RetrievalError> {
        if self.docs.is_empty() {
            return Err(RetrievalError::EmptyKb(self.kind));
        }
        let mut ranked = self.rank_all(&intent.expanded, cfg, emb, admit)?;
        ranked.truncate(cfg.recall_k);
        Ok(ranked)
    }

    /// Expand-free convenience: recall → rerank → popularity.
    pub fn search(
        &self,
        intent: &Intent,
        cfg: &RetrievalConfig,
        emb: &dyn EmbeddingProvider,
        reranker: &dyn RerankProvider,
        admit: &dyn Fn(&Document) -> bool,
    ) -> Result<Vec<ScoredCandidate>, RetrievalError> {
        let recalled = self.recall_where(intent, cfg, emb, admit)?;
        let top = rerank(intent, recalled, reranker, cfg);
        Ok(popularity_order(top, cfg.popularity))
    }
}

/// Keeps the `final_k` best candidates by rerank score. An offline reranker
/// or a failing provider leaves `rerank = sim_O`, preserving recall order.
pub fn rerank(
    intent: &Intent,
    mut candidates: Vec<ScoredCandidate>,
    reranker: &dyn RerankProvider,
    cfg: &RetrievalConfig,
) -> Vec<ScoredCandidate> {
    let scores = if reranker.is_offline() || candidates.is_empty() {
        None
    } else {
        let docs: Vec<String> = candidates.iter().map(|c| c.text.clone()).collect();
        match reranker.score(&intent.expanded, &docs) {
            Ok(s) if s.len() == docs.len() && s.iter().all(|x| x.is_finite()) => Some(s),
            Ok(s) => {
                tracing::warn!(got = s.len(), want = docs.len(), "reranker returned malformed scores; using sim_O");
                None
            }
            Err(e) => {
                tracing::warn!(error = %e, "reranker failed; using sim_O");
                None
            }
        }
    };
    for (i, c) in candidates.iter_mut().enumerate() {
        c.rerank = Some(scores.as_ref().map_or(c.sim_o, |s| s[i]));
    }
    // stable: equal scores keep recall order
    candidates.sort_by(|a, b| b.rerank_or_sim().total_cmp(&a.rerank_or_sim()));
    candidates.truncate(cfg.final_k);
    candidates
}

/// Final ordering of the reranked list by `ln(1 + stars + downloads + upvotes)`.
pub fn popularity_order(mut top: Vec<ScoredCandidate>, mode: PopularityMode) -> Vec<ScoredCandidate> {
    for c in &mut top {
        c.pop = popularity_score(&c.stats);
    }
    let by_pop = |a: &ScoredCandidate, b: &ScoredCandidate| b.pop.total_cmp(&a.pop);
    let by_rerank = |a: &ScoredCandidate, b: &ScoredCandidate| b.rerank_or_sim().total_cmp(&a.rerank_or_sim());
    let by_id = |a: &ScoredCandidate, b: &ScoredCandidate| a.entry.id.cmp(&b.entry.id);
    top.sort_by(|a, b| -> Ordering {
        match mode {
            PopularityMode::Reorder => by_pop(a, b).then_with(|| by_rerank(a, b)),
            PopularityMode::TieBreak => by_rerank(a, b).then_with(|| by_pop(a, b)),
        }
        .then_with(|| by_id(a, b))
    });
    top
}

const EXPAND_SYSTEM: &str = "You help users of a node-based image and video generation tool. \
Rewrite the user's request as a detailed task description: the goal, the kind of inputs and \
outputs involved, and any considerations worth keeping in mind (for example preserving the \
subject's identity when restyling a portrait). Reply with the description only.";

/// Asks the chat provider to turn a terse request into a detailed task
/// description. Offline providers and failures leave the text unchanged.
pub fn expand_intent(raw: &str, context: Option<&str>, llm: &dyn ChatProvider) -> Intent {
    let mut intent = Intent::new(raw);
    if llm.is_offline() {
        return intent;
    }
    let mut user = format!("Request: {raw}");
    if let Some(ctx) = context.filter(|c| !c.trim().is_empty()) {
        user.push_str("\n\nAttached media description: ");
        user.push_str(ctx);
    }
    match llm.complete(&[ChatMessage::system(EXPAND_SYSTEM), ChatMessage::user(user)], None) {
        Ok(text) if !text.trim().is_empty() => intent.expanded = text.trim().to_string(),
        Ok(_) => tracing::warn!("intent expansion returned nothing; using the raw request"),
        Err(e) => tracing::warn!(error = %e, "intent expansion failed; using the raw request"),
    }
    intent
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::providers::mock::{FailingChat, FnReranker, SequenceChat};
    use crate::providers::{NgramEmbedder, PassthroughReranker, ScriptedChat};

    fn doc(id: &str, text: &str, stars: u64) -> Document {
        Document {
            id: id.into(),
            kind: EntryKind::Workflow,
            text: text.into(),
            stats: Stats {
                stars,
                ..Stats::default()
            },
        }
    }

    fn index(docs: Vec<Document>) -> RetrievalIndex {
        RetrievalIndex::build(EntryKind::Workflow, docs, &NgramEmbedder).unwrap()
    }

    fn cand(id: &str, stats: Stats, rerank: f64) -> ScoredCandidate {
        ScoredCandidate {
            entry: EntryRef {
                id: id.into(),
                kind: EntryKind::Workflow,
            },
            sim_s: 0.0,
            sim_l: 0.0,
            sim_o: rerank,
            rerank: Some(rerank),
            pop: 0.0,
            stats,
            text: String::new(),
        }
    }

    fn ids(cs: &[ScoredCandidate]) -> Vec<&str> {
        cs.iter().map(|c| c.id()).collect()
    }

    #[test]
    fn offline_expansion_passes_through() {
        let intent = expand_intent("a cat", None, &ScriptedChat::default());
        assert_eq!(intent.expanded, "a cat");
    }

    #[test]
    fn scripted_expansion_is_used_verbatim() {
        let chat = SequenceChat::new(["a detailed cat portrait task"]);
        let intent = expand_intent("a cat", Some("photo of a tabby"), &chat);
        assert_eq!(intent.expanded, "a detailed cat portrait task");
        assert!(chat.prompts()[0][1].content.contains("photo of a tabby"));
    }

    #[test]
    fn failing_expansion_degrades_to_raw() {
        assert_eq!(expand_intent("a cat", None, &FailingChat).expanded, "a cat");
    }

    #[test]
    fn small_kb_returns_everything_sorted() {
        let idx = index(vec![
            doc("e", "portrait relighting", 0),
            doc("a", "upscale images to 4k", 0),
            doc("c", "inpaint a masked region", 0),
            doc("b", "text to image with sdxl", 0),
            doc("d", "face swap in videos", 0),
        ]);
        let got = idx
            .recall(&Intent::new("upscale images"), &RetrievalConfig::default(), &NgramEmbedder)
            .unwrap();
        assert_eq!(got.len(), 5);
        assert_eq!(got[0].id(), "a");
        assert!(got.windows(2).all(|w| w[0].sim_o >= w[1].sim_o));
    }

    #[test]
    fn exact_description_ranks_first() {
        let idx = index(vec![
            doc("a", "upscale images to 4k", 0),
            doc("b", "text to image with sdxl", 0),
        ]);
        let got = idx
            .recall(&Intent::new("text to image with sdxl"), &RetrievalConfig::default(), &NgramEmbedder)
            .unwrap();
        assert_eq!(got[0].id(), "b");
        assert!((got[0].sim_l - 1.0).abs() < 1e-12);
        assert!((got[0].sim_s - 1.0).abs() < 1e-12);
    }

    #[test]
    fn empty_kb_is_an_error() {
        let idx = index(vec![]);
        let err = idx
            .recall(&Intent::new("x"), &RetrievalConfig::default(), &NgramEmbedder)
            .unwrap_err();
        assert_eq!(err, RetrievalError::EmptyKb(EntryKind::Workflow));
    }

    #[test]
    fn offline_rerank_keeps_recall_order() {
        let idx = index((0..10).map(|i| doc(&format!("w{i}"), &format!("workflow number {i} for images"), 0)).collect());
        let cfg = RetrievalConfig::default();
        let intent = Intent::new("workflow for images 3");
        let recalled = idx.recall(&intent, &cfg, &NgramEmbedder).unwrap();
        let top = rerank(&intent, recalled.clone(), &PassthroughReranker::default(), &cfg);
        assert_eq!(ids(&top), ids(&recalled[..3]));
        assert!(top.iter().all(|c| c.rerank == Some(c.sim_o)));
    }

    #[test]
    fn scripted_rerank_inverts_order() {
        let idx = index(vec![doc("a", "alpha", 0), doc("b", "beta", 0), doc("c", "gamma", 0)]);
        let cfg = RetrievalConfig::default();
        let intent = Intent::new("alpha");
        let recalled = idx.recall(&intent, &cfg, &NgramEmbedder).unwrap();
        let order: Vec<String> = recalled.iter().map(|c| c.text.clone()).collect();
        let inverted = FnReranker::new(move |_, docs| {
            Ok(docs.iter().map(|d| order.iter().position(|o| o == d).unwrap() as f64).collect())
        });
        let top = rerank(&intent, recalled.clone(), &inverted, &cfg);
        let mut want = ids(&recalled);
        want.reverse();
        assert_eq!(ids(&top), want);
    }

    #[test]
    fn rerank_truncates_to_final_k_and_tolerates_short_lists() {
        let cfg = RetrievalConfig::default();
        let two = vec![cand("a", Stats::default(), 0.5), cand("b", Stats::default(), 0.4)];
        assert_eq!(rerank(&Intent::new("q"), two, &PassthroughReranker::default(), &cfg).len(), 2);
    }

    #[test]
    fn failing_reranker_falls_back_to_sim_o() {
        let cfg = RetrievalConfig::default();
        let cs = vec![cand("a", Stats::default(), 0.5), cand("b", Stats::default(), 0.9)];
        let failing = FnReranker::new(|_, _| Err(crate::providers::mock::unavailable("r")));
        let top = rerank(&Intent::new("q"), cs, &failing, &cfg);
        assert_eq!(ids(&top), ["b", "a"]);
    }

    #[test]
    fn popularity_is_monotone_in_stats() {
        let s = |stars| Stats {
            stars,
            ..Stats::default()
        };
        let got = popularity_order(
            vec![cand("x", s(100), 0.1), cand("y", s(0), 0.9), cand("z", s(10), 0.5)],
            PopularityMode::Reorder,
        );
        assert_eq!(ids(&got), ["x", "z", "y"]);
    }

    #[test]
    fn zero_stats_keep_rerank_order() {
        let got = popularity_order(
            vec![
                cand("c", Stats::default(), 0.9),
                cand("a", Stats::default(), 0.5),
                cand("b", Stats::default(), 0.7),
            ],
            PopularityMode::Reorder,
        );
        assert_eq!(ids(&got), ["c", "b", "a"]);
    }

    #[test]
    fn equal_popularity_defers_to_rerank() {
        let p = Stats {
            stars: 50,
            downloads: 50,
            upvotes: 0,
        };
        let q = Stats {
            stars: 0,
            downloads: 0,
            upvotes: 100,
        };
        assert_eq!(popularity_score(&p), 101f64.ln());
        assert_eq!(popularity_score(&p), popularity_score(&q));
        let got = popularity_order(vec![cand("p", p, 0.2), cand("q", q, 0.8)], PopularityMode::Reorder);
        assert_eq!(ids(&got), ["q", "p"]);
    }

    #[test]
    fn tie_break_mode_keeps_rerank_order() {
        let s = |stars| Stats {
            stars,
            ..Stats::default()
        };
        let got = popularity_order(
            vec![cand("x", s(100), 0.1), cand("y", s(0), 0.9)],
            PopularityMode::TieBreak,
        );
        assert_eq!(ids(&got), ["y", "x"]);
    }
}
