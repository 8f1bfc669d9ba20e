use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};
use serde_json::json;

use super::{contains_term, mentioned_class, AgentReply, Attachment, AttachmentKind, ChatSession, PendingClarification, RouteTarget};
use crate::copilot::{Card, Copilot};
use crate::error::CopilotError;
use crate::generation::{propose, CandidateWorkflow, MissingNode};
use crate::kb::{render_doc, template_doc, ModelKind, NodeRegistry, NodeSpec};
use crate::paramsearch::{parse_axis, run_sweep, GridAxis, ParamGridSpec, RunOutcome, SweepOptions};
use crate::providers::{ChatMessage, ChatProvider};
use crate::retrieval::{tokenize, EntryKind};
use crate::workflow::InputValue;

pub(super) fn dispatch(
    target: RouteTarget,
    message: &str,
    session: &mut ChatSession,
    copilot: &Copilot,
) -> Result<AgentReply, CopilotError> {
    match target {
        RouteTarget::Direct => direct(message, session, copilot),
        RouteTarget::WorkflowGen => recommend_workflows(message, session, copilot),
        RouteTarget::NodeRec => {
            let cards = recommend_nodes(message, None, copilot)?;
            let mut reply = AgentReply::text(format!("Here are {} node(s) that fit your request.", cards.len()));
            for c in cards {
                reply = reply.with(Attachment::new(AttachmentKind::NodeCard, card_title(&c), c));
            }
            Ok(reply)
        }
        RouteTarget::ModelRec => match recommend_models(message, session, copilot)? {
            ModelRecommendation::Cards(cards) => {
                let mut reply = AgentReply::text(format!("Here are {} model(s) that fit your request.", cards.len()));
                if cards.is_empty() {
                    reply.text = "I found no models matching that request.".into();
                }
                for c in cards {
                    reply = reply.with(Attachment::new(AttachmentKind::ModelCard, card_title(&c), c));
                }
                Ok(reply)
            }
            ModelRecommendation::Clarify(p) => {
                let att = Attachment::clarification(&p.question, &p.field, &p.options);
                let reply = AgentReply::text(p.question.clone()).with(att);
                session.pending = Some(p);
                Ok(reply)
            }
        },
        RouteTarget::NodeQa => {
            let class = mentioned_class(message, copilot.registry())
                .ok_or_else(|| CopilotError::InvalidRequest("name the node class you are asking about".into()))?;
            node_qa(&class, message, copilot)
        }
        RouteTarget::PromptWrite => {
            let (subject, n) = parse_prompt_request(message);
            let prompts = write_prompts(&subject, n, copilot.providers().chat.as_ref());
            Ok(AgentReply::text(format!("Here are {} prompt variant(s) for \"{subject}\".", prompts.len())).with(
                Attachment::new(
                    AttachmentKind::PromptVariants,
                    format!("Prompts for {subject}"),
                    json!({ "subject": subject, "prompts": prompts }),
                ),
            ))
        }
        RouteTarget::ParamSearch => param_search(message, session, copilot),
    }
}

fn card_title(c: &Card) -> String {
    match c.kind {
        EntryKind::Node => format!("{} ({} stars)", c.title, c.stats.stars),
        _ => c.title.clone(),
    }
}

const DIRECT_SYSTEM: &str = "You are a copilot for a node-based image and video generation tool. \
Answer briefly and concretely.";

fn direct(message: &str, session: &ChatSession, copilot: &Copilot) -> Result<AgentReply, CopilotError> {
    let mut system = DIRECT_SYSTEM.to_string();
    if let Some(spec) = mentioned_class(message, copilot.registry()).and_then(|c| copilot.registry().get(&c)) {
        let doc = spec.doc.clone().unwrap_or_else(|| template_doc(spec));
        system.push_str(&format!("\n\nReference for `{}`:\n{}", spec.class_type, render_doc(&doc)));
    }
    let mut messages = vec![ChatMessage::system(system)];
    messages.extend(session.tail(10));
    let text = copilot.providers().chat.complete(&messages, None)?;
    Ok(AgentReply::text(text))
}

/// Workflow candidates for the request, with an install guide for any
/// missing nodes. The first candidate becomes the session's active workflow.
pub fn recommend_workflows(message: &str, session: &mut ChatSession, copilot: &Copilot) -> Result<AgentReply, CopilotError> {
    let intent = copilot.expand(message, None);
    let candidates = propose(&intent, copilot)?;
    if let Some(first) = candidates.first() {
        session.active_workflow = Some(first.graph.clone());
    }
    let mut reply = AgentReply::text(format!("I found {} workflow(s) for your request.", candidates.len()));
    let mut missing: Vec<MissingNode> = Vec::new();
    for c in &candidates {
        for m in &c.missing_nodes {
            if !missing.iter().any(|x| x.class_type == m.class_type) {
                missing.push(m.clone());
            }
        }
    }
    for c in candidates {
        reply = reply.with(Attachment::new(AttachmentKind::WorkflowCandidate, candidate_title(&c), &c));
    }
    if !missing.is_empty() {
        reply = reply.with(Attachment::new(
            AttachmentKind::InstallGuide,
            format!("Install {} missing node(s)", missing.len()),
            json!({ "missing": missing }),
        ));
    }
    Ok(reply)
}

fn candidate_title(c: &CandidateWorkflow) -> String {
    if c.report.pass {
        format!("{} ({} nodes, ready to run)", c.title, c.graph.len())
    } else if !c.missing_nodes.is_empty() {
        format!("{} ({} nodes, needs {} missing node(s))", c.title, c.graph.len(), c.missing_nodes.len())
    } else {
        format!("{} ({} nodes, has validation errors)", c.title, c.graph.len())
    }
}

pub fn recommend_nodes(query: &str, context: Option<&str>, copilot: &Copilot) -> Result<Vec<Card>, CopilotError> {
    let intent = copilot.expand(query, context);
    let ranked = copilot.recommend(EntryKind::Node, &intent)?;
    Ok(copilot.cards(&ranked))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "lowercase")]
pub enum ModelRecommendation {
    Cards(Vec<Card>),
    Clarify(PendingClarification),
}

const BASE_MODEL_QUESTION: &str = "Which diffusion model are you using? LoRAs only work with the base model they were trained for.";

fn requested_model_kind(text: &str) -> Option<ModelKind> {
    let words = tokenize(text);
    let has = |w: &str| words.contains(w) || words.contains(&format!("{w}s"));
    [
        ("lora", ModelKind::Lora),
        ("checkpoint", ModelKind::Checkpoint),
        ("controlnet", ModelKind::Controlnet),
        ("vae", ModelKind::Vae),
        ("embedding", ModelKind::Embedding),
    ]
    .into_iter()
    .find(|(w, _)| has(w))
    .map(|(_, k)| k)
}

/// The base model named in the most recent user message that names one,
/// picking the longest name when a message mentions several.
pub fn detect_base_model<'a>(session: &ChatSession, known: &'a BTreeSet<String>) -> Option<&'a String> {
    session.user_messages_rev().find_map(|m| {
        let squashed: String = m.chars().filter(|c| !c.is_whitespace()).collect();
        known
            .iter()
            .filter(|b| contains_term(m, b) || contains_term(&squashed, &b.replace(' ', "")))
            .max_by(|a, b| a.len().cmp(&b.len()).then_with(|| b.cmp(a)))
    })
}

/// Model cards for the request. A LoRA request with no base model anywhere
/// in the conversation yields a clarification instead; once a base model is
/// known only models built on it are ranked.
pub fn recommend_models(message: &str, session: &mut ChatSession, copilot: &Copilot) -> Result<ModelRecommendation, CopilotError> {
    let answered = session.pending.take();
    let request = answered.as_ref().map_or(message, |p| p.request.as_str()).to_string();
    let known: BTreeSet<String> = copilot.kb().models().filter_map(|m| m.base_model.clone()).collect();
    let kind = requested_model_kind(&request);
    let base = match detect_base_model(session, &known) {
        Some(b) => Some(b.clone()),
        // an answer naming an unknown base still filters, it just matches nothing
        None if answered.is_some() => Some(message.trim().to_string()),
        None => None,
    };
    if base.is_none() && kind == Some(ModelKind::Lora) {
        let options: Vec<String> = copilot
            .kb()
            .models()
            .filter(|m| m.kind == ModelKind::Lora)
            .filter_map(|m| m.base_model.clone())
            .collect::<BTreeSet<_>>()
            .into_iter()
            .collect();
        return Ok(ModelRecommendation::Clarify(PendingClarification {
            field: "base_model".into(),
            question: BASE_MODEL_QUESTION.into(),
            options,
            resume: RouteTarget::ModelRec,
            request,
        }));
    }
    let kb = copilot.kb();
    let admit = |doc: &crate::retrieval::Document| {
        let Ok(m) = kb.lookup_model(&doc.id) else {
            return false;
        };
        kind.is_none_or(|k| m.kind == k)
            && base
                .as_ref()
                .is_none_or(|b| m.base_model.as_ref().is_some_and(|mb| mb.eq_ignore_ascii_case(b)))
    };
    let intent = copilot.expand(&request, None);
    let ranked = copilot.recommend_with(EntryKind::Model, &intent, &copilot.config().retrieval, &admit)?;
    Ok(ModelRecommendation::Cards(copilot.cards(&ranked)))
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DownstreamSuggestion {
    pub class_type: String,
    pub stars: u64,
    pub output: String,
    pub input: String,
    pub type_tag: String,
}

fn tags(t: &str) -> impl Iterator<Item = &str> {
    t.split(',').map(str::trim).filter(|t| !t.is_empty() && *t != "*")
}

/// Classes with an input whose type tag equals one of `spec`'s output tags,
/// most starred first, at most `limit`.
pub fn downstream_suggestions(spec: &NodeSpec, registry: &NodeRegistry, limit: usize) -> Vec<DownstreamSuggestion> {
    let mut out: Vec<DownstreamSuggestion> = registry
        .specs()
        .into_iter()
        .filter(|s| s.class_type != spec.class_type)
        .filter_map(|s| {
            spec.outputs.iter().find_map(|o| {
                s.inputs.iter().find_map(|p| {
                    let shared = tags(&o.type_tag).find(|t| tags(&p.type_tag).any(|u| u == *t))?;
                    Some(DownstreamSuggestion {
                        class_type: s.class_type.clone(),
                        stars: s.stars,
                        output: o.name.clone(),
                        input: p.name.clone(),
                        type_tag: shared.to_string(),
                    })
                })
            })
        })
        .collect();
    out.sort_by(|a, b| b.stars.cmp(&a.stars).then_with(|| a.class_type.cmp(&b.class_type)));
    out.truncate(limit);
    out
}

const QA_SYSTEM: &str = "You answer questions about one node of a node-based image generation tool. \
Ground every statement in the specification and documentation below.";

/// Answers a question about one node from its spec and documentation, with
/// downstream node suggestions.
pub fn node_qa(class_type: &str, question: &str, copilot: &Copilot) -> Result<AgentReply, CopilotError> {
    let registry = copilot.registry();
    let spec = registry.get(class_type).ok_or_else(|| CopilotError::UnknownNode {
        class_type: class_type.to_string(),
        install_hint: registry.repo_hint(class_type),
    })?;
    let doc = spec.doc.clone().unwrap_or_else(|| template_doc(spec));
    let doc_md = render_doc(&doc);
    let downstream = downstream_suggestions(spec, registry, 5);
    let llm = copilot.providers().chat.as_ref();
    let template = || {
        let mut t = format!("**{}** (`{}`)\n\n{doc_md}", spec.display_name, spec.class_type);
        if !downstream.is_empty() {
            let names: Vec<&str> = downstream.iter().map(|d| d.class_type.as_str()).collect();
            t.push_str(&format!("\nCommonly connected next: {}.", names.join(", ")));
        }
        t
    };
    let text = if llm.is_offline() {
        template()
    } else {
        let spec_json = serde_json::to_string_pretty(spec).unwrap_or_default();
        let messages = [
            ChatMessage::system(format!("{QA_SYSTEM}\n\nSpecification:\n{spec_json}\n\nDocumentation:\n{doc_md}")),
            ChatMessage::user(question),
        ];
        match llm.complete(&messages, None) {
            Ok(t) if !t.trim().is_empty() => t,
            Ok(_) => template(),
            Err(e) => {
                tracing::warn!(error = %e, "node QA provider failed; answering from the stored doc");
                template()
            }
        }
    };
    let card = json!({
        "class_type": spec.class_type,
        "display_name": spec.display_name,
        "category": spec.category,
        "description": spec.retrieval_text(),
        "stars": spec.stars,
        "repo_url": spec.repo_url,
    });
    Ok(AgentReply::text(text)
        .with(Attachment::new(AttachmentKind::NodeCard, format!("{} ({} stars)", spec.display_name, spec.stars), card))
        .with(Attachment::new(
            AttachmentKind::DownstreamSuggestions,
            format!("Nodes that follow {}", spec.class_type),
            json!({ "class_type": spec.class_type, "suggestions": downstream }),
        )))
}

const FILLER: &[&str] = &[
    "write", "a", "an", "the", "prompt", "prompts", "me", "please", "refine", "improve", "detailed", "for", "about",
    "some", "create", "make", "generate", "better", "of", "variant", "variants", "give", "can", "you", "i", "want", "my",
    "need",
];

const NUMBER_WORDS: &[(&str, usize)] = &[
    ("one", 1),
    ("two", 2),
    ("three", 3),
    ("four", 4),
    ("five", 5),
    ("six", 6),
];

/// Splits a prompt-writing request into its subject and the number of
/// variants wanted (3 unless a count between 1 and 10 is given).
pub fn parse_prompt_request(message: &str) -> (String, usize) {
    let mut n = 3;
    let mut subject = Vec::new();
    for word in message.split_whitespace() {
        let bare = word.trim_matches(|c: char| !c.is_alphanumeric()).to_lowercase();
        if let Ok(k) = bare.parse::<usize>() {
            if (1..=10).contains(&k) {
                n = k;
                continue;
            }
        }
        if let Some((_, k)) = NUMBER_WORDS.iter().find(|(w, _)| *w == bare) {
            n = *k;
            continue;
        }
        if bare.is_empty() || FILLER.contains(&bare.as_str()) {
            continue;
        }
        subject.push(word.trim_matches(|c: char| c == ',' || c == '.' || c == ':' || c == '?' || c == '!'));
    }
    let subject = subject.join(" ");
    (if subject.is_empty() { message.trim().to_string() } else { subject }, n)
}

const STYLES: &[&str] = &[
    "digital painting",
    "cinematic photograph",
    "watercolor illustration",
    "studio portrait photo",
    "concept art",
];
const LIGHTING: &[&str] = &["soft golden hour light", "dramatic rim lighting", "overcast diffuse light", "neon glow"];
const QUALITY: &[&str] = &["highly detailed, sharp focus", "8k, intricate textures", "award-winning composition"];

fn template_prompt(subject: &str, k: usize) -> String {
    let style = STYLES[k % STYLES.len()];
    let light = LIGHTING[(k / STYLES.len() + k) % LIGHTING.len()];
    let quality = QUALITY[k % QUALITY.len()];
    format!("{subject}, {style}, {light}, {quality}")
}

fn prompt_key(p: &str) -> String {
    p.split_whitespace().collect::<Vec<_>>().join(" ").to_lowercase()
}

fn clean_line(line: &str) -> &str {
    let t = line.trim();
    let t = t.trim_start_matches(|c: char| c.is_ascii_digit() || c == '.' || c == ')' || c == '-' || c == '*');
    t.trim().trim_matches('"').trim()
}

/// `n` distinct detailed prompts: the provider's, de-duplicated, then padded
/// with template expansions of the subject.
pub fn write_prompts(short_prompt: &str, n: usize, llm: &dyn ChatProvider) -> Vec<String> {
    let n = n.max(1);
    let mut out: Vec<String> = Vec::new();
    let mut seen = BTreeSet::new();
    if !llm.is_offline() {
        let messages = [
            ChatMessage::system(
                "You write prompts for text-to-image models. Expand the user's idea into vivid, detailed prompts \
                 covering subject, style, lighting and quality. One prompt per line, no numbering.",
            ),
            ChatMessage::user(format!("Write {n} distinct prompts for: {short_prompt}")),
        ];
        match llm.complete(&messages, None) {
            Ok(text) => {
                for line in text.lines().map(clean_line).filter(|l| !l.is_empty()) {
                    if out.len() < n && seen.insert(prompt_key(line)) {
                        out.push(line.to_string());
                    }
                }
            }
            Err(e) => tracing::warn!(error = %e, "prompt provider failed; using templates"),
        }
    }
    let mut k = 0;
    while out.len() < n {
        let p = template_prompt(short_prompt.trim(), k);
        if seen.insert(prompt_key(&p)) {
            out.push(p);
        }
        k += 1;
    }
    out
}

fn param_search(message: &str, session: &mut ChatSession, copilot: &Copilot) -> Result<AgentReply, CopilotError> {
    let answered = session.pending.take();
    let request = answered.as_ref().map_or(message.to_string(), |p| format!("{} {message}", p.request));
    let Some(workflow) = session.active_workflow.clone() else {
        let q = "Which workflow should I sweep? Ask me for a workflow first, then name the parameters to vary.";
        return Ok(AgentReply::text(q).with(Attachment::clarification(q, "workflow", &[])));
    };
    let axes: Vec<GridAxis> = request
        .split_whitespace()
        .filter(|w| w.contains('=') && w.contains('.'))
        .filter_map(|w| parse_axis(w.trim_end_matches([',', ';'])).ok())
        .collect();
    if axes.is_empty() {
        let options: Vec<String> = workflow
            .nodes
            .iter()
            .flat_map(|(id, n)| {
                n.inputs
                    .iter()
                    .filter(|(_, v)| matches!(v, InputValue::Literal(_)))
                    .map(move |(name, _)| format!("{id}.{name}"))
            })
            .take(12)
            .collect();
        let q = "Which parameters should vary? Write them as NODE.INPUT=V1,V2, for example 3.cfg=6,7,8.";
        session.pending = Some(PendingClarification {
            field: "axes".into(),
            question: q.into(),
            options: options.clone(),
            resume: RouteTarget::ParamSearch,
            request: message.to_string(),
        });
        return Ok(AgentReply::text(q).with(Attachment::clarification(q, "axes", &options)));
    }
    let grid = ParamGridSpec::new(axes);
    let result = run_sweep(&workflow, &grid, copilot.providers().executor.as_ref(), &SweepOptions::default())?;
    let done = result.runs.iter().filter(|r| r.status == RunOutcome::Done).count();
    Ok(AgentReply::text(format!("Ran {} variant(s); {done} finished.", result.runs.len())).with(Attachment::new(
        AttachmentKind::ParamGridResult,
        format!("Parameter sweep: {} runs, {done} done", result.runs.len()),
        result,
    )))
}
