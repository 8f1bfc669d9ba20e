//! Node documentation generated from a spec and excerpts of its source.

use std::collections::BTreeMap;

use crate::providers::{ChatMessage, ChatProvider, ProviderError};

use super::{CodeChunk, NodeDoc, NodeSpec};

pub const DOCGEN_PROMPT_VERSION: &str = "v1";
const DOCGEN_PROMPT: &str = include_str!("../../assets/docgen_prompt_v1.txt");

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum DocGenError {
    #[error(transparent)]
    Provider(#[from] ProviderError),
    #[error("generated doc for `{class_type}` is still invalid after a retry: {}", problems.join("; "))]
    Invalid { class_type: String, problems: Vec<String> },
}

pub fn render_prompt(spec: &NodeSpec, chunks: &[CodeChunk]) -> String {
    let inputs = if spec.inputs.is_empty() {
        "(none)".to_string()
    } else {
        spec.inputs
            .iter()
            .map(|p| {
                let req = if p.required { "required" } else { "optional" };
                format!("- {}: {}, {req}", p.name, p.type_tag)
            })
            .collect::<Vec<_>>()
            .join("\n")
    };
    let outputs = if spec.outputs.is_empty() {
        "(none)".to_string()
    } else {
        spec.outputs
            .iter()
            .map(|o| format!("- {}: {}", o.name, o.type_tag))
            .collect::<Vec<_>>()
            .join("\n")
    };
    let code = if chunks.is_empty() {
        "(no source available)".to_string()
    } else {
        chunks
            .iter()
            .map(|c| format!("# {} [{}..{}]\n{}", c.source_path, c.start_offset, c.end_offset, c.text))
            .collect::<Vec<_>>()
            .join("\n\n")
    };
    DOCGEN_PROMPT
        .replace("{{class_type}}", &spec.class_type)
        .replace("{{display_name}}", &spec.display_name)
        .replace("{{category}}", &spec.category)
        .replace("{{inputs}}", &inputs)
        .replace("{{outputs}}", &outputs)
        .replace("{{code}}", &code)
}

#[derive(Clone, Copy, PartialEq)]
enum Section {
    Description,
    Inputs,
    Outputs,
    Other,
}

/// Reads the Markdown layout back into a [`NodeDoc`]. Headings are matched
/// loosely and bullets may be written as `` `name`: ``, `**name**:` or
/// `name:`; unparseable lines in a parameter section are ignored.
pub fn parse_doc(text: &str) -> NodeDoc {
    let mut section = Section::Description;
    let mut description = Vec::new();
    let mut inputs = BTreeMap::new();
    let mut outputs = BTreeMap::new();
    for line in text.lines() {
        let trimmed = line.trim();
        if trimmed.starts_with("```") {
            continue;
        }
        if let Some(heading) = trimmed.strip_prefix('#') {
            let h = heading.trim_start_matches('#').trim().to_lowercase();
            section = if h.starts_with("input") {
                Section::Inputs
            } else if h.starts_with("output") {
                Section::Outputs
            } else if h.contains("description") || h.contains("overview") {
                Section::Description
            } else {
                Section::Other
            };
            continue;
        }
        match section {
            Section::Description => description.push(trimmed),
            Section::Inputs | Section::Outputs => {
                if let Some((name, body)) = parse_bullet(trimmed) {
                    let target = if section == Section::Inputs {
                        &mut inputs
                    } else {
                        &mut outputs
                    };
                    target.insert(name, body);
                }
            }
            Section::Other => {}
        }
    }
    NodeDoc {
        description: description.join("\n").trim().to_string(),
        input_docs: inputs,
        output_docs: outputs,
    }
}

fn parse_bullet(line: &str) -> Option<(String, String)> {
    let rest = line.strip_prefix("- ").or_else(|| line.strip_prefix("* "))?.trim();
    let (name, body) = rest.split_once(':')?;
    let name = name.trim().trim_matches(|c| c == '`' || c == '*').trim();
    if name.is_empty() {
        return None;
    }
    Some((name.to_string(), body.trim().to_string()))
}

/// Structural problems with `doc` as documentation of `spec`; empty when it
/// is acceptable.
pub fn check_doc(spec: &NodeSpec, doc: &NodeDoc) -> Vec<String> {
    let mut problems = Vec::new();
    if doc.description.trim().is_empty() {
        problems.push("description is empty".to_string());
    }
    for p in spec.inputs.iter().filter(|p| p.required) {
        if doc.input_docs.get(&p.name).is_none_or(|t| t.trim().is_empty()) {
            problems.push(format!("input `{}` is not documented", p.name));
        }
    }
    for o in &spec.outputs {
        if doc.output_docs.get(&o.name).is_none_or(|t| t.trim().is_empty()) {
            problems.push(format!("output `{}` is not documented", o.name));
        }
    }
    for name in spec.undocumentable_names(doc) {
        problems.push(format!("`{name}` is not a parameter of {}", spec.class_type));
    }
    problems
}

/// Deterministic doc built from the spec alone.
pub fn template_doc(spec: &NodeSpec) -> NodeDoc {
    let mut description = spec
        .description
        .clone()
        .filter(|d| !d.trim().is_empty())
        .unwrap_or_else(|| {
            let mut d = format!("{} (`{}`)", spec.display_name, spec.class_type);
            if !spec.category.is_empty() {
                d.push_str(&format!(" from the {} category", spec.category));
            }
            d.push('.');
            d
        });
    description.push_str(&format!(
        " It takes {} input(s) and produces {} output(s).",
        spec.inputs.len(),
        spec.outputs.len()
    ));
    let input_docs = spec
        .inputs
        .iter()
        .map(|p| {
            let mut t = format!("{} input, {}", p.type_tag, if p.required { "required" } else { "optional" });
            if let Some(opts) = &p.combo_options {
                t.push_str(&format!("; one of {}", opts.join(", ")));
            }
            if let Some(d) = &p.default {
                t.push_str(&format!("; default {d}"));
            }
            t.push('.');
            (p.name.clone(), t)
        })
        .collect();
    let output_docs = spec
        .outputs
        .iter()
        .enumerate()
        .map(|(i, o)| (o.name.clone(), format!("{} output at slot {i}.", o.type_tag)))
        .collect();
    NodeDoc {
        description,
        input_docs,
        output_docs,
    }
}

/// Markdown in the same layout the generator asks for.
pub fn render_doc(doc: &NodeDoc) -> String {
    let mut s = doc.description.trim().to_string();
    s.push_str("\n\n## Input types\n");
    for (name, text) in &doc.input_docs {
        s.push_str(&format!("- `{name}`: {text}\n"));
    }
    s.push_str("\n## Output types\n");
    for (name, text) in &doc.output_docs {
        s.push_str(&format!("- `{name}`: {text}\n"));
    }
    s
}

/// Asks the provider for documentation and checks it; one retry with the
/// problems listed, then an error. Offline providers get the template doc.
pub fn generate_doc(spec: &NodeSpec, chunks: &[CodeChunk], llm: &dyn ChatProvider) -> Result<NodeDoc, DocGenError> {
    if llm.is_offline() {
        return Ok(template_doc(spec));
    }
    let mut messages = vec![ChatMessage::user(render_prompt(spec, chunks))];
    let mut problems = Vec::new();
    for attempt in 0..2 {
        let reply = llm.complete(&messages, None)?;
        let doc = parse_doc(&reply);
        problems = check_doc(spec, &doc);
        if problems.is_empty() {
            return Ok(doc);
        }
        tracing::debug!(class_type = %spec.class_type, attempt, ?problems, "generated doc rejected");
        messages.push(ChatMessage::assistant(reply));
        messages.push(ChatMessage::user(format!(
            "The documentation has these problems:\n- {}\nRewrite it in the required layout.",
            problems.join("\n- ")
        )));
    }
    Err(DocGenError::Invalid {
        class_type: spec.class_type.clone(),
        problems,
    })
}
