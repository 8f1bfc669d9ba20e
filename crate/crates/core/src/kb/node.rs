use std::collections::{BTreeMap, HashMap};

use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::workflow::Literal;

fn default_true() -> bool {
    true
}

/// A declared input parameter of a node class.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParamSpec {
    pub name: String,
    #[serde(rename = "type")]
    pub type_tag: String,
    #[serde(default = "default_true")]
    pub required: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub combo_options: Option<Vec<String>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub default: Option<Literal>,
    #[serde(flatten)]
    pub extra: BTreeMap<String, Value>,
}

impl ParamSpec {
    pub fn new(name: impl Into<String>, type_tag: impl Into<String>) -> Self {
        Self {
            name: name.into(),
            type_tag: type_tag.into(),
            required: true,
            combo_options: None,
            default: None,
            extra: BTreeMap::new(),
        }
    }

    pub fn optional(mut self) -> Self {
        self.required = false;
        self
    }

    pub fn with_options<I, S>(mut self, options: I) -> Self
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        self.combo_options = Some(options.into_iter().map(Into::into).collect());
        self
    }

    /// Widget parameters take literal values; everything else must be wired.
    pub fn accepts_literal(&self) -> bool {
        self.combo_options.is_some()
            || matches!(
                self.type_tag.as_str(),
                "INT" | "FLOAT" | "STRING" | "BOOLEAN" | "BOOL" | "NUMBER" | "COMBO" | "*"
            )
            || self.type_tag.starts_with("COMBO")
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OutSpec {
    pub name: String,
    #[serde(rename = "type")]
    pub type_tag: String,
}

impl OutSpec {
    pub fn new(name: impl Into<String>, type_tag: impl Into<String>) -> Self {
        Self {
            name: name.into(),
            type_tag: type_tag.into(),
        }
    }
}

/// Generated usage documentation for a node class.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct NodeDoc {
    pub description: String,
    #[serde(default)]
    pub input_docs: BTreeMap<String, String>,
    #[serde(default)]
    pub output_docs: BTreeMap<String, String>,
}

/// Registry entry for a node class.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NodeSpec {
    pub class_type: String,
    #[serde(default)]
    pub display_name: String,
    #[serde(default)]
    pub category: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub description: Option<String>,
    #[serde(default)]
    pub inputs: Vec<ParamSpec>,
    #[serde(default)]
    pub outputs: Vec<OutSpec>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub repo_url: Option<String>,
    #[serde(default)]
    pub stars: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub doc: Option<NodeDoc>,
    #[serde(flatten)]
    pub extra: BTreeMap<String, Value>,
}

impl NodeSpec {
    pub fn new(class_type: impl Into<String>) -> Self {
        let class_type = class_type.into();
        Self {
            display_name: class_type.clone(),
            class_type,
            category: String::new(),
            description: None,
            inputs: Vec::new(),
            outputs: Vec::new(),
            repo_url: None,
            stars: 0,
            doc: None,
            extra: BTreeMap::new(),
        }
    }

    pub fn param(&self, name: &str) -> Option<&ParamSpec> {
        self.inputs.iter().find(|p| p.name == name)
    }

    /// Text used to retrieve this node: its description, else its doc, else
    /// its display name.
    pub fn retrieval_text(&self) -> String {
        if let Some(d) = self.description.as_deref().filter(|d| !d.trim().is_empty()) {
            return d.to_string();
        }
        if let Some(doc) = self.doc.as_ref().filter(|d| !d.description.trim().is_empty()) {
            return doc.description.clone();
        }
        format!("{} {}", self.display_name, self.category).trim().to_string()
    }

    /// Names that violate the per-spec uniqueness invariants.
    pub fn duplicate_names(&self) -> Vec<String> {
        let mut seen = std::collections::BTreeSet::new();
        let mut dups = Vec::new();
        for p in &self.inputs {
            if !seen.insert(p.name.as_str()) {
                dups.push(p.name.clone());
            }
        }
        let mut seen = std::collections::BTreeSet::new();
        for o in &self.outputs {
            if !seen.insert(o.name.as_str()) {
                dups.push(o.name.clone());
            }
        }
        dups
    }

    /// Documented names that do not exist on this spec.
    pub fn undocumentable_names(&self, doc: &NodeDoc) -> Vec<String> {
        let mut bad: Vec<String> = doc
            .input_docs
            .keys()
            .filter(|n| self.param(n).is_none())
            .cloned()
            .collect();
        bad.extend(
            doc.output_docs
                .keys()
                .filter(|n| !self.outputs.iter().any(|o| &o.name == *n))
                .cloned(),
        );
        bad
    }
}

/// `true` when an output of type `out` may feed an input of type `input`.
/// `*` matches anything; comma-separated tags match if any alternative does.
pub fn types_compatible(out: &str, input: &str) -> bool {
    if out == "*" || input == "*" || out == input {
        return true;
    }
    out.split(',')
        .map(str::trim)
        .any(|o| o == "*" || input.split(',').map(str::trim).any(|i| i == "*" || i == o))
}

/// Node classes known to the engine, with O(1) lookup by class_type.
///
/// Besides full specs the registry remembers the repository of every class it
/// has ever seen, so a class that is referenced but not installed can still be
/// traced back to where it comes from.
#[derive(Debug, Clone, Default)]
pub struct NodeRegistry {
    specs: HashMap<String, NodeSpec>,
    known_repos: HashMap<String, String>,
}

impl NodeRegistry {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn from_specs(specs: impl IntoIterator<Item = NodeSpec>) -> Self {
        let mut reg = Self::new();
        for s in specs {
            reg.insert(s);
        }
        reg
    }

    pub fn insert(&mut self, spec: NodeSpec) -> Option<NodeSpec> {
        if let Some(url) = &spec.repo_url {
            self.known_repos.insert(spec.class_type.clone(), url.clone());
        }
        self.specs.insert(spec.class_type.clone(), spec)
    }

    /// Records where `class_type` can be installed from without installing it.
    pub fn remember_repo(&mut self, class_type: impl Into<String>, url: impl Into<String>) {
        self.known_repos.insert(class_type.into(), url.into());
    }

    pub fn get(&self, class_type: &str) -> Option<&NodeSpec> {
        self.specs.get(class_type)
    }

    pub fn get_mut(&mut self, class_type: &str) -> Option<&mut NodeSpec> {
        self.specs.get_mut(class_type)
    }

    pub fn contains(&self, class_type: &str) -> bool {
        self.specs.contains_key(class_type)
    }

    /// Removes the spec but keeps its repository so validation can still
    /// point at it.
    pub fn uninstall(&mut self, class_type: &str) -> Option<NodeSpec> {
        self.specs.remove(class_type)
    }

    /// Returns a copy of the registry without `class_type` installed.
    pub fn without(&self, class_type: &str) -> NodeRegistry {
        let mut reg = self.clone();
        reg.uninstall(class_type);
        reg
    }

    pub fn len(&self) -> usize {
        self.specs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.specs.is_empty()
    }

    /// Specs in ascending class_type order.
    pub fn specs(&self) -> Vec<&NodeSpec> {
        let mut v: Vec<&NodeSpec> = self.specs.values().collect();
        v.sort_by(|a, b| a.class_type.cmp(&b.class_type));
        v
    }

    /// Every class name the registry has a repository for, installed or not.
    pub fn known_classes(&self) -> impl Iterator<Item = &str> {
        self.known_repos.keys().map(String::as_str)
    }

    /// Repository URL for `class_type`: exact when known, otherwise from the
    /// closest known class name (case/punctuation-insensitive, edit distance
    /// at most 2).
    pub fn repo_hint(&self, class_type: &str) -> Option<String> {
        if let Some(url) = self.known_repos.get(class_type) {
            return Some(url.clone());
        }
        let target = normalize(class_type);
        if target.is_empty() {
            return None;
        }
        let max_dist = if target.len() >= 6 { 2 } else { 1 };
        self.known_repos
            .iter()
            .filter_map(|(name, url)| {
                let d = levenshtein(&normalize(name), &target);
                (d <= max_dist).then_some((d, name, url))
            })
            .min_by(|a, b| a.0.cmp(&b.0).then_with(|| a.1.cmp(b.1)))
            .map(|(_, _, url)| url.clone())
    }
}

fn normalize(s: &str) -> String {
    s.chars()
        .filter(|c| c.is_alphanumeric())
        .flat_map(char::to_lowercase)
        .collect()
}

fn levenshtein(a: &str, b: &str) -> usize {
    let a: Vec<char> = a.chars().collect();
    let b: Vec<char> = b.chars().collect();
    let mut prev: Vec<usize> = (0..=b.len()).collect();
    let mut cur = vec![0; b.len() + 1];
    for (i, ca) in a.iter().enumerate() {
        cur[0] = i + 1;
        for (j, cb) in b.iter().enumerate() {
            let sub = prev[j] + usize::from(ca != cb);
            cur[j + 1] = sub.min(prev[j + 1] + 1).min(cur[j] + 1);
        }
        std::mem::swap(&mut prev, &mut cur);
    }
    prev[b.len()]
}
