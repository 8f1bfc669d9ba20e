use std::collections::BTreeMap;
use std::fs;
use std::io::Read;
use std::path::{Path, PathBuf};

use serde::de::DeserializeOwned;
use serde::Serialize;
use serde_json::Value;

use super::{check_doc, ModelEntry, NodeDoc, NodeRegistry, NodeSpec, WorkflowEntry};
use crate::providers::fnv1a64;

const NODES: &str = "nodes";
const MODELS: &str = "models";
const WORKFLOWS: &str = "workflows";
const MANIFEST: &str = "manifest.json";

#[derive(Debug, thiserror::Error)]
pub enum KbError {
    #[error("cannot read {}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{} is neither a directory nor a .tar archive", .0.display())]
    UnsupportedPath(PathBuf),
    #[error("malformed manifest {}: {detail}", path.display())]
    Manifest { path: PathBuf, detail: String },
    #[error("{kind} `{key}` not found")]
    NotFound { kind: &'static str, key: String },
    #[error("invalid doc for `{class_type}`: {}", problems.join("; "))]
    InvalidDoc { class_type: String, problems: Vec<String> },
}

impl KbError {
    fn io(path: &Path, source: std::io::Error) -> Self {
        KbError::Io {
            path: path.to_path_buf(),
            source,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Reject {
    pub path: String,
    pub reason: String,
}

/// Outcome of one ingestion. `nodes`, `models` and `workflows` count valid
/// entries read; `inserted`, `updated` and `unchanged` partition them by
/// their effect on the store.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize)]
pub struct IngestSummary {
    pub nodes: usize,
    pub models: usize,
    pub workflows: usize,
    pub inserted: usize,
    pub updated: usize,
    pub unchanged: usize,
    pub rejects: Vec<Reject>,
}

impl IngestSummary {
    pub fn changes(&self) -> usize {
        self.inserted + self.updated
    }
}

enum Upsert {
    Inserted,
    Updated,
    Unchanged,
}

/// The node, model and workflow knowledge bases. Backed by a directory of
/// canonical JSON files when opened from disk, purely in memory otherwise.
#[derive(Debug, Clone, Default)]
pub struct KnowledgeBase {
    root: Option<PathBuf>,
    registry: NodeRegistry,
    models: BTreeMap<String, ModelEntry>,
    workflows: BTreeMap<String, WorkflowEntry>,
    /// Install locations for classes referenced but not in the registry.
    repos: BTreeMap<String, String>,
}

impl KnowledgeBase {
    pub fn in_memory() -> Self {
        Self::default()
    }

    /// Creates the store layout under `dir` if needed and opens it.
    pub fn init(dir: impl AsRef<Path>) -> Result<Self, KbError> {
        let dir = dir.as_ref();
        for sub in [NODES, MODELS, WORKFLOWS] {
            let p = dir.join(sub);
            fs::create_dir_all(&p).map_err(|e| KbError::io(&p, e))?;
        }
        Self::open(dir)
    }

    /// Loads an existing store directory.
    pub fn open(dir: impl AsRef<Path>) -> Result<Self, KbError> {
        let dir = dir.as_ref();
        if !dir.is_dir() {
            return Err(KbError::io(
                dir,
                std::io::Error::new(std::io::ErrorKind::NotFound, "no such directory"),
            ));
        }
        let mut kb = Self::in_memory();
        let files = read_tree(dir)?;
        let summary = kb.apply(files)?;
        for r in &summary.rejects {
            tracing::warn!(path = %r.path, reason = %r.reason, "skipping invalid store entry");
        }
        kb.root = Some(dir.to_path_buf());
        Ok(kb)
    }

    pub fn root(&self) -> Option<&Path> {
        self.root.as_deref()
    }

    /// Upserts every valid entry under `path` (a directory or a `.tar`
    /// archive) and persists changes when the store is disk-backed.
    pub fn ingest(&mut self, path: impl AsRef<Path>) -> Result<IngestSummary, KbError> {
        let path = path.as_ref();
        let files = if path.is_dir() {
            read_tree(path)?
        } else if path.is_file() && path.extension().is_some_and(|e| e == "tar") {
            read_tar(path)?
        } else if !path.exists() {
            return Err(KbError::io(
                path,
                std::io::Error::new(std::io::ErrorKind::NotFound, "no such file or directory"),
            ));
        } else {
            return Err(KbError::UnsupportedPath(path.to_path_buf()));
        };
        self.apply(files)
    }

    fn apply(&mut self, files: Vec<SourceFile>) -> Result<IngestSummary, KbError> {
        let mut summary = IngestSummary::default();
        if let Some(m) = files.iter().find(|f| f.category.is_none() && f.name == MANIFEST) {
            match serde_json::from_str::<Value>(&m.text) {
                Ok(Value::Object(obj)) => {
                    // Optional `repos` map: class_type -> repository URL for
                    // custom nodes that workflows reference but the KB lacks.
                    if let Some(Value::Object(repos)) = obj.get("repos") {
                        let mut changed = false;
                        for (class, url) in repos {
                            if let Some(url) = url.as_str() {
                                self.registry.remember_repo(class.clone(), url);
                                changed |= self.repos.insert(class.clone(), url.to_string()).as_deref() != Some(url);
                            }
                        }
                        if changed {
                            self.persist_manifest()?;
                        }
                    }
                }
                Ok(_) => {
                    return Err(KbError::Manifest {
                        path: m.path.clone().into(),
                        detail: "expected a JSON object".into(),
                    })
                }
                Err(e) => {
                    return Err(KbError::Manifest {
                        path: m.path.clone().into(),
                        detail: e.to_string(),
                    })
                }
            }
        }
        for f in &files {
            let Some(category) = f.category.as_deref() else {
                continue;
            };
            let items = match serde_json::from_str::<Value>(&f.text) {
                Ok(Value::Array(items)) => items,
                Ok(v @ Value::Object(_)) => vec![v],
                Ok(_) => {
                    summary.reject(&f.path, "expected a JSON object or array of objects");
                    continue;
                }
                Err(e) => {
                    summary.reject(&f.path, format!("malformed JSON: {e}"));
                    continue;
                }
            };
            for item in items {
                let outcome = match category {
                    NODES => self.apply_node(item).inspect(|_| summary.nodes += 1),
                    MODELS => self.apply_model(item).inspect(|_| summary.models += 1),
                    _ => self.apply_workflow(item).inspect(|_| summary.workflows += 1),
                };
                match outcome {
                    Ok(Upsert::Inserted) => summary.inserted += 1,
                    Ok(Upsert::Updated) => summary.updated += 1,
                    Ok(Upsert::Unchanged) => summary.unchanged += 1,
                    Err(reason) => summary.reject(&f.path, reason),
                }
            }
        }
        Ok(summary)
    }

    fn apply_node(&mut self, item: Value) -> Result<Upsert, String> {
        if !item.get("class_type").is_some_and(|c| c.as_str().is_some_and(|s| !s.is_empty())) {
            return Err("missing class_type".into());
        }
        let spec: NodeSpec = decode(item)?;
        let dups = spec.duplicate_names();
        if !dups.is_empty() {
            return Err(format!("duplicate parameter names: {}", dups.join(", ")));
        }
        if let Some(doc) = &spec.doc {
            let bad = spec.undocumentable_names(doc);
            if !bad.is_empty() {
                return Err(format!("doc mentions unknown names: {}", bad.join(", ")));
            }
        }
        let outcome = match self.registry.get(&spec.class_type) {
            None => Upsert::Inserted,
            Some(old) if *old == spec => return Ok(Upsert::Unchanged),
            Some(_) => Upsert::Updated,
        };
        self.persist(NODES, &spec.class_type, &spec).map_err(|e| e.to_string())?;
        self.registry.insert(spec);
        Ok(outcome)
    }

    fn apply_model(&mut self, item: Value) -> Result<Upsert, String> {
        require_id(&item)?;
        let entry: ModelEntry = decode(item)?;
        let outcome = upsert_outcome(self.models.get(&entry.id), &entry);
        if !matches!(outcome, Upsert::Unchanged) {
            self.persist(MODELS, &entry.id, &entry).map_err(|e| e.to_string())?;
            self.models.insert(entry.id.clone(), entry);
        }
        Ok(outcome)
    }

    fn apply_workflow(&mut self, item: Value) -> Result<Upsert, String> {
        require_id(&item)?;
        let entry: WorkflowEntry = decode(item)?;
        let outcome = upsert_outcome(self.workflows.get(&entry.id), &entry);
        if !matches!(outcome, Upsert::Unchanged) {
            self.persist(WORKFLOWS, &entry.id, &entry).map_err(|e| e.to_string())?;
            self.workflows.insert(entry.id.clone(), entry);
        }
        Ok(outcome)
    }

    fn persist<T: Serialize>(&self, category: &str, key: &str, value: &T) -> Result<(), KbError> {
        let Some(root) = &self.root else {
            return Ok(());
        };
        let dir = root.join(category);
        fs::create_dir_all(&dir).map_err(|e| KbError::io(&dir, e))?;
        let path = dir.join(store_file_name(key));
        let text = serde_json::to_string_pretty(value).expect("entries are serializable");
        fs::write(&path, text + "\n").map_err(|e| KbError::io(&path, e))
    }

    fn persist_manifest(&self) -> Result<(), KbError> {
        let Some(root) = &self.root else {
            return Ok(());
        };
        let path = root.join(MANIFEST);
        let text = serde_json::to_string_pretty(&serde_json::json!({ "repos": self.repos })).expect("map is serializable");
        fs::write(&path, text + "\n").map_err(|e| KbError::io(&path, e))
    }

    pub fn registry(&self) -> &NodeRegistry {
        &self.registry
    }

    pub fn models(&self) -> impl Iterator<Item = &ModelEntry> {
        self.models.values()
    }

    pub fn workflows(&self) -> impl Iterator<Item = &WorkflowEntry> {
        self.workflows.values()
    }

    pub fn node_count(&self) -> usize {
        self.registry.len()
    }

    pub fn model_count(&self) -> usize {
        self.models.len()
    }

    pub fn workflow_count(&self) -> usize {
        self.workflows.len()
    }

    pub fn lookup_node(&self, class_type: &str) -> Result<&NodeSpec, KbError> {
        self.registry.get(class_type).ok_or_else(|| KbError::NotFound {
            kind: "node",
            key: class_type.to_string(),
        })
    }

    pub fn lookup_model(&self, id: &str) -> Result<&ModelEntry, KbError> {
        self.models.get(id).ok_or_else(|| KbError::NotFound {
            kind: "model",
            key: id.to_string(),
        })
    }

    pub fn lookup_workflow(&self, id: &str) -> Result<&WorkflowEntry, KbError> {
        self.workflows.get(id).ok_or_else(|| KbError::NotFound {
            kind: "workflow",
            key: id.to_string(),
        })
    }

    /// Attaches generated documentation to a node after checking it.
    pub fn set_doc(&mut self, class_type: &str, doc: NodeDoc) -> Result<(), KbError> {
        let spec = self.lookup_node(class_type)?;
        let problems = check_doc(spec, &doc);
        if !problems.is_empty() {
            return Err(KbError::InvalidDoc {
                class_type: class_type.to_string(),
                problems,
            });
        }
        let mut spec = spec.clone();
        spec.doc = Some(doc);
        self.persist(NODES, class_type, &spec)?;
        self.registry.insert(spec);
        Ok(())
    }

    /// Inserts entries directly, bypassing files.
    pub fn insert_node(&mut self, spec: NodeSpec) {
        self.registry.insert(spec);
    }

    pub fn insert_model(&mut self, entry: ModelEntry) {
        self.models.insert(entry.id.clone(), entry);
    }

    pub fn insert_workflow(&mut self, entry: WorkflowEntry) {
        self.workflows.insert(entry.id.clone(), entry);
    }

    /// Mutable registry access, e.g. to simulate an uninstalled node.
    pub fn registry_mut(&mut self) -> &mut NodeRegistry {
        &mut self.registry
    }
}

impl IngestSummary {
    fn reject(&mut self, path: &str, reason: impl Into<String>) {
        self.rejects.push(Reject {
            path: path.to_string(),
            reason: reason.into(),
        });
    }
}

fn upsert_outcome<T: PartialEq>(old: Option<&T>, new: &T) -> Upsert {
    match old {
        None => Upsert::Inserted,
        Some(o) if o == new => Upsert::Unchanged,
        Some(_) => Upsert::Updated,
    }
}

fn require_id(item: &Value) -> Result<(), String> {
    if item.get("id").is_some_and(|c| c.as_str().is_some_and(|s| !s.is_empty())) {
        Ok(())
    } else {
        Err("missing id".into())
    }
}

fn decode<T: DeserializeOwned>(item: Value) -> Result<T, String> {
    serde_json::from_value(item).map_err(|e| e.to_string())
}

/// `<sanitized key>-<hash>.json`; the hash keeps keys that sanitize alike
/// apart.
pub fn store_file_name(key: &str) -> String {
    let safe: String = key
        .chars()
        .map(|c| if c.is_ascii_alphanumeric() || c == '-' || c == '_' { c } else { '_' })
        .take(64)
        .collect();
    format!("{safe}-{:08x}.json", fnv1a64(key.as_bytes()) as u32)
}

struct SourceFile {
    /// Path shown in rejects, relative to the ingestion root.
    path: String,
    /// `nodes`, `models` or `workflows` when the file sits in such a directory.
    category: Option<String>,
    name: String,
    text: String,
}

fn classify(rel: &Path, text: String) -> Option<SourceFile> {
    let name = rel.file_name()?.to_str()?.to_string();
    let parent = rel.parent().and_then(|p| p.file_name()).and_then(|p| p.to_str());
    let category = parent.filter(|p| [NODES, MODELS, WORKFLOWS].contains(p)).map(str::to_string);
    let is_manifest = category.is_none() && name == MANIFEST && rel.components().count() <= 2;
    if !name.ends_with(".json") || (category.is_none() && !is_manifest) {
        return None;
    }
    Some(SourceFile {
        path: rel.to_string_lossy().replace('\\', "/"),
        category,
        name,
        text,
    })
}

fn read_tree(dir: &Path) -> Result<Vec<SourceFile>, KbError> {
    let mut out = Vec::new();
    for entry in walkdir::WalkDir::new(dir).sort_by_file_name() {
        let entry = entry.map_err(|e| {
            let path = e.path().unwrap_or(dir).to_path_buf();
            KbError::io(&path, e.into())
        })?;
        if !entry.file_type().is_file() {
            continue;
        }
        let rel = entry.path().strip_prefix(dir).unwrap_or(entry.path());
        if rel.components().count() > 2 {
            continue;
        }
        let text = fs::read_to_string(entry.path()).map_err(|e| KbError::io(entry.path(), e))?;
        out.extend(classify(rel, text));
    }
    Ok(out)
}

fn read_tar(path: &Path) -> Result<Vec<SourceFile>, KbError> {
    let file = fs::File::open(path).map_err(|e| KbError::io(path, e))?;
    let mut archive = tar::Archive::new(file);
    let mut out = Vec::new();
    for entry in archive.entries().map_err(|e| KbError::io(path, e))? {
        let mut entry = entry.map_err(|e| KbError::io(path, e))?;
        if !entry.header().entry_type().is_file() {
            continue;
        }
        let rel = entry.path().map_err(|e| KbError::io(path, e))?.into_owned();
        // archives often wrap everything in one top-level directory
        let rel = if rel.components().count() == 3 {
            rel.components().skip(1).collect::<PathBuf>()
        } else {
            rel
        };
        let mut text = String::new();
        entry.read_to_string(&mut text).map_err(|e| KbError::io(&rel, e))?;
        out.extend(classify(&rel, text));
    }
    out.sort_by(|a, b| a.path.cmp(&b.path));
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn write(dir: &Path, rel: &str, text: &str) {
        let p = dir.join(rel);
        fs::create_dir_all(p.parent().unwrap()).unwrap();
        fs::write(p, text).unwrap();
    }

    fn sample(dir: &Path) {
        write(
            dir,
            "nodes/a.json",
            r#"[{"class_type":"A","outputs":[{"name":"X","type":"X"}]},{"class_type":"B","repo_url":"https://example.com/b"}]"#,
        );
        write(dir, "models/m.json", r#"{"id":"m1","name":"M","kind":"lora","base_model":"SDXL"}"#);
        write(
            dir,
            "workflows/w.json",
            r#"{"id":"w1","title":"W","description":"d","graph":{"1":{"class_type":"A","inputs":{}}}}"#,
        );
    }

    #[test]
    fn ingest_counts_and_idempotence() {
        let src = tempfile::tempdir().unwrap();
        sample(src.path());
        let store = tempfile::tempdir().unwrap();
        let mut kb = KnowledgeBase::init(store.path()).unwrap();
        let first = kb.ingest(src.path()).unwrap();
        assert_eq!((first.nodes, first.models, first.workflows, first.rejects.len()), (2, 1, 1, 0));
        assert_eq!(first.inserted, 4);
        let second = kb.ingest(src.path()).unwrap();
        assert_eq!(second.changes(), 0);
        assert_eq!(second.unchanged, 4);

        let reopened = KnowledgeBase::open(store.path()).unwrap();
        assert_eq!(reopened.lookup_node("A").unwrap(), kb.lookup_node("A").unwrap());
        assert_eq!(reopened.lookup_workflow("w1").unwrap(), kb.lookup_workflow("w1").unwrap());
        assert_eq!(reopened.model_count(), 1);
    }

    #[test]
    fn missing_class_type_is_rejected() {
        let src = tempfile::tempdir().unwrap();
        write(src.path(), "nodes/bad.json", r#"{"display_name":"no class"}"#);
        let mut kb = KnowledgeBase::in_memory();
        let s = kb.ingest(src.path()).unwrap();
        assert_eq!(s.rejects, [Reject {
            path: "nodes/bad.json".into(),
            reason: "missing class_type".into()
        }]);
    }

    #[test]
    fn upsert_replaces_changed_entries() {
        let src = tempfile::tempdir().unwrap();
        sample(src.path());
        let mut kb = KnowledgeBase::in_memory();
        kb.ingest(src.path()).unwrap();
        write(src.path(), "models/m.json", r#"{"id":"m1","name":"M","kind":"lora","description":"new"}"#);
        let s = kb.ingest(src.path()).unwrap();
        assert_eq!(s.updated, 1);
        assert_eq!(kb.lookup_model("m1").unwrap().description, "new");
    }

    #[test]
    fn malformed_manifest_and_missing_path_fail() {
        let src = tempfile::tempdir().unwrap();
        sample(src.path());
        write(src.path(), "manifest.json", "{not json");
        let mut kb = KnowledgeBase::in_memory();
        assert!(matches!(kb.ingest(src.path()), Err(KbError::Manifest { .. })));
        assert!(matches!(kb.ingest(src.path().join("nope")), Err(KbError::Io { .. })));
        assert!(KnowledgeBase::open(src.path().join("nope")).is_err());
    }

    #[test]
    fn tar_archives_are_ingested() {
        let src = tempfile::tempdir().unwrap();
        sample(src.path());
        let out = tempfile::tempdir().unwrap();
        let tar_path = out.path().join("kb.tar");
        let mut b = tar::Builder::new(fs::File::create(&tar_path).unwrap());
        b.append_dir_all("kb", src.path()).unwrap();
        b.into_inner().unwrap();
        let mut kb = KnowledgeBase::in_memory();
        let s = kb.ingest(&tar_path).unwrap();
        assert_eq!((s.nodes, s.models, s.workflows), (2, 1, 1));
    }

    #[test]
    fn lookups_and_docs() {
        let src = tempfile::tempdir().unwrap();
        sample(src.path());
        let mut kb = KnowledgeBase::in_memory();
        kb.ingest(src.path()).unwrap();
        assert!(matches!(kb.lookup_node("Zzz"), Err(KbError::NotFound { kind: "node", .. })));
        let bad = NodeDoc {
            description: "x".into(),
            ..NodeDoc::default()
        };
        assert!(kb.set_doc("A", bad).is_err());
        let doc = super::super::template_doc(kb.lookup_node("A").unwrap());
        kb.set_doc("A", doc.clone()).unwrap();
        assert_eq!(kb.lookup_node("A").unwrap().doc.as_ref(), Some(&doc));
    }

    #[test]
    fn file_names_are_safe_and_distinct() {
        assert!(store_file_name("Image Resize (JWS)").starts_with("Image_Resize__JWS_-"));
        assert_ne!(store_file_name("a b"), store_file_name("a_b"));
    }
}
