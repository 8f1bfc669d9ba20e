//! Node, model and workflow knowledge bases, plus node documentation
//! generated from repository source.

mod chunk;
mod docgen;
mod entries;
mod node;
mod store;

use std::path::Path;

pub use chunk::{chunk_code, chunk_query, retrieve_chunks, ChunkError, CodeChunk};
pub use docgen::{
    check_doc, generate_doc, parse_doc, render_doc, render_prompt, template_doc, DocGenError, DOCGEN_PROMPT_VERSION,
};
pub use entries::{ModelEntry, ModelKind, WorkflowEntry};
pub use node::{types_compatible, NodeDoc, NodeRegistry, NodeSpec, OutSpec, ParamSpec};
pub use store::{store_file_name, IngestSummary, KbError, KnowledgeBase, Reject};

const SOURCE_EXTENSIONS: &[&str] = &["py", "js", "ts", "rs", "cpp", "c", "h", "md", "txt", "json"];

/// Reads the text source files of a local repository checkout as
/// `(relative path, contents)` pairs in path order. Hidden directories and
/// non-UTF-8 files are skipped.
pub fn read_source_files(dir: &Path) -> Result<Vec<(String, String)>, KbError> {
    let mut out = Vec::new();
    let walker = walkdir::WalkDir::new(dir)
        .sort_by_file_name()
        .into_iter()
        .filter_entry(|e| e.depth() == 0 || !e.file_name().to_string_lossy().starts_with('.'));
    for entry in walker {
        let entry = entry.map_err(|e| KbError::Io {
            path: e.path().unwrap_or(dir).to_path_buf(),
            source: e.into(),
        })?;
        let ext_ok = entry
            .path()
            .extension()
            .and_then(|e| e.to_str())
            .is_some_and(|e| SOURCE_EXTENSIONS.contains(&e));
        if !entry.file_type().is_file() || !ext_ok {
            continue;
        }
        let Ok(text) = std::fs::read_to_string(entry.path()) else {
            continue;
        };
        let rel = entry.path().strip_prefix(dir).unwrap_or(entry.path());
        out.push((rel.to_string_lossy().replace('\\', "/"), text));
    }
    Ok(out)
}
