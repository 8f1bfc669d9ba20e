use serde::{Deserialize, Serialize};

use crate::providers::{EmbeddingProvider, ProviderError};
use crate::retrieval::{cosine_to_unit, lexical_sim, RetrievalConfig};

use super::NodeSpec;

/// A character range of one source file.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CodeChunk {
    pub source_path: String,
    pub start_offset: usize,
    pub end_offset: usize,
    pub text: String,
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("invalid chunking: chunk_size={size}, overlap={overlap} (need 0 <= overlap < chunk_size)")]
pub struct ChunkError {
    pub size: usize,
    pub overlap: usize,
}

/// Splits each file into windows of `size` characters advancing by
/// `size - overlap`; the last window of a file ends at its final character.
pub fn chunk_code(files: &[(String, String)], size: usize, overlap: usize) -> Result<Vec<CodeChunk>, ChunkError> {
    if size == 0 || overlap >= size {
        return Err(ChunkError { size, overlap });
    }
    let stride = size - overlap;
    let mut out = Vec::new();
    for (path, text) in files {
        let chars: Vec<char> = text.chars().collect();
        let mut start = 0;
        while start < chars.len() {
            let end = (start + size).min(chars.len());
            out.push(CodeChunk {
                source_path: path.clone(),
                start_offset: start,
                end_offset: end,
                text: chars[start..end].iter().collect(),
            });
            if end == chars.len() {
                break;
            }
            start += stride;
        }
    }
    Ok(out)
}

/// Lookup text for a node's code: its class name and parameter names.
pub fn chunk_query(spec: &NodeSpec) -> String {
    let mut q = spec.class_type.clone();
    for p in &spec.inputs {
        q.push(' ');
        q.push_str(&p.name);
    }
    q
}

/// The `top_m` chunks by combined score against [`chunk_query`]; equal
/// scores keep chunk order.
pub fn retrieve_chunks(
    spec: &NodeSpec,
    chunks: &[CodeChunk],
    top_m: usize,
    emb: &dyn EmbeddingProvider,
    cfg: &RetrievalConfig,
) -> Result<Vec<CodeChunk>, ProviderError> {
    if chunks.is_empty() || top_m == 0 {
        return Ok(Vec::new());
    }
    let query = chunk_query(spec);
    let mut texts = Vec::with_capacity(chunks.len() + 1);
    texts.push(query.clone());
    texts.extend(chunks.iter().map(|c| c.text.clone()));
    let vecs = emb.embed(&texts)?;
    let mut scored: Vec<(f64, usize)> = chunks
        .iter()
        .enumerate()
        .map(|(i, c)| {
            let s = cosine_to_unit(&vecs[0], &vecs[i + 1]);
            (cfg.combined_score(s, lexical_sim(&query, &c.text)), i)
        })
        .collect();
    scored.sort_by(|a, b| b.0.total_cmp(&a.0).then(a.1.cmp(&b.1)));
    Ok(scored.into_iter().take(top_m).map(|(_, i)| chunks[i].clone()).collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kb::ParamSpec;
    use crate::providers::NgramEmbedder;

    fn file(len: usize) -> Vec<(String, String)> {
        vec![("a.py".into(), "x".repeat(len))]
    }

    #[test]
    fn stride_offsets() {
        let c = chunk_code(&file(3000), 1200, 200).unwrap();
        let starts: Vec<usize> = c.iter().map(|c| c.start_offset).collect();
        assert_eq!(starts, [0, 1000, 2000]);
        assert_eq!(c[2].end_offset, 3000);
    }

    #[test]
    fn short_and_empty_files() {
        let c = chunk_code(&file(10), 1200, 200).unwrap();
        assert_eq!(c.len(), 1);
        assert_eq!((c[0].start_offset, c[0].end_offset), (0, 10));
        assert!(chunk_code(&file(0), 1200, 200).unwrap().is_empty());
    }

    #[test]
    fn invalid_sizes() {
        assert!(chunk_code(&file(5), 10, 10).is_err());
        assert!(chunk_code(&file(5), 0, 0).is_err());
    }

    #[test]
    fn offsets_count_characters() {
        let files = vec![("u.py".to_string(), "é".repeat(5))];
        let c = chunk_code(&files, 3, 1).unwrap();
        assert_eq!(c.iter().map(|c| (c.start_offset, c.end_offset)).collect::<Vec<_>>(), [(0, 3), (2, 5)]);
        assert_eq!(c[1].text, "ééé");
    }

    #[test]
    fn class_name_chunk_ranks_first() {
        let spec = NodeSpec {
            inputs: vec![ParamSpec::new("image", "IMAGE")],
            ..NodeSpec::new("ImageSharpen")
        };
        let chunks = vec![
            CodeChunk {
                source_path: "a".into(),
                start_offset: 0,
                end_offset: 10,
                text: "def unrelated(): return 42".into(),
            },
            CodeChunk {
                source_path: "b".into(),
                start_offset: 0,
                end_offset: 10,
                text: "class ImageSharpen:\n    def sharpen(self, image): ...".into(),
            },
        ];
        let got = retrieve_chunks(&spec, &chunks, 3, &NgramEmbedder, &RetrievalConfig::default()).unwrap();
        assert_eq!(got.len(), 2);
        assert_eq!(got[0].source_path, "b");
    }
}
