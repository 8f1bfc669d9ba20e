use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::retrieval::RetrievalConfig;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct GenerationConfig {
    /// Also ask the chat provider for a new workflow in `propose`.
    pub synthesize: bool,
    pub exemplar_workflows: usize,
    pub exemplar_nodes: usize,
}

impl Default for GenerationConfig {
    fn default() -> Self {
        Self {
            synthesize: false,
            exemplar_workflows: 2,
            exemplar_nodes: 10,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct SessionConfig {
    pub max_messages: usize,
    pub ttl_secs: u64,
}

impl Default for SessionConfig {
    fn default() -> Self {
        Self {
            max_messages: 40,
            ttl_secs: 3600,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct DocGenConfig {
    pub chunk_size: usize,
    pub overlap: usize,
    pub top_m: usize,
}

impl Default for DocGenConfig {
    fn default() -> Self {
        Self {
            chunk_size: 1200,
            overlap: 200,
            top_m: 3,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct CopilotConfig {
    pub retrieval: RetrievalConfig,
    pub generation: GenerationConfig,
    pub session: SessionConfig,
    pub docgen: DocGenConfig,
}

#[derive(Debug, thiserror::Error)]
pub enum ConfigFileError {
    #[error("cannot read config {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("invalid config: {0}")]
    Invalid(String),
}

impl CopilotConfig {
    pub fn from_toml_str(text: &str) -> Result<Self, ConfigFileError> {
        let cfg: Self = toml::from_str(text).map_err(|e| ConfigFileError::Invalid(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self, ConfigFileError> {
        let text = std::fs::read_to_string(path).map_err(|source| ConfigFileError::Io {
            path: path.display().to_string(),
            source,
        })?;
        Self::from_toml_str(&text)
    }

    pub fn validate(&self) -> Result<(), ConfigFileError> {
        self.retrieval
            .validate()
            .map_err(|e| ConfigFileError::Invalid(e.0))?;
        if self.session.max_messages < 2 {
            return Err(ConfigFileError::Invalid("session.max_messages must be at least 2".into()));
        }
        if self.docgen.chunk_size == 0 || self.docgen.overlap >= self.docgen.chunk_size {
            return Err(ConfigFileError::Invalid("docgen needs 0 <= overlap < chunk_size".into()));
        }
        if self.docgen.top_m == 0 {
            return Err(ConfigFileError::Invalid("docgen.top_m must be at least 1".into()));
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn partial_toml_keeps_defaults() {
        let cfg = CopilotConfig::from_toml_str("[retrieval]\nrecall_k = 10\n").unwrap();
        assert_eq!(cfg.retrieval.recall_k, 10);
        assert_eq!(cfg.retrieval.w_semantic, 0.7);
        assert_eq!(cfg.session.max_messages, 40);
        assert_eq!(cfg.docgen.chunk_size, 1200);
    }

    #[test]
    fn invalid_weights_are_rejected() {
        assert!(CopilotConfig::from_toml_str("[retrieval]\nw_semantic = 0.5\n").is_err());
        assert!(CopilotConfig::from_toml_str("[retrieval]\npopularity = \"tie-break\"\n").is_ok());
        assert!(CopilotConfig::from_toml_str("[docgen]\noverlap = 1200\n").is_err());
    }
}
