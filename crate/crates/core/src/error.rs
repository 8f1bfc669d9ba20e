use crate::generation::GenerationError;
use crate::kb::{DocGenError, KbError};
use crate::paramsearch::GridError;
use crate::providers::ProviderError;
use crate::retrieval::RetrievalError;
use crate::workflow::{CodeError, CycleError, JsonError};

#[derive(Debug, thiserror::Error)]
pub enum CopilotError {
    #[error(transparent)]
    Kb(#[from] KbError),
    #[error(transparent)]
    Retrieval(#[from] RetrievalError),
    #[error(transparent)]
    Provider(#[from] ProviderError),
    #[error(transparent)]
    Json(#[from] JsonError),
    #[error(transparent)]
    Code(#[from] CodeError),
    #[error(transparent)]
    Cycle(#[from] CycleError),
    #[error(transparent)]
    Grid(#[from] GridError),
    #[error(transparent)]
    DocGen(#[from] DocGenError),
    #[error(transparent)]
    Generation(#[from] GenerationError),
    #[error("unknown node class `{class_type}`")]
    UnknownNode {
        class_type: String,
        install_hint: Option<String>,
    },
    #[error("{0}")]
    InvalidRequest(String),
}

impl CopilotError {
    /// Short machine-readable category.
    pub fn kind(&self) -> &'static str {
        match self {
            CopilotError::Kb(KbError::NotFound { .. }) => "not-found",
            CopilotError::Kb(_) => "knowledge-base",
            CopilotError::Retrieval(RetrievalError::EmptyKb(_)) => "empty-kb",
            CopilotError::Retrieval(RetrievalError::Provider(_)) | CopilotError::Provider(_) => "provider",
            CopilotError::Json(_) => "invalid-json",
            CopilotError::Code(_) => "invalid-code",
            CopilotError::Cycle(_) => "cycle",
            CopilotError::Grid(_) => "invalid-grid",
            CopilotError::DocGen(_) => "docgen",
            CopilotError::Generation(GenerationError::Retrieval(RetrievalError::EmptyKb(_))) => "empty-kb",
            CopilotError::Generation(_) => "generation",
            CopilotError::UnknownNode { .. } => "unknown-node",
            CopilotError::InvalidRequest(_) => "invalid-request",
        }
    }
}
