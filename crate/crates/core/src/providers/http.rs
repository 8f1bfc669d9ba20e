use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Arc;
use std::time::Duration;

use serde_json::{json, Value};

use super::{
    ChatMessage, ChatProvider, EmbeddingProvider, Endpoint, ProviderError, RerankProvider, RunHandle, RunState,
    RunStatus, WorkflowExecutor,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum HttpMethod {
    Get,
    Post,
}

#[derive(Debug, Clone)]
pub struct HttpRequest {
    pub method: HttpMethod,
    pub url: String,
    pub headers: Vec<(String, String)>,
    pub body: Option<String>,
    pub timeout: Duration,
}

#[derive(Debug, Clone)]
pub struct HttpResponse {
    pub status: u16,
    pub body: String,
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum TransportError {
    #[error("timed out: {0}")]
    Timeout(String),
    #[error("connection failed: {0}")]
    Connect(String),
    #[error("{0}")]
    Other(String),
}

/// The single seam through which every provider reaches the network.
pub trait HttpTransport: Send + Sync {
    fn send(&self, request: &HttpRequest) -> Result<HttpResponse, TransportError>;
}

/// Blocking transport backed by `ureq`.
#[derive(Debug, Default, Clone, Copy)]
pub struct UreqTransport;

impl HttpTransport for UreqTransport {
    fn send(&self, request: &HttpRequest) -> Result<HttpResponse, TransportError> {
        let agent: ureq::Agent = ureq::Agent::config_builder()
            .timeout_global(Some(request.timeout))
            .http_status_as_error(false)
            .build()
            .into();
        let result = match request.method {
            HttpMethod::Get => {
                let mut req = agent.get(&request.url);
                for (k, v) in &request.headers {
                    req = req.header(k.as_str(), v.as_str());
                }
                req.call()
            }
            HttpMethod::Post => {
                let mut req = agent.post(&request.url);
                for (k, v) in &request.headers {
                    req = req.header(k.as_str(), v.as_str());
                }
                req.send(request.body.clone().unwrap_or_default())
            }
        };
        let mut response = result.map_err(|e| match e {
            ureq::Error::Timeout(_) => TransportError::Timeout(e.to_string()),
            ureq::Error::Io(_) | ureq::Error::ConnectionFailed | ureq::Error::HostNotFound => {
                TransportError::Connect(e.to_string())
            }
            other => TransportError::Other(other.to_string()),
        })?;
        let status = response.status().as_u16();
        let body = response.body_mut().read_to_string().map_err(|e| match e {
            ureq::Error::Timeout(_) => TransportError::Timeout(e.to_string()),
            other => TransportError::Other(other.to_string()),
        })?;
        Ok(HttpResponse { status, body })
    }
}

/// Wraps a transport and counts every request that reaches it.
pub struct InstrumentedTransport {
    inner: Arc<dyn HttpTransport>,
    requests: AtomicUsize,
}

impl InstrumentedTransport {
    pub fn new(inner: Arc<dyn HttpTransport>) -> Self {
        Self {
            inner,
            requests: AtomicUsize::new(0),
        }
    }

    pub fn request_count(&self) -> usize {
        self.requests.load(Ordering::SeqCst)
    }
}

impl HttpTransport for InstrumentedTransport {
    fn send(&self, request: &HttpRequest) -> Result<HttpResponse, TransportError> {
        self.requests.fetch_add(1, Ordering::SeqCst);
        self.inner.send(request)
    }
}

/// Attempts and exponential backoff (`base_delay * 2^n`) for one request.
#[derive(Debug, Clone, PartialEq)]
pub struct RetryPolicy {
    pub attempts: u32,
    pub base_delay: Duration,
    pub timeout: Duration,
}

impl Default for RetryPolicy {
    fn default() -> Self {
        Self {
            attempts: 3,
            base_delay: Duration::from_millis(500),
            timeout: Duration::from_secs(30),
        }
    }
}

/// Sends `request`, retrying transport failures, 429 and 5xx. Returns the
/// first 2xx response.
pub(crate) fn send_with_retry(
    transport: &dyn HttpTransport,
    request: &HttpRequest,
    policy: &RetryPolicy,
    provider: &str,
) -> Result<(HttpResponse, u32), ProviderError> {
    let attempts = policy.attempts.max(1);
    let mut last = None;
    for attempt in 1..=attempts {
        if attempt > 1 {
            std::thread::sleep(policy.base_delay * 2u32.pow(attempt - 2));
        }
        match transport.send(request) {
            Ok(resp) if (200..300).contains(&resp.status) => return Ok((resp, attempt)),
            Ok(resp) if resp.status == 429 || resp.status >= 500 => {
                tracing::warn!(provider, attempt, status = resp.status, "retryable HTTP status");
                last = Some(ProviderError::Status {
                    provider: provider.to_string(),
                    status: resp.status,
                    attempts: attempt,
                    body: truncate(&resp.body),
                });
            }
            Ok(resp) => {
                return Err(ProviderError::Status {
                    provider: provider.to_string(),
                    status: resp.status,
                    attempts: attempt,
                    body: truncate(&resp.body),
                })
            }
            Err(e) => {
                tracing::warn!(provider, attempt, error = %e, "transport failure");
                last = Some(ProviderError::Unavailable {
                    provider: provider.to_string(),
                    attempts: attempt,
                    detail: e.to_string(),
                });
            }
        }
    }
    Err(last.expect("at least one attempt"))
}

fn truncate(body: &str) -> String {
    const MAX: usize = 512;
    if body.len() <= MAX {
        body.to_string()
    } else {
        let mut end = MAX;
        while !body.is_char_boundary(end) {
            end -= 1;
        }
        format!("{}…", &body[..end])
    }
}

fn json_request(url: &str, key: Option<&str>, body: &Value, timeout: Duration) -> HttpRequest {
    let mut headers = vec![("Content-Type".to_string(), "application/json".to_string())];
    if let Some(key) = key {
        headers.push(("Authorization".to_string(), format!("Bearer {key}")));
    }
    HttpRequest {
        method: HttpMethod::Post,
        url: url.to_string(),
        headers,
        body: Some(body.to_string()),
        timeout,
    }
}

fn parse_body(provider: &str, attempts: u32, body: &str) -> Result<Value, ProviderError> {
    serde_json::from_str(body).map_err(|e| ProviderError::InvalidResponse {
        provider: provider.to_string(),
        attempts,
        detail: format!("body is not JSON: {e}"),
    })
}

fn invalid(provider: &str, attempts: u32, detail: impl Into<String>) -> ProviderError {
    ProviderError::InvalidResponse {
        provider: provider.to_string(),
        attempts,
        detail: detail.into(),
    }
}

/// OpenAI-compatible chat completions client.
pub struct HttpChat {
    endpoint: Endpoint,
    transport: Arc<dyn HttpTransport>,
    policy: RetryPolicy,
}

impl HttpChat {
    pub fn new(endpoint: Endpoint, transport: Arc<dyn HttpTransport>, policy: RetryPolicy) -> Self {
        Self {
            endpoint,
            transport,
            policy,
        }
    }
}

impl ChatProvider for HttpChat {
    fn name(&self) -> &str {
        "http-chat"
    }

    fn complete(&self, messages: &[ChatMessage], response_schema: Option<&Value>) -> Result<String, ProviderError> {
        let mut body = json!({
            "model": self.endpoint.model.as_deref().unwrap_or("gpt-4o"),
            "messages": messages,
        });
        if let Some(schema) = response_schema {
            body["response_format"] = json!({
                "type": "json_schema",
                "json_schema": {"name": "response", "schema": schema},
            });
        }
        let req = json_request(&self.endpoint.url, self.endpoint.key.as_deref(), &body, self.policy.timeout);
        let (resp, attempts) = send_with_retry(self.transport.as_ref(), &req, &self.policy, self.name())?;
        let value = parse_body(self.name(), attempts, &resp.body)?;
        value["choices"][0]["message"]["content"]
            .as_str()
            .map(str::to_string)
            .ok_or_else(|| invalid(self.name(), attempts, "missing choices[0].message.content"))
    }
}

/// OpenAI-compatible embeddings client.
pub struct HttpEmbedder {
    endpoint: Endpoint,
    transport: Arc<dyn HttpTransport>,
    policy: RetryPolicy,
}

impl HttpEmbedder {
    pub fn new(endpoint: Endpoint, transport: Arc<dyn HttpTransport>, policy: RetryPolicy) -> Self {
        Self {
            endpoint,
            transport,
            policy,
        }
    }
}

impl EmbeddingProvider for HttpEmbedder {
    fn name(&self) -> &str {
        "http-embed"
    }

    fn embed(&self, texts: &[String]) -> Result<Vec<Vec<f64>>, ProviderError> {
        if texts.is_empty() {
            return Ok(Vec::new());
        }
        let body = json!({
            "model": self.endpoint.model.as_deref().unwrap_or("text-embedding-3-small"),
            "input": texts,
        });
        let req = json_request(&self.endpoint.url, self.endpoint.key.as_deref(), &body, self.policy.timeout);
        let (resp, attempts) = send_with_retry(self.transport.as_ref(), &req, &self.policy, self.name())?;
        let value = parse_body(self.name(), attempts, &resp.body)?;
        let data = value["data"]
            .as_array()
            .ok_or_else(|| invalid(self.name(), attempts, "missing data array"))?;
        if data.len() != texts.len() {
            return Err(invalid(
                self.name(),
                attempts,
                format!("{} embeddings for {} inputs", data.len(), texts.len()),
            ));
        }
        let mut out: Vec<Option<Vec<f64>>> = vec![None; texts.len()];
        for (pos, item) in data.iter().enumerate() {
            let idx = item["index"].as_u64().map(|i| i as usize).unwrap_or(pos);
            let vector: Option<Vec<f64>> = item["embedding"]
                .as_array()
                .and_then(|xs| xs.iter().map(Value::as_f64).collect());
            match (out.get_mut(idx), vector) {
                (Some(slot @ None), Some(v)) => *slot = Some(v),
                _ => return Err(invalid(self.name(), attempts, format!("bad embedding entry {pos}"))),
            }
        }
        let vectors: Vec<Vec<f64>> = out.into_iter().map(|v| v.expect("all slots filled")).collect();
        let dim = vectors[0].len();
        if vectors.iter().any(|v| v.len() != dim) {
            return Err(invalid(self.name(), attempts, "embeddings differ in dimension"));
        }
        Ok(vectors)
    }
}

/// Cross-encoder rerank client (`{query, documents}` → `results[{index, relevance_score}]`).
pub struct HttpReranker {
    endpoint: Endpoint,
    transport: Arc<dyn HttpTransport>,
    policy: RetryPolicy,
}

impl HttpReranker {
    pub fn new(endpoint: Endpoint, transport: Arc<dyn HttpTransport>, policy: RetryPolicy) -> Self {
        Self {
            endpoint,
            transport,
            policy,
        }
    }
}

impl RerankProvider for HttpReranker {
    fn name(&self) -> &str {
        "http-rerank"
    }

    fn score(&self, query: &str, docs: &[String]) -> Result<Vec<f64>, ProviderError> {
        if docs.is_empty() {
            return Ok(Vec::new());
        }
        let body = json!({
            "model": self.endpoint.model.as_deref().unwrap_or("gte-multilingual-reranker-base"),
            "query": query,
            "documents": docs,
        });
        let req = json_request(&self.endpoint.url, self.endpoint.key.as_deref(), &body, self.policy.timeout);
        let (resp, attempts) = send_with_retry(self.transport.as_ref(), &req, &self.policy, self.name())?;
        let value = parse_body(self.name(), attempts, &resp.body)?;
        let results = value["results"]
            .as_array()
            .ok_or_else(|| invalid(self.name(), attempts, "missing results array"))?;
        let mut scores = vec![None; docs.len()];
        for item in results {
            let idx = item["index"].as_u64().map(|i| i as usize);
            let score = item["relevance_score"].as_f64().or_else(|| item["score"].as_f64());
            match (idx.and_then(|i| scores.get_mut(i)), score) {
                (Some(slot), Some(s)) => *slot = Some(s),
                _ => return Err(invalid(self.name(), attempts, "bad rerank result entry")),
            }
        }
        scores
            .into_iter()
            .collect::<Option<Vec<f64>>>()
            .ok_or_else(|| invalid(self.name(), attempts, "rerank results do not cover every document"))
    }
}

/// Client for a ComfyUI server's `/prompt` and `/history/{id}` endpoints.
pub struct ComfyExecutor {
    base_url: String,
    transport: Arc<dyn HttpTransport>,
    policy: RetryPolicy,
}

impl ComfyExecutor {
    pub fn new(base_url: String, transport: Arc<dyn HttpTransport>, policy: RetryPolicy) -> Self {
        Self {
            base_url: base_url.trim_end_matches('/').to_string(),
            transport,
            policy,
        }
    }
}

impl WorkflowExecutor for ComfyExecutor {
    fn name(&self) -> &str {
        "comfy-executor"
    }

    fn submit(&self, workflow: &Value) -> Result<RunHandle, ProviderError> {
        let body = json!({"prompt": workflow, "client_id": "copilot"});
        let req = json_request(&format!("{}/prompt", self.base_url), None, &body, self.policy.timeout);
        let (resp, attempts) = send_with_retry(self.transport.as_ref(), &req, &self.policy, self.name())?;
        let value = parse_body(self.name(), attempts, &resp.body)?;
        value["prompt_id"]
            .as_str()
            .map(|id| RunHandle(id.to_string()))
            .ok_or_else(|| invalid(self.name(), attempts, "missing prompt_id"))
    }

    fn poll(&self, handle: &RunHandle) -> Result<RunStatus, ProviderError> {
        let req = HttpRequest {
            method: HttpMethod::Get,
            url: format!("{}/history/{}", self.base_url, handle.0),
            headers: Vec::new(),
            body: None,
            timeout: self.policy.timeout,
        };
        let (resp, attempts) = send_with_retry(self.transport.as_ref(), &req, &self.policy, self.name())?;
        let value = parse_body(self.name(), attempts, &resp.body)?;
        let Some(entry) = value.get(&handle.0) else {
            return Ok(RunStatus {
                state: RunState::Running,
                outputs: Vec::new(),
            });
        };
        let status = entry["status"]["status_str"].as_str().unwrap_or("");
        let completed = entry["status"]["completed"].as_bool().unwrap_or(false);
        let mut outputs = Vec::new();
        if let Some(nodes) = entry["outputs"].as_object() {
            for node in nodes.values() {
                for image in node["images"].as_array().into_iter().flatten() {
                    if let Some(name) = image["filename"].as_str() {
                        let sub = image["subfolder"].as_str().unwrap_or("");
                        let kind = image["type"].as_str().unwrap_or("output");
                        outputs.push(format!("{}/view?filename={name}&subfolder={sub}&type={kind}", self.base_url));
                    }
                }
            }
        }
        let state = match (status, completed) {
            ("error", _) => RunState::Failed,
            (_, true) | ("success", _) => RunState::Done,
            _ => RunState::Running,
        };
        Ok(RunStatus { state, outputs })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::sync::Mutex;

    struct Canned {
        responses: Mutex<Vec<Result<HttpResponse, TransportError>>>,
    }

    impl HttpTransport for Canned {
        fn send(&self, _request: &HttpRequest) -> Result<HttpResponse, TransportError> {
            self.responses.lock().unwrap().remove(0)
        }
    }

    fn fast() -> RetryPolicy {
        RetryPolicy {
            attempts: 3,
            base_delay: Duration::from_millis(1),
            timeout: Duration::from_millis(200),
        }
    }

    fn req() -> HttpRequest {
        json_request("http://x", None, &json!({}), Duration::from_secs(1))
    }

    #[test]
    fn client_errors_are_not_retried() {
        let t = Canned {
            responses: Mutex::new(vec![Ok(HttpResponse {
                status: 401,
                body: "nope".into(),
            })]),
        };
        let err = send_with_retry(&t, &req(), &fast(), "p").unwrap_err();
        assert_eq!(err.attempts(), 1);
        assert!(matches!(err, ProviderError::Status { status: 401, .. }));
    }

    #[test]
    fn persistent_server_errors_report_attempts() {
        let t = Canned {
            responses: Mutex::new(
                (0..3)
                    .map(|_| {
                        Ok(HttpResponse {
                            status: 503,
                            body: String::new(),
                        })
                    })
                    .collect(),
            ),
        };
        let err = send_with_retry(&t, &req(), &fast(), "p").unwrap_err();
        assert_eq!((err.provider(), err.attempts()), ("p", 3));
    }

    #[test]
    fn comfy_history_parsing() {
        let t = Canned {
            responses: Mutex::new(vec![Ok(HttpResponse {
                status: 200,
                body: json!({"abc": {"status": {"status_str": "success", "completed": true},
                    "outputs": {"9": {"images": [{"filename": "a.png", "subfolder": "", "type": "output"}]}}}})
                .to_string(),
            })]),
        };
        let exec = ComfyExecutor::new("http://comfy/".into(), Arc::new(t), fast());
        let status = exec.poll(&RunHandle("abc".into())).unwrap();
        assert_eq!(status.state, RunState::Done);
        assert_eq!(status.outputs, ["http://comfy/view?filename=a.png&subfolder=&type=output"]);
    }
}
