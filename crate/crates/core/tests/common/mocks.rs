//! Scripted providers for the integration suites.

use std::collections::HashMap;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::{Arc, Mutex};

use copilot_core::generation::GenCase;
use copilot_core::kb::KnowledgeBase;
use copilot_core::providers::mock::FnChat;
use copilot_core::providers::{
    fnv1a64, ChatMessage, ProviderError, RunHandle, RunState, RunStatus, WorkflowExecutor,
};
use copilot_core::workflow::{to_code, Literal, WorkflowGraph};
use serde_json::Value;

/// Twenty generation cases built from the passing fixture workflows and
/// literal variations of them.
pub fn gen_cases(kb: &KnowledgeBase) -> Vec<GenCase> {
    let bases: Vec<(String, WorkflowGraph)> = kb
        .workflows()
        .filter(|w| w.id != "face-detail-restore")
        .map(|w| (w.description.clone(), w.graph.clone()))
        .collect();
    (0..20)
        .map(|i| {
            let (desc, graph) = &bases[i % bases.len()];
            let mut graph = graph.clone();
            if let Some(ks) = graph.node_mut("3") {
                ks.inputs.insert("seed".into(), Literal::Int(i as i64).into());
            }
            GenCase {
                intent: format!("case {i}: {desc}"),
                reference: graph,
            }
        })
        .collect()
}

/// A chat provider that answers each synthesis prompt with the reference
/// code of the case whose intent the prompt mentions.
pub fn echo_chat(cases: &[GenCase], kb: &KnowledgeBase) -> FnChat {
    let answers: Vec<(String, String)> = cases
        .iter()
        .map(|c| (c.intent.clone(), to_code(&c.reference, Some(kb.registry())).unwrap()))
        .collect();
    FnChat::new(move |messages: &[ChatMessage]| {
        let prompt = &messages.last().unwrap().content;
        Ok(answers
            .iter()
            .find(|(intent, _)| prompt.contains(intent.as_str()))
            .map(|(_, code)| code.clone())
            .unwrap_or_default())
    })
}

/// Finishes runs after a pseudo-random number of polls, so completion order
/// differs from submission order. Each run's single output names the
/// submitted values of `probe` inputs, letting tests tie results to combos.
pub struct ShuffledExecutor {
    pub probe: Vec<(String, String)>,
    polls_left: Mutex<HashMap<String, usize>>,
    pub completion_order: Mutex<Vec<String>>,
    submitted: AtomicUsize,
}

impl ShuffledExecutor {
    pub fn new(probe: &[(&str, &str)]) -> Arc<Self> {
        Arc::new(Self {
            probe: probe.iter().map(|(n, i)| (n.to_string(), i.to_string())).collect(),
            polls_left: Mutex::new(HashMap::new()),
            completion_order: Mutex::new(Vec::new()),
            submitted: AtomicUsize::new(0),
        })
    }

    pub fn label(&self, workflow: &Value) -> String {
        self.probe
            .iter()
            .map(|(node, input)| workflow[node]["inputs"][input].to_string())
            .collect::<Vec<_>>()
            .join("|")
    }
}

impl WorkflowExecutor for ShuffledExecutor {
    fn name(&self) -> &str {
        "shuffled"
    }

    fn submit(&self, workflow: &Value) -> Result<RunHandle, ProviderError> {
        let label = self.label(workflow);
        let n = self.submitted.fetch_add(1, Ordering::SeqCst);
        let polls = (fnv1a64(label.as_bytes()) % 7) as usize + if n.is_multiple_of(2) { 5 } else { 0 };
        self.polls_left.lock().unwrap().insert(label.clone(), polls);
        Ok(RunHandle(label))
    }

    fn poll(&self, handle: &RunHandle) -> Result<RunStatus, ProviderError> {
        let mut left = self.polls_left.lock().unwrap();
        let n = left.get_mut(&handle.0).expect("submitted handle");
        if *n == 0 {
            self.completion_order.lock().unwrap().push(handle.0.clone());
            return Ok(RunStatus {
                state: RunState::Done,
                outputs: vec![handle.0.clone()],
            });
        }
        *n -= 1;
        Ok(RunStatus {
            state: RunState::Running,
            outputs: Vec::new(),
        })
    }
}
