//! Parameter grids over workflow literals, run through an executor with
//! bounded parallelism.

use std::collections::BTreeSet;
use std::sync::atomic::{AtomicBool, AtomicUsize, Ordering};
use std::sync::Mutex;
use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};

use crate::providers::{ProviderError, RunState, WorkflowExecutor};
use crate::workflow::{to_json_value, InputValue, Literal, WorkflowGraph};

pub const DEFAULT_CAP: usize = 64;

fn default_cap() -> usize {
    DEFAULT_CAP
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridAxis {
    pub node_id: String,
    pub input_name: String,
    pub values: Vec<Literal>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParamGridSpec {
    pub axes: Vec<GridAxis>,
    #[serde(default = "default_cap")]
    pub cap: usize,
}

impl ParamGridSpec {
    pub fn new(axes: Vec<GridAxis>) -> Self {
        Self { axes, cap: DEFAULT_CAP }
    }

    /// Number of combinations, saturating on overflow.
    pub fn size(&self) -> usize {
        self.axes
            .iter()
            .fold(1usize, |acc, a| acc.saturating_mul(a.values.len()))
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum GridError {
    #[error("grid has no axes")]
    NoAxes,
    #[error("node `{0}` is not in the workflow")]
    UnknownNode(String),
    #[error("node `{node_id}` has no input `{input_name}`")]
    UnknownInput { node_id: String, input_name: String },
    #[error("`{node_id}.{input_name}` is a connection, not a literal")]
    EdgeInput { node_id: String, input_name: String },
    #[error("`{node_id}.{input_name}` appears in more than one axis")]
    DuplicateAxis { node_id: String, input_name: String },
    #[error("axis `{node_id}.{input_name}` has no values")]
    EmptyAxis { node_id: String, input_name: String },
    #[error("grid has {size} combinations, more than the cap of {cap}")]
    CapExceeded { size: usize, cap: usize },
    #[error("cannot parse axis `{0}`: expected NODE.INPUT=V1,V2,...")]
    Parse(String),
}

/// Parses `3.cfg=6,7,8`. Values are read as integers, floats, `true`/`false`
/// or, failing those, strings.
pub fn parse_axis(text: &str) -> Result<GridAxis, GridError> {
    let err = || GridError::Parse(text.to_string());
    let (target, values) = text.split_once('=').ok_or_else(err)?;
    let (node_id, input_name) = target.trim().split_once('.').ok_or_else(err)?;
    if node_id.is_empty() || input_name.is_empty() {
        return Err(err());
    }
    let values: Vec<Literal> = values
        .split(',')
        .map(str::trim)
        .filter(|v| !v.is_empty())
        .map(parse_value)
        .collect();
    Ok(GridAxis {
        node_id: node_id.to_string(),
        input_name: input_name.to_string(),
        values,
    })
}

fn parse_value(v: &str) -> Literal {
    if let Ok(i) = v.parse::<i64>() {
        return Literal::Int(i);
    }
    if let Ok(f) = v.parse::<f64>() {
        if f.is_finite() {
            return Literal::Float(f);
        }
    }
    match v {
        "true" | "True" => Literal::Bool(true),
        "false" | "False" => Literal::Bool(false),
        _ => Literal::Str(v.trim_matches('"').to_string()),
    }
}

/// Checks the grid against the workflow and returns its size.
pub fn check_grid(workflow: &WorkflowGraph, grid: &ParamGridSpec) -> Result<usize, GridError> {
    if grid.axes.is_empty() {
        return Err(GridError::NoAxes);
    }
    let mut seen = BTreeSet::new();
    for a in &grid.axes {
        let node = workflow
            .node(&a.node_id)
            .ok_or_else(|| GridError::UnknownNode(a.node_id.clone()))?;
        let key = || (a.node_id.clone(), a.input_name.clone());
        match node.inputs.get(&a.input_name) {
            None => {
                let (node_id, input_name) = key();
                return Err(GridError::UnknownInput { node_id, input_name });
            }
            Some(InputValue::Edge { .. }) => {
                let (node_id, input_name) = key();
                return Err(GridError::EdgeInput { node_id, input_name });
            }
            Some(InputValue::Literal(_)) => {}
        }
        if !seen.insert(key()) {
            let (node_id, input_name) = key();
            return Err(GridError::DuplicateAxis { node_id, input_name });
        }
        if a.values.is_empty() {
            let (node_id, input_name) = key();
            return Err(GridError::EmptyAxis { node_id, input_name });
        }
    }
    let size = grid.size();
    if size > grid.cap {
        return Err(GridError::CapExceeded { size, cap: grid.cap });
    }
    Ok(size)
}

/// One value per axis, in axis order.
pub type Combo = Vec<ComboValue>;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComboValue {
    pub node_id: String,
    pub input_name: String,
    pub value: Literal,
}

/// All combinations, first axis varying slowest.
pub fn enumerate_combos(grid: &ParamGridSpec) -> Vec<Combo> {
    let mut out: Vec<Combo> = vec![Vec::new()];
    for a in &grid.axes {
        let mut next = Vec::with_capacity(out.len() * a.values.len());
        for prefix in &out {
            for v in &a.values {
                let mut c = prefix.clone();
                c.push(ComboValue {
                    node_id: a.node_id.clone(),
                    input_name: a.input_name.clone(),
                    value: v.clone(),
                });
                next.push(c);
            }
        }
        out = next;
    }
    out
}

/// An integer given for a float-valued input stays a float.
fn coerce(base: &Literal, value: &Literal) -> Literal {
    match (base, value) {
        (Literal::Float(_), Literal::Int(i)) => Literal::Float(*i as f64),
        _ => value.clone(),
    }
}

/// One copy of the workflow per combination, in enumeration order.
pub fn expand_grid(workflow: &WorkflowGraph, grid: &ParamGridSpec) -> Result<Vec<(Combo, WorkflowGraph)>, GridError> {
    check_grid(workflow, grid)?;
    Ok(enumerate_combos(grid)
        .into_iter()
        .map(|combo| {
            let mut g = workflow.clone();
            for cv in &combo {
                let node = g.node_mut(&cv.node_id).expect("checked above");
                let slot = node.inputs.get_mut(&cv.input_name).expect("checked above");
                if let InputValue::Literal(base) = slot {
                    *base = coerce(base, &cv.value);
                }
            }
            (combo, g)
        })
        .collect())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum RunOutcome {
    Done,
    Failed,
    /// Not attempted because the executor became unavailable.
    Aborted,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRun {
    pub index: usize,
    pub combo: Combo,
    pub status: RunOutcome,
    pub outputs: Vec<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepResult {
    pub runs: Vec<SweepRun>,
    pub aborted: bool,
}

#[derive(Debug, Clone)]
pub struct SweepOptions {
    pub parallelism: usize,
    pub poll_interval: Duration,
    pub max_wait: Duration,
}

impl Default for SweepOptions {
    fn default() -> Self {
        Self {
            parallelism: 4,
            poll_interval: Duration::from_millis(200),
            max_wait: Duration::from_secs(600),
        }
    }
}

enum Attempt {
    Finished(RunOutcome, Vec<String>, Option<String>),
    Unavailable(ProviderError),
}

fn run_one(executor: &dyn WorkflowExecutor, graph: &WorkflowGraph, opts: &SweepOptions) -> Attempt {
    let handle = match executor.submit(&to_json_value(graph)) {
        Ok(h) => h,
        Err(e) if e.is_unavailable() => return Attempt::Unavailable(e),
        Err(e) => return Attempt::Finished(RunOutcome::Failed, Vec::new(), Some(e.to_string())),
    };
    let started = Instant::now();
    loop {
        match executor.poll(&handle) {
            Ok(s) if s.state == RunState::Done => return Attempt::Finished(RunOutcome::Done, s.outputs, None),
            Ok(s) if s.state == RunState::Failed => {
                return Attempt::Finished(RunOutcome::Failed, s.outputs, Some("execution failed".into()))
            }
            Ok(_) => {}
            Err(e) if e.is_unavailable() => return Attempt::Unavailable(e),
            Err(e) => return Attempt::Finished(RunOutcome::Failed, Vec::new(), Some(e.to_string())),
        }
        if started.elapsed() >= opts.max_wait {
            return Attempt::Finished(RunOutcome::Failed, Vec::new(), Some("timed out waiting for the run".into()));
        }
        std::thread::sleep(opts.poll_interval);
    }
}

/// Submits every variant with at most `parallelism` runs in flight and polls
/// each to a terminal state. Results are in enumeration order whatever the
/// completion order. If the executor becomes unavailable the sweep stops:
/// the failing run is marked failed and unstarted runs aborted.
pub fn run_sweep(
    workflow: &WorkflowGraph,
    grid: &ParamGridSpec,
    executor: &dyn WorkflowExecutor,
    opts: &SweepOptions,
) -> Result<SweepResult, GridError> {
    let variants = expand_grid(workflow, grid)?;
    let n = variants.len();
    let next = AtomicUsize::new(0);
    let abort = AtomicBool::new(false);
    let slots: Mutex<Vec<Option<SweepRun>>> = Mutex::new(vec![None; n]);
    let workers = opts.parallelism.clamp(1, n.max(1));
    std::thread::scope(|s| {
        for _ in 0..workers {
            s.spawn(|| loop {
                let i = next.fetch_add(1, Ordering::SeqCst);
                if i >= n {
                    break;
                }
                let (combo, graph) = &variants[i];
                let (status, outputs, error) = if abort.load(Ordering::SeqCst) {
                    (RunOutcome::Aborted, Vec::new(), None)
                } else {
                    match run_one(executor, graph, opts) {
                        Attempt::Finished(st, out, err) => (st, out, err),
                        Attempt::Unavailable(e) => {
                            abort.store(true, Ordering::SeqCst);
                            tracing::warn!(error = %e, run = i, "executor unavailable; aborting sweep");
                            (RunOutcome::Failed, Vec::new(), Some(e.to_string()))
                        }
                    }
                };
                slots.lock().unwrap()[i] = Some(SweepRun {
                    index: i,
                    combo: combo.clone(),
                    status,
                    outputs,
                    error,
                });
            });
        }
    });
    let runs = slots
        .into_inner()
        .unwrap()
        .into_iter()
        .map(|r| r.expect("every index is claimed by a worker"))
        .collect();
    Ok(SweepResult {
        runs,
        aborted: abort.into_inner(),
    })
}
