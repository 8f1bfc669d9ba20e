//! Command-line front end. [`run`] returns what would be printed and the
//! exit code so tests can drive it without spawning a process.

use std::path::{Path, PathBuf};
use std::sync::Arc;

use clap::{CommandFactory, Parser, Subcommand, ValueEnum};
use copilot_core::eval::{eval_recall, parse_recall_cases};
use copilot_core::generation::{evaluate_generation, parse_gen_cases};
use copilot_core::kb::KnowledgeBase;
use copilot_core::paramsearch::{parse_axis, ParamGridSpec};
use copilot_core::providers::{ProviderConfig, Providers, UreqTransport};
use copilot_core::{Copilot, CopilotConfig, CopilotError, EntryKind};
use serde::Serialize;
use serde_json::{json, Value};

use crate::ops::{self, DocGenParams, Format};
use crate::service::{self, AppState};

#[derive(Debug, Parser)]
#[command(name = "copilot", version, about = "Workflow copilot engine")]
pub struct Cli {
    /// Knowledge-base store directory.
    #[arg(long, global = true, env = "COPILOT_KB_DIR", default_value = "kb")]
    pub kb_dir: PathBuf,
    /// Use the deterministic fallback providers only.
    #[arg(long, global = true)]
    pub offline: bool,
    /// TOML configuration file.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum KindArg {
    Workflows,
    Nodes,
    Models,
}

impl From<KindArg> for EntryKind {
    fn from(k: KindArg) -> Self {
        match k {
            KindArg::Workflows => EntryKind::Workflow,
            KindArg::Nodes => EntryKind::Node,
            KindArg::Models => EntryKind::Model,
        }
    }
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Load node, model and workflow files (a directory or .tar) into the store.
    Ingest { path: PathBuf },
    /// Convert a workflow between the JSON and code forms.
    Convert {
        #[arg(long, value_enum)]
        from: Format,
        #[arg(long, value_enum)]
        to: Format,
        file: PathBuf,
    },
    /// Check a workflow against the node registry. Exits 1 when it fails.
    Validate {
        #[arg(long, value_enum, default_value = "json")]
        format: Format,
        file: PathBuf,
    },
    /// Rank knowledge-base entries for a query.
    Recommend {
        #[arg(value_enum)]
        kind: KindArg,
        query: String,
        #[arg(long)]
        context: Option<String>,
    },
    /// Generate node documentation from a source checkout.
    Docgen {
        #[arg(long)]
        source: PathBuf,
        /// Only these classes; all nodes when omitted.
        #[arg(long = "class")]
        classes: Vec<String>,
        #[arg(long)]
        chunk_size: Option<usize>,
        #[arg(long)]
        overlap: Option<usize>,
        #[arg(long)]
        top_m: Option<usize>,
    },
    /// Run every combination of a parameter grid through the executor.
    Paramsearch {
        #[arg(long)]
        workflow: PathBuf,
        /// `node.input=v1,v2,...`; repeat for more axes.
        #[arg(long = "axis", required = true)]
        axes: Vec<String>,
        #[arg(long)]
        parallelism: Option<usize>,
        #[arg(long)]
        cap: Option<usize>,
    },
    /// Recall@k over JSON-lines cases `{instruction, gold_id, kind}`.
    EvalRecall {
        cases: PathBuf,
        #[arg(long, default_value_t = 3)]
        k: usize,
    },
    /// Generation pass rate and node F1 over JSON-lines cases `{intent, reference}`.
    EvalGen { cases: PathBuf },
    /// Start the HTTP service.
    Serve {
        #[arg(long, env = "COPILOT_PORT", default_value_t = 8080)]
        port: u16,
        #[arg(long, default_value = "127.0.0.1")]
        host: String,
    },
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Outcome {
    pub stdout: String,
    pub stderr: String,
    pub code: i32,
}

#[derive(Debug)]
pub struct Failure {
    pub kind: String,
    pub detail: String,
}

impl Failure {
    fn new(kind: &str, detail: impl Into<String>) -> Self {
        Self {
            kind: kind.into(),
            detail: detail.into(),
        }
    }

    fn io(path: &Path, e: std::io::Error) -> Self {
        Self::new("io", format!("{}: {e}", path.display()))
    }
}

impl From<CopilotError> for Failure {
    fn from(e: CopilotError) -> Self {
        Self::new(e.kind(), e.to_string())
    }
}

/// Printed JSON plus whether the command counts as successful.
struct Output {
    stdout: String,
    ok: bool,
}

fn json_out<T: Serialize>(value: &T, ok: bool) -> Output {
    Output {
        stdout: serde_json::to_string_pretty(value).expect("serializable output"),
        ok,
    }
}

fn read(path: &Path) -> Result<String, Failure> {
    std::fs::read_to_string(path).map_err(|e| Failure::io(path, e))
}

pub fn load_config(path: Option<&Path>) -> Result<CopilotConfig, Failure> {
    match path {
        Some(p) => CopilotConfig::load(p).map_err(|e| Failure::new("config", e.to_string())),
        None => Ok(CopilotConfig::default()),
    }
}

/// Providers from the environment, forced to the fallbacks when `offline`.
pub fn load_providers(offline: bool) -> Providers {
    let mut cfg = ProviderConfig::from_env();
    cfg.offline |= offline;
    Providers::from_config(&cfg, Arc::new(UreqTransport))
}

pub fn load_engine(kb_dir: &Path, offline: bool, config: Option<&Path>) -> Result<Copilot, Failure> {
    let kb = KnowledgeBase::open(kb_dir).map_err(CopilotError::from)?;
    let config = load_config(config)?;
    Copilot::new(kb, load_providers(offline), config).map_err(|e| CopilotError::from(e).into())
}

/// Workflow file contents as the JSON value the HTTP API would receive.
fn payload(text: String, format: Format) -> Value {
    match format {
        Format::Json => serde_json::from_str(&text).unwrap_or(Value::String(text)),
        Format::Code => Value::String(text),
    }
}

fn execute(cli: &Cli) -> Result<Output, Failure> {
    let engine = || load_engine(&cli.kb_dir, cli.offline, cli.config.as_deref());
    match &cli.command {
        Command::Ingest { path } => {
            let mut kb = KnowledgeBase::init(&cli.kb_dir).map_err(CopilotError::from)?;
            let summary = kb.ingest(path).map_err(CopilotError::from)?;
            Ok(json_out(&summary, summary.rejects.is_empty()))
        }
        Command::Convert { from, to, file } => {
            let copilot = engine()?;
            let out = ops::convert(*from, *to, &payload(read(file)?, *from), &copilot)?;
            Ok(match out {
                Value::String(code) => Output { stdout: code, ok: true },
                other => json_out(&other, true),
            })
        }
        Command::Validate { format, file } => {
            let copilot = engine()?;
            let report = ops::validate_workflow(*format, &payload(read(file)?, *format), &copilot)?;
            Ok(json_out(&report, report.pass))
        }
        Command::Recommend { kind, query, context } => {
            let copilot = engine()?;
            let rec = ops::recommend((*kind).into(), query, context.as_deref(), &copilot)?;
            Ok(json_out(&rec, true))
        }
        Command::Docgen {
            source,
            classes,
            chunk_size,
            overlap,
            top_m,
        } => {
            let config = load_config(cli.config.as_deref())?;
            let params = DocGenParams {
                chunk_size: chunk_size.unwrap_or(config.docgen.chunk_size),
                overlap: overlap.unwrap_or(config.docgen.overlap),
                top_m: top_m.unwrap_or(config.docgen.top_m),
            };
            let mut kb = KnowledgeBase::open(&cli.kb_dir).map_err(CopilotError::from)?;
            let providers = load_providers(cli.offline);
            let summary = ops::docgen(&mut kb, source, classes, params, &providers, &config.retrieval)?;
            Ok(json_out(&summary, summary.failed.is_empty()))
        }
        Command::Paramsearch {
            workflow,
            axes,
            parallelism,
            cap,
        } => {
            let copilot = engine()?;
            let graph = ops::parse_workflow(Format::Json, &payload(read(workflow)?, Format::Json), &copilot)?;
            let mut grid = ParamGridSpec::new(
                axes.iter()
                    .map(|a| parse_axis(a))
                    .collect::<Result<_, _>>()
                    .map_err(CopilotError::from)?,
            );
            if let Some(c) = cap {
                grid.cap = *c;
            }
            let result = ops::paramsearch(&graph, &grid, *parallelism, &copilot)?;
            let ok = !result.aborted;
            Ok(json_out(&result, ok))
        }
        Command::EvalRecall { cases, k } => {
            let cases = parse_recall_cases(&read(cases)?).map_err(|e| Failure::new("invalid-request", e))?;
            let copilot = engine()?;
            let report = eval_recall(&cases, *k, &copilot).map_err(CopilotError::from)?;
            Ok(json_out(&report, report.rejected.is_empty()))
        }
        Command::EvalGen { cases } => {
            let cases = parse_gen_cases(&read(cases)?).map_err(|e| Failure::new("invalid-request", e))?;
            let copilot = engine()?;
            Ok(json_out(&evaluate_generation(&cases, &copilot), true))
        }
        Command::Serve { port, host } => {
            let state = Arc::new(AppState::new(Arc::new(engine()?)));
            let addr = format!("{host}:{port}");
            let rt = tokio::runtime::Runtime::new().map_err(|e| Failure::new("io", e.to_string()))?;
            rt.block_on(service::serve(state, &addr))
                .map_err(|e| Failure::new("io", format!("{addr}: {e}")))?;
            Ok(Output {
                stdout: String::new(),
                ok: true,
            })
        }
    }
}

/// Parses `args` (including the program name) and runs the command.
pub fn run<I, T>(args: I) -> Outcome
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let mut text = e.render().to_string();
            let code = e.exit_code();
            // Value errors omit the usage line; invalid input always gets one.
            if code != 0 && !text.contains("Usage:") {
                text.push_str(&format!("\n{}\n", Cli::command().render_usage()));
            }
            return if code == 0 {
                Outcome {
                    stdout: text,
                    stderr: String::new(),
                    code,
                }
            } else {
                Outcome {
                    stdout: String::new(),
                    stderr: text,
                    code,
                }
            };
        }
    };
    match execute(&cli) {
        Ok(out) => Outcome {
            stdout: out.stdout,
            stderr: String::new(),
            code: if out.ok { 0 } else { 1 },
        },
        Err(f) => Outcome {
            stdout: json!({ "error": { "kind": f.kind, "detail": f.detail } }).to_string(),
            stderr: format!("error: {}\n", f.detail),
            code: 1,
        },
    }
}
