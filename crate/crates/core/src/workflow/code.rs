//! The assignment-style workflow DSL.
//!
//! ```text
//! workflow  := statement+
//! statement := targets "=" call NEWLINE | call NEWLINE
//! targets   := IDENT ("," IDENT)*
//! call      := classref "(" [arg ("," arg)*] ")"
//! classref  := IDENT | STRING
//! arg       := (IDENT | STRING) "=" value
//! value     := STRING | NUMBER | BOOL | IDENT | IDENT "[" INT "]"
//! ```
//!
//! Newlines inside parentheses are ignored so long calls may wrap. `#` starts
//! a comment that runs to the end of the line. Booleans are `True`/`False`.

use std::collections::{BTreeMap, HashMap};
use std::fmt;

use super::{topo_order, CycleError, InputValue, Literal, NodeId, NodeInstance, WorkflowGraph};
use crate::kb::NodeRegistry;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
#[error("line {line}, column {column}: {kind}")]
pub struct CodeError {
    pub line: usize,
    pub column: usize,
    pub kind: CodeErrorKind,
}

#[derive(Debug, Clone, PartialEq)]
pub enum CodeErrorKind {
    Syntax(String),
    UndefinedVariable(String),
    DuplicateVariable(String),
    DuplicateArgument(String),
    ReservedName(String),
    SlotNotInteger,
    TupleIndexed(String),
    SlotOutOfRange { var: String, slot: usize, outputs: usize },
    TooManyTargets { class_type: String, targets: usize, outputs: usize },
    EmptyWorkflow,
}

impl fmt::Display for CodeErrorKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CodeErrorKind::Syntax(msg) => write!(f, "syntax error: {msg}"),
            CodeErrorKind::UndefinedVariable(v) => write!(f, "undefined variable `{v}`"),
            CodeErrorKind::DuplicateVariable(v) => write!(f, "variable `{v}` is already defined"),
            CodeErrorKind::DuplicateArgument(a) => write!(f, "argument `{a}` given twice"),
            CodeErrorKind::ReservedName(v) => write!(f, "`{v}` is reserved"),
            CodeErrorKind::SlotNotInteger => f.write_str("output slot index must be a non-negative integer"),
            CodeErrorKind::TupleIndexed(v) => {
                write!(f, "`{v}` is bound by tuple unpacking and cannot be indexed")
            }
            CodeErrorKind::SlotOutOfRange { var, slot, outputs } => {
                write!(f, "`{var}[{slot}]` is out of range: node has {outputs} outputs")
            }
            CodeErrorKind::TooManyTargets {
                class_type,
                targets,
                outputs,
            } => write!(f, "{targets} targets but `{class_type}` has {outputs} outputs"),
            CodeErrorKind::EmptyWorkflow => f.write_str("workflow has no statements"),
        }
    }
}

// ---------------------------------------------------------------------------
// emitter

/// Renders the graph as one assignment per node in topological order.
///
/// Variables are named `snake_case(class_type)_k`. References to a class the
/// registry declares with exactly one output use the bare variable; all other
/// references (including every reference when no registry is given) are
/// indexed.
pub fn to_code(graph: &WorkflowGraph, registry: Option<&NodeRegistry>) -> Result<String, CycleError> {
    let order = topo_order(graph)?;
    let mut counters: HashMap<String, usize> = HashMap::new();
    let mut vars: BTreeMap<&NodeId, String> = BTreeMap::new();
    let mut out = String::new();

    for id in &order {
        let node = &graph.nodes[id];
        let base = snake_case(&node.class_type);
        let k = counters.entry(base.clone()).or_insert(0);
        *k += 1;
        let var = format!("{base}_{k}");

        let args: Vec<String> = node
            .inputs
            .iter()
            .map(|(name, value)| {
                let rendered = match value {
                    InputValue::Literal(lit) => render_literal(lit),
                    InputValue::Edge { upstream, slot } => {
                        let up_var = vars
                            .get(upstream)
                            .cloned()
                            .unwrap_or_else(|| upstream.to_string());
                        let single = registry
                            .zip(graph.nodes.get(upstream))
                            .and_then(|(reg, up)| reg.get(&up.class_type))
                            .is_some_and(|spec| spec.outputs.len() == 1);
                        if single && *slot == 0 {
                            up_var
                        } else {
                            format!("{up_var}[{slot}]")
                        }
                    }
                };
                format!("{}={}", render_name(name), rendered)
            })
            .collect();

        out.push_str(&var);
        out.push_str(" = ");
        out.push_str(&render_name(&node.class_type));
        out.push('(');
        out.push_str(&args.join(", "));
        out.push_str(")\n");
        vars.insert(id, var);
    }
    Ok(out)
}

/// `CheckpointLoaderSimple` → `checkpoint_loader_simple`, `VAEDecode` →
/// `vae_decode`. Non-alphanumeric runs become a single underscore.
pub fn snake_case(class_type: &str) -> String {
    let chars: Vec<char> = class_type.chars().collect();
    let mut out = String::new();
    for (i, &c) in chars.iter().enumerate() {
        if c.is_ascii_alphanumeric() {
            if c.is_ascii_uppercase() && i > 0 {
                let prev = chars[i - 1];
                let next_lower = chars.get(i + 1).is_some_and(|n| n.is_ascii_lowercase());
                if prev.is_ascii_lowercase()
                    || prev.is_ascii_digit()
                    || (prev.is_ascii_uppercase() && next_lower)
                {
                    out.push('_');
                }
            }
            out.push(c.to_ascii_lowercase());
        } else if !out.ends_with('_') {
            out.push('_');
        }
    }
    let trimmed = out.trim_matches('_');
    let mut name = String::new();
    let mut last_us = false;
    for c in trimmed.chars() {
        if c == '_' {
            if !last_us {
                name.push(c);
            }
            last_us = true;
        } else {
            name.push(c);
            last_us = false;
        }
    }
    if name.is_empty() || name.starts_with(|c: char| c.is_ascii_digit()) {
        name.insert_str(0, "node_");
        if name.ends_with('_') {
            name.pop();
        }
    }
    name
}

fn is_ident(s: &str) -> bool {
    let mut chars = s.chars();
    match chars.next() {
        Some(c) if c.is_ascii_alphabetic() || c == '_' => {}
        _ => return false,
    }
    chars.all(|c| c.is_ascii_alphanumeric() || c == '_')
}

fn render_name(name: &str) -> String {
    if is_ident(name) && name != "True" && name != "False" {
        name.to_string()
    } else {
        quote(name)
    }
}

fn quote(s: &str) -> String {
    let mut out = String::with_capacity(s.len() + 2);
    out.push('"');
    for c in s.chars() {
        match c {
            '"' => out.push_str("\\\""),
            '\\' => out.push_str("\\\\"),
            '\n' => out.push_str("\\n"),
            '\r' => out.push_str("\\r"),
            '\t' => out.push_str("\\t"),
            c if c.is_control() => out.push_str(&format!("\\u{{{:x}}}", c as u32)),
            c => out.push(c),
        }
    }
    out.push('"');
    out
}

fn render_literal(lit: &Literal) -> String {
    match lit {
        Literal::Bool(true) => "True".into(),
        Literal::Bool(false) => "False".into(),
        Literal::Int(i) => i.to_string(),
        // Debug keeps a `.` or exponent so the value re-parses as a float.
        Literal::Float(f) => format!("{f:?}"),
        Literal::Str(s) => quote(s),
    }
}

// ---------------------------------------------------------------------------
// lexer

#[derive(Debug, Clone, PartialEq)]
enum Tok {
    Ident(String),
    Str(String),
    Number(String),
    LParen,
    RParen,
    LBracket,
    RBracket,
    Comma,
    Equals,
    Newline,
    Eof,
}

impl fmt::Display for Tok {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Tok::Ident(s) => write!(f, "identifier `{s}`"),
            Tok::Str(_) => f.write_str("string"),
            Tok::Number(n) => write!(f, "number `{n}`"),
            Tok::LParen => f.write_str("`(`"),
            Tok::RParen => f.write_str("`)`"),
            Tok::LBracket => f.write_str("`[`"),
            Tok::RBracket => f.write_str("`]`"),
            Tok::Comma => f.write_str("`,`"),
            Tok::Equals => f.write_str("`=`"),
            Tok::Newline => f.write_str("end of line"),
            Tok::Eof => f.write_str("end of input"),
        }
    }
}

#[derive(Debug, Clone)]
struct Spanned {
    tok: Tok,
    line: usize,
    column: usize,
}

fn syntax(line: usize, column: usize, msg: impl Into<String>) -> CodeError {
    CodeError {
        line,
        column,
        kind: CodeErrorKind::Syntax(msg.into()),
    }
}

fn lex(src: &str) -> Result<Vec<Spanned>, CodeError> {
    let chars: Vec<char> = src.chars().collect();
    let mut toks = Vec::new();
    let (mut i, mut line, mut col) = (0usize, 1usize, 1usize);
    let mut depth = 0usize;

    while i < chars.len() {
        let c = chars[i];
        let (tl, tc) = (line, col);
        match c {
            '\n' => {
                if depth == 0 {
                    toks.push(Spanned {
                        tok: Tok::Newline,
                        line: tl,
                        column: tc,
                    });
                }
                i += 1;
                line += 1;
                col = 1;
                continue;
            }
            ' ' | '\t' | '\r' => {}
            '#' => {
                while i < chars.len() && chars[i] != '\n' {
                    i += 1;
                    col += 1;
                }
                continue;
            }
            '(' | '[' => depth += 1,
            ')' | ']' => depth = depth.saturating_sub(1),
            _ => {}
        }
        let simple = match c {
            '(' => Some(Tok::LParen),
            ')' => Some(Tok::RParen),
            '[' => Some(Tok::LBracket),
            ']' => Some(Tok::RBracket),
            ',' => Some(Tok::Comma),
            '=' => Some(Tok::Equals),
            _ => None,
        };
        if let Some(tok) = simple {
            toks.push(Spanned { tok, line: tl, column: tc });
            i += 1;
            col += 1;
            continue;
        }
        if matches!(c, ' ' | '\t' | '\r') {
            i += 1;
            col += 1;
            continue;
        }
        if c == '"' {
            let mut s = String::new();
            i += 1;
            col += 1;
            loop {
                let Some(&ch) = chars.get(i) else {
                    return Err(syntax(tl, tc, "unterminated string"));
                };
                match ch {
                    '"' => {
                        i += 1;
                        col += 1;
                        break;
                    }
                    '\n' => return Err(syntax(tl, tc, "unterminated string")),
                    '\\' => {
                        let esc = chars.get(i + 1).copied();
                        let (ch, used) = match esc {
                            Some('"') => ('"', 2),
                            Some('\\') => ('\\', 2),
                            Some('n') => ('\n', 2),
                            Some('r') => ('\r', 2),
                            Some('t') => ('\t', 2),
                            Some('u') => {
                                if chars.get(i + 2) != Some(&'{') {
                                    return Err(syntax(line, col, "expected `{` after \\u"));
                                }
                                let mut j = i + 3;
                                let mut hex = String::new();
                                while let Some(&h) = chars.get(j) {
                                    if h == '}' {
                                        break;
                                    }
                                    hex.push(h);
                                    j += 1;
                                }
                                let decoded = u32::from_str_radix(&hex, 16)
                                    .ok()
                                    .and_then(char::from_u32)
                                    .filter(|_| chars.get(j) == Some(&'}'));
                                match decoded {
                                    Some(ch) => (ch, j + 1 - i),
                                    None => return Err(syntax(line, col, "invalid unicode escape")),
                                }
                            }
                            _ => return Err(syntax(line, col, "unknown escape sequence")),
                        };
                        s.push(ch);
                        i += used;
                        col += used;
                    }
                    ch => {
                        s.push(ch);
                        i += 1;
                        col += 1;
                    }
                }
            }
            toks.push(Spanned {
                tok: Tok::Str(s),
                line: tl,
                column: tc,
            });
            continue;
        }
        if c.is_ascii_digit() || (c == '-' && chars.get(i + 1).is_some_and(|n| n.is_ascii_digit())) {
            let start = i;
            i += 1;
            while let Some(&ch) = chars.get(i) {
                let exp_sign = (ch == '-' || ch == '+') && matches!(chars[i - 1], 'e' | 'E');
                if ch.is_ascii_digit() || ch == '.' || ch == 'e' || ch == 'E' || exp_sign {
                    i += 1;
                } else {
                    break;
                }
            }
            let text: String = chars[start..i].iter().collect();
            col += i - start;
            toks.push(Spanned {
                tok: Tok::Number(text),
                line: tl,
                column: tc,
            });
            continue;
        }
        if c.is_ascii_alphabetic() || c == '_' {
            let start = i;
            while chars.get(i).is_some_and(|ch| ch.is_ascii_alphanumeric() || *ch == '_') {
                i += 1;
            }
            let text: String = chars[start..i].iter().collect();
            col += i - start;
            toks.push(Spanned {
                tok: Tok::Ident(text),
                line: tl,
                column: tc,
            });
            continue;
        }
        return Err(syntax(tl, tc, format!("unexpected character `{c}`")));
    }
    toks.push(Spanned {
        tok: Tok::Eof,
        line,
        column: col,
    });
    Ok(toks)
}

// ---------------------------------------------------------------------------
// parser

#[derive(Clone)]
struct Binding {
    node: NodeId,
    slot: usize,
    tuple: bool,
}

struct Parser<'a> {
    toks: Vec<Spanned>,
    pos: usize,
    registry: Option<&'a NodeRegistry>,
    vars: HashMap<String, Binding>,
    graph: WorkflowGraph,
}

/// Parses DSL text into a graph with ids `"1"`, `"2"`, … in statement order.
pub fn parse_code(code: &str, registry: Option<&NodeRegistry>) -> Result<WorkflowGraph, CodeError> {
    let toks = lex(code)?;
    let mut p = Parser {
        toks,
        pos: 0,
        registry,
        vars: HashMap::new(),
        graph: WorkflowGraph::new(),
    };
    p.workflow()?;
    Ok(p.graph)
}

impl Parser<'_> {
    fn peek(&self) -> &Spanned {
        &self.toks[self.pos]
    }

    fn peek_at(&self, offset: usize) -> &Tok {
        let idx = (self.pos + offset).min(self.toks.len() - 1);
        &self.toks[idx].tok
    }

    fn next(&mut self) -> Spanned {
        let t = self.toks[self.pos].clone();
        if self.pos < self.toks.len() - 1 {
            self.pos += 1;
        }
        t
    }

    fn expect(&mut self, want: Tok) -> Result<Spanned, CodeError> {
        let t = self.next();
        if t.tok == want {
            Ok(t)
        } else {
            Err(syntax(t.line, t.column, format!("expected {want}, found {}", t.tok)))
        }
    }

    fn workflow(&mut self) -> Result<(), CodeError> {
        loop {
            while self.peek().tok == Tok::Newline {
                self.next();
            }
            if self.peek().tok == Tok::Eof {
                break;
            }
            self.statement()?;
        }
        if self.graph.is_empty() {
            let t = self.peek();
            return Err(CodeError {
                line: t.line,
                column: t.column,
                kind: CodeErrorKind::EmptyWorkflow,
            });
        }
        Ok(())
    }

    fn statement(&mut self) -> Result<(), CodeError> {
        let mut targets: Vec<Spanned> = Vec::new();
        let is_call = matches!(self.peek().tok, Tok::Str(_)) || *self.peek_at(1) == Tok::LParen;
        if !is_call {
            loop {
                let t = self.next();
                match &t.tok {
                    Tok::Ident(_) => targets.push(t),
                    other => {
                        return Err(syntax(t.line, t.column, format!("expected variable name, found {other}")))
                    }
                }
                match self.peek().tok {
                    Tok::Comma => {
                        self.next();
                    }
                    _ => break,
                }
            }
            self.expect(Tok::Equals)?;
        }

        let class_tok = self.next();
        let class_type = match class_tok.tok {
            Tok::Ident(s) | Tok::Str(s) => s,
            other => {
                return Err(syntax(
                    class_tok.line,
                    class_tok.column,
                    format!("expected node class, found {other}"),
                ))
            }
        };
        self.expect(Tok::LParen)?;
        let mut node = NodeInstance::new(class_type.clone());
        if self.peek().tok != Tok::RParen {
            loop {
                let (name, name_tok) = match self.next() {
                    Spanned {
                        tok: Tok::Ident(s) | Tok::Str(s),
                        line,
                        column,
                    } => (s, (line, column)),
                    t => return Err(syntax(t.line, t.column, format!("expected argument name, found {}", t.tok))),
                };
                self.expect(Tok::Equals)?;
                let value = self.value()?;
                if node.inputs.insert(name.clone(), value).is_some() {
                    return Err(CodeError {
                        line: name_tok.0,
                        column: name_tok.1,
                        kind: CodeErrorKind::DuplicateArgument(name),
                    });
                }
                match self.peek().tok {
                    Tok::Comma => {
                        self.next();
                        // trailing comma
                        if self.peek().tok == Tok::RParen {
                            break;
                        }
                    }
                    _ => break,
                }
            }
        }
        self.expect(Tok::RParen)?;
        let end = self.next();
        if !matches!(end.tok, Tok::Newline | Tok::Eof) {
            return Err(syntax(end.line, end.column, format!("expected end of line, found {}", end.tok)));
        }

        let id = NodeId::new((self.graph.len() + 1).to_string());
        if let Some(outputs) = self.output_count(&class_type) {
            if targets.len() > 1 && targets.len() > outputs {
                let t = &targets[0];
                return Err(CodeError {
                    line: t.line,
                    column: t.column,
                    kind: CodeErrorKind::TooManyTargets {
                        class_type,
                        targets: targets.len(),
                        outputs,
                    },
                });
            }
        }
        let tuple = targets.len() > 1;
        for (slot, t) in targets.iter().enumerate() {
            let Tok::Ident(name) = &t.tok else { unreachable!() };
            if name == "True" || name == "False" {
                return Err(CodeError {
                    line: t.line,
                    column: t.column,
                    kind: CodeErrorKind::ReservedName(name.clone()),
                });
            }
            if self.vars.contains_key(name) {
                return Err(CodeError {
                    line: t.line,
                    column: t.column,
                    kind: CodeErrorKind::DuplicateVariable(name.clone()),
                });
            }
            self.vars.insert(
                name.clone(),
                Binding {
                    node: id.clone(),
                    slot,
                    tuple,
                },
            );
        }
        self.graph.insert(id, node);
        Ok(())
    }

    fn output_count(&self, class_type: &str) -> Option<usize> {
        self.registry?.get(class_type).map(|spec| spec.outputs.len())
    }

    fn value(&mut self) -> Result<InputValue, CodeError> {
        let t = self.next();
        match t.tok {
            Tok::Str(s) => Ok(InputValue::Literal(Literal::Str(s))),
            Tok::Number(n) => parse_number(&n)
                .map(InputValue::Literal)
                .ok_or_else(|| syntax(t.line, t.column, format!("invalid number `{n}`"))),
            Tok::Ident(name) if name == "True" => Ok(InputValue::Literal(Literal::Bool(true))),
            Tok::Ident(name) if name == "False" => Ok(InputValue::Literal(Literal::Bool(false))),
            Tok::Ident(name) => {
                let Some(binding) = self.vars.get(&name).cloned() else {
                    return Err(CodeError {
                        line: t.line,
                        column: t.column,
                        kind: CodeErrorKind::UndefinedVariable(name),
                    });
                };
                if self.peek().tok != Tok::LBracket {
                    return Ok(InputValue::Edge {
                        upstream: binding.node,
                        slot: binding.slot,
                    });
                }
                let bracket = self.next();
                if binding.tuple {
                    return Err(CodeError {
                        line: bracket.line,
                        column: bracket.column,
                        kind: CodeErrorKind::TupleIndexed(name),
                    });
                }
                let idx = self.next();
                let slot = match &idx.tok {
                    Tok::Number(n) if n.bytes().all(|b| b.is_ascii_digit()) => n.parse::<usize>().ok(),
                    _ => None,
                };
                let Some(slot) = slot else {
                    return Err(CodeError {
                        line: idx.line,
                        column: idx.column,
                        kind: CodeErrorKind::SlotNotInteger,
                    });
                };
                self.expect(Tok::RBracket)?;
                let upstream_class = &self.graph.nodes[&binding.node].class_type;
                if let Some(outputs) = self.output_count(upstream_class) {
                    if slot >= outputs {
                        return Err(CodeError {
                            line: idx.line,
                            column: idx.column,
                            kind: CodeErrorKind::SlotOutOfRange { var: name, slot, outputs },
                        });
                    }
                }
                Ok(InputValue::Edge {
                    upstream: binding.node,
                    slot,
                })
            }
            other => Err(syntax(t.line, t.column, format!("expected a value, found {other}"))),
        }
    }
}

fn parse_number(text: &str) -> Option<Literal> {
    if text.contains(['.', 'e', 'E']) {
        text.parse::<f64>().ok().filter(|f| f.is_finite()).map(Literal::Float)
    } else {
        text.parse::<i64>().ok().map(Literal::Int)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kb::{NodeSpec, OutSpec};

    fn reg_with(outputs: &[(&str, usize)]) -> NodeRegistry {
        let mut reg = NodeRegistry::default();
        for (class, n) in outputs {
            let mut spec = NodeSpec::new(*class);
            spec.outputs = (0..*n)
                .map(|i| OutSpec {
                    name: format!("out{i}"),
                    type_tag: "*".into(),
                })
                .collect();
            reg.insert(spec);
        }
        reg
    }

    #[test]
    fn snake_case_examples() {
        assert_eq!(snake_case("CheckpointLoaderSimple"), "checkpoint_loader_simple");
        assert_eq!(snake_case("VAEDecode"), "vae_decode");
        assert_eq!(snake_case("CLIPTextEncode"), "clip_text_encode");
        assert_eq!(snake_case("KSampler"), "k_sampler");
        assert_eq!(snake_case("SD3Loader"), "sd3_loader");
        assert_eq!(snake_case("Image Resize (JWS)"), "image_resize_jws");
        assert_eq!(snake_case("4x Upscale"), "node_4x_upscale");
        assert_eq!(snake_case("!!!"), "node");
    }

    #[test]
    fn single_loader_statement() {
        let g = WorkflowGraph::new().with_node(
            "1",
            NodeInstance::new("CheckpointLoaderSimple").with_literal("ckpt_name", Literal::Str("sd15.safetensors".into())),
        );
        assert_eq!(
            to_code(&g, None).unwrap(),
            "checkpoint_loader_simple_1 = CheckpointLoaderSimple(ckpt_name=\"sd15.safetensors\")\n"
        );
    }

    #[test]
    fn references_are_indexed_without_registry() {
        let g = WorkflowGraph::new()
            .with_node("1", NodeInstance::new("Foo"))
            .with_node("2", NodeInstance::new("Bar").with_edge("x", "1", 0));
        let code = to_code(&g, None).unwrap();
        assert!(code.contains("Bar(x=foo_1[0])"), "{code}");
    }

    #[test]
    fn single_output_references_are_bare_with_registry() {
        let reg = reg_with(&[("Foo", 1), ("Baz", 3)]);
        let g = WorkflowGraph::new()
            .with_node("1", NodeInstance::new("Foo"))
            .with_node("2", NodeInstance::new("Baz"))
            .with_node("3", NodeInstance::new("Bar").with_edge("x", "1", 0).with_edge("y", "2", 2));
        let code = to_code(&g, Some(&reg)).unwrap();
        assert!(code.contains("Bar(x=foo_1, y=baz_1[2])"), "{code}");
    }

    #[test]
    fn ordinals_count_per_class() {
        let g = WorkflowGraph::new()
            .with_node("1", NodeInstance::new("A"))
            .with_node("2", NodeInstance::new("B"))
            .with_node("3", NodeInstance::new("A"));
        let code = to_code(&g, None).unwrap();
        assert_eq!(code, "a_1 = A()\nb_1 = B()\na_2 = A()\n");
    }

    #[test]
    fn non_identifier_classes_are_quoted() {
        let g = WorkflowGraph::new().with_node("1", NodeInstance::new("Image Resize (JWS)"));
        let code = to_code(&g, None).unwrap();
        assert_eq!(code, "image_resize_jws_1 = \"Image Resize (JWS)\"()\n");
        let back = parse_code(&code, None).unwrap();
        assert_eq!(back.node("1").unwrap().class_type, "Image Resize (JWS)");
    }

    #[test]
    fn literal_rendering_round_trips() {
        let g = WorkflowGraph::new().with_node(
            "1",
            NodeInstance::new("A")
                .with_literal("f", Literal::Float(1.0))
                .with_literal("g", Literal::Float(1e-7))
                .with_literal("i", Literal::Int(-3))
                .with_literal("b", Literal::Bool(false))
                .with_literal("s", Literal::Str("a \"q\"\n\\ \u{1}".into())),
        );
        let code = to_code(&g, None).unwrap();
        assert!(code.contains("f=1.0"));
        assert_eq!(parse_code(&code, None).unwrap(), g);
    }

    #[test]
    fn parse_simple_literal() {
        let g = parse_code("a = Foo(x=1)", None).unwrap();
        assert_eq!(g.len(), 1);
        assert_eq!(g.node("1").unwrap().inputs["x"], InputValue::Literal(Literal::Int(1)));
    }

    #[test]
    fn tuple_targets_bind_consecutive_slots() {
        let src = "m, c, v = CheckpointLoaderSimple(ckpt_name=\"s\")\ns = KSampler(model=m, vae=v)\n";
        let g = parse_code(src, None).unwrap();
        let ks = g.node("2").unwrap();
        assert_eq!(ks.inputs["model"], InputValue::edge("1", 0));
        assert_eq!(ks.inputs["vae"], InputValue::edge("1", 2));
    }

    #[test]
    fn undefined_reference_reports_line() {
        let err = parse_code("x = Foo()\nb = Bar(y=a)\n", None).unwrap_err();
        assert_eq!(err.line, 2);
        assert_eq!(err.kind, CodeErrorKind::UndefinedVariable("a".into()));
    }

    #[test]
    fn duplicate_variable() {
        let err = parse_code("a = Foo()\na = Foo()\n", None).unwrap_err();
        assert_eq!(err.kind, CodeErrorKind::DuplicateVariable("a".into()));
        assert_eq!((err.line, err.column), (2, 1));
    }

    #[test]
    fn slot_must_be_integer() {
        let err = parse_code("a = Foo()\nb = Bar(x=a[1.5])\n", None).unwrap_err();
        assert_eq!(err.kind, CodeErrorKind::SlotNotInteger);
        let err = parse_code("a = Foo()\nb = Bar(x=a[k])\n", None).unwrap_err();
        assert_eq!(err.kind, CodeErrorKind::SlotNotInteger);
    }

    #[test]
    fn syntax_errors_are_positioned() {
        let err = parse_code("a = Foo(x=)\n", None).unwrap_err();
        assert!(matches!(err.kind, CodeErrorKind::Syntax(_)));
        assert_eq!((err.line, err.column), (1, 11));
        let err = parse_code("a = Foo(x=1) b\n", None).unwrap_err();
        assert!(matches!(err.kind, CodeErrorKind::Syntax(_)));
    }

    #[test]
    fn comments_blank_lines_and_wrapping() {
        let src = "# header\n\na = Foo(\n    x=1,  # inline\n    y=\"z\",\n)\nBar(p=a)\n";
        let g = parse_code(src, None).unwrap();
        assert_eq!(g.len(), 2);
        assert_eq!(g.node("2").unwrap().inputs["p"], InputValue::edge("1", 0));
    }

    #[test]
    fn empty_source_is_rejected() {
        assert_eq!(parse_code("  # nothing\n", None).unwrap_err().kind, CodeErrorKind::EmptyWorkflow);
    }

    #[test]
    fn registry_bounds_slots() {
        let reg = reg_with(&[("Foo", 2)]);
        let err = parse_code("a = Foo()\nb = Bar(x=a[2])\n", Some(&reg)).unwrap_err();
        assert!(matches!(err.kind, CodeErrorKind::SlotOutOfRange { slot: 2, outputs: 2, .. }));
        let err = parse_code("a, b, c = Foo()\n", Some(&reg)).unwrap_err();
        assert!(matches!(err.kind, CodeErrorKind::TooManyTargets { .. }));
    }

    #[test]
    fn tuple_bound_names_cannot_be_indexed() {
        let err = parse_code("a, b = Foo()\nc = Bar(x=a[0])\n", None).unwrap_err();
        assert_eq!(err.kind, CodeErrorKind::TupleIndexed("a".into()));
    }

    #[test]
    fn reserved_targets() {
        let err = parse_code("True = Foo()\n", None).unwrap_err();
        assert_eq!(err.kind, CodeErrorKind::ReservedName("True".into()));
    }

    #[test]
    fn cycle_is_reported_by_emitter() {
        let g = WorkflowGraph::new()
            .with_node("1", NodeInstance::new("A").with_edge("x", "2", 0))
            .with_node("2", NodeInstance::new("B").with_edge("y", "1", 0));
        assert!(to_code(&g, None).is_err());
    }
}
