//! Text format for rulemaps.
//!
//! ```text
//! rulemap "Volksverhetzung" {
//!   id: volksverhetzung
//!   version: 3
//!   meta "jurisdiction": "DE"
//!   all root "Tatbestand" {
//!     any act {
//!       leaf incitement "Stachelt der Beitrag zum Hass auf?" {
//!         context: @contexts/incitement.txt
//!       }
//!       leaf violence "Fordert der Beitrag zu Gewalt auf?"
//!     }
//!     not any excluded { leaf satire "Ist der Beitrag erkennbar Satire?" }
//!   }
//! }
//! ```
//!
//! Leaf properties: `evaluator: llm | symbolic(pred, "arg", ...)`,
//! `context: "..." | @path`, `answer_language: de | en`, `retries: N`.
//! `#` starts a comment.

mod lexer;
mod parser;

use std::fmt;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use serde::Serialize;

use crate::model::{LeafBinding, NodeKind, RuleMap, DEFAULT_RETRY_LIMIT};
use crate::validate::is_ident;

/// Byte range plus 1-based line/column (in characters) of its start.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct SourceSpan {
    pub start: usize,
    pub end: usize,
    pub line: usize,
    pub column: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum ParseErrorKind {
    Syntax,
    /// Second definition of a node id; `related` points at the first.
    DuplicateId,
    /// Well-formed text describing an invalid map.
    Invalid,
    Io,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct ParseError {
    pub kind: ParseErrorKind,
    pub span: SourceSpan,
    pub message: String,
    pub expected: Vec<String>,
    pub related: Option<SourceSpan>,
}

impl ParseError {
    pub(crate) fn new(span: SourceSpan, message: impl Into<String>) -> Self {
        ParseError {
            kind: ParseErrorKind::Syntax,
            span,
            message: message.into(),
            expected: Vec::new(),
            related: None,
        }
    }
}

impl fmt::Display for ParseError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "{}:{}: {}",
            self.span.line, self.span.column, self.message
        )?;
        if let Some(r) = self.related {
            write!(f, " (first defined at {}:{})", r.line, r.column)?;
        }
        Ok(())
    }
}

impl std::error::Error for ParseError {}

#[derive(Debug, Clone, Default)]
pub struct ParseOptions {
    /// Directory `@file` context references are resolved against.
    pub base_dir: Option<PathBuf>,
}

pub fn parse(src: &str) -> Result<RuleMap, Vec<ParseError>> {
    parser::parse_tokens(src, &ParseOptions::default())
}

pub fn parse_with(src: &str, opts: &ParseOptions) -> Result<RuleMap, Vec<ParseError>> {
    parser::parse_tokens(src, opts)
}

/// Parses a file; `@file` references resolve relative to its directory.
pub fn parse_file(path: &Path) -> Result<RuleMap, Vec<ParseError>> {
    let src = std::fs::read_to_string(path).map_err(|e| {
        let mut err = ParseError::new(
            SourceSpan {
                start: 0,
                end: 0,
                line: 1,
                column: 1,
            },
            format!("cannot read {}: {e}", path.display()),
        );
        err.kind = ParseErrorKind::Io;
        vec![err]
    })?;
    let opts = ParseOptions {
        base_dir: path.parent().map(Path::to_path_buf),
    };
    parse_with(&src, &opts)
}

/// Renders a compiler-style report of errors against their source.
pub fn render_errors(src: &str, errors: &[ParseError]) -> String {
    let lines: Vec<&str> = src.lines().collect();
    let mut out = String::new();
    for e in errors {
        let _ = writeln!(out, "error: {e}");
        if let Some(line) = lines.get(e.span.line.saturating_sub(1)) {
            let width = src[e.span.start.min(src.len())..e.span.end.min(src.len())]
                .chars()
                .take_while(|c| *c != '\n')
                .count()
                .max(1);
            let _ = writeln!(out, "{:>4} | {line}", e.span.line);
            let _ = writeln!(
                out,
                "     | {}{}",
                " ".repeat(e.span.column - 1),
                "^".repeat(width)
            );
        }
    }
    out
}

fn quote(s: &str) -> String {
    let mut out = String::with_capacity(s.len() + 2);
    out.push('"');
    for c in s.chars() {
        match c {
            '"' => out.push_str("\\\""),
            '\\' => out.push_str("\\\\"),
            '\n' => out.push_str("\\n"),
            '\t' => out.push_str("\\t"),
            '\r' => out.push_str("\\r"),
            c if c.is_control() => {
                let _ = write!(out, "\\u{{{:x}}}", c as u32);
            }
            c => out.push(c),
        }
    }
    out.push('"');
    out
}

/// Canonical text form. `parse(&to_dsl(m))` reproduces `m` for any valid map,
/// and the output is a fixed point of parse-then-print.
pub fn to_dsl(map: &RuleMap) -> String {
    let mut out = String::new();
    let _ = writeln!(out, "rulemap {} {{", quote(&map.title));
    if is_ident(&map.id) {
        let _ = writeln!(out, "  id: {}", map.id);
    } else {
        let _ = writeln!(out, "  id: {}", quote(&map.id));
    }
    let _ = writeln!(out, "  version: {}", map.version);
    for (k, v) in &map.metadata {
        let _ = writeln!(out, "  meta {}: {}", quote(k), quote(v));
    }
    write_node(map, &map.root, 1, &mut out);
    out.push_str("}\n");
    out
}

fn write_node(map: &RuleMap, id: &str, depth: usize, out: &mut String) {
    let pad = "  ".repeat(depth);
    let Some(node) = map.node(id) else { return };
    match &node.kind {
        NodeKind::Branch(b) => {
            out.push_str(&pad);
            if b.negated {
                out.push_str("not ");
            }
            let _ = write!(out, "{} {}", b.operator.keyword(), node.id);
            if let Some(label) = &b.label {
                let _ = write!(out, " {}", quote(label));
            }
            out.push_str(" {\n");
            for child in &b.children {
                write_node(map, child, depth + 1, out);
            }
            let _ = writeln!(out, "{pad}}}");
        }
        NodeKind::Leaf(l) => {
            let _ = writeln!(out, "{pad}leaf {} {} {{", node.id, quote(&l.question));
            let inner = "  ".repeat(depth + 1);
            match &l.binding {
                LeafBinding::Llm { retry_limit } => {
                    let _ = writeln!(out, "{inner}evaluator: llm");
                    let _ = writeln!(out, "{inner}answer_language: {}", l.answer_language.code());
                    if *retry_limit != DEFAULT_RETRY_LIMIT {
                        let _ = writeln!(out, "{inner}retries: {retry_limit}");
                    }
                }
                LeafBinding::Symbolic { predicate, params } => {
                    if is_ident(predicate) {
                        let _ = write!(out, "{inner}evaluator: symbolic({predicate}");
                    } else {
                        let _ = write!(out, "{inner}evaluator: symbolic({}", quote(predicate));
                    }
                    for p in params {
                        let _ = write!(out, ", {}", quote(p));
                    }
                    out.push_str(")\n");
                    let _ = writeln!(out, "{inner}answer_language: {}", l.answer_language.code());
                }
            }
            if !l.context.is_empty() {
                let _ = writeln!(out, "{inner}context: {}", quote(&l.context));
            }
            let _ = writeln!(out, "{pad}}}");
        }
    }
}
