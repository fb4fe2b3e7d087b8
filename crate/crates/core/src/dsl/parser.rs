use std::collections::HashMap;
use std::path::Path;

use super::lexer::{tokenize, Tok, Token};
use super::{ParseError, ParseErrorKind, ParseOptions, SourceSpan};
use crate::model::{
    Branch, Language, Leaf, LeafBinding, Node, NodeKind, Operator, RuleMap, DEFAULT_RETRY_LIMIT,
};
use crate::validate::{validate, Severity};

struct Parser<'a> {
    tokens: Vec<Token>,
    pos: usize,
    opts: &'a ParseOptions,
    map: RuleMap,
    spans: HashMap<String, SourceSpan>,
    errors: Vec<ParseError>,
}

type PResult<T> = Result<T, ParseError>;

impl<'a> Parser<'a> {
    fn peek(&self) -> &Token {
        &self.tokens[self.pos]
    }

    fn peek_at(&self, n: usize) -> &Tok {
        let i = (self.pos + n).min(self.tokens.len() - 1);
        &self.tokens[i].tok
    }

    fn advance(&mut self) -> Token {
        let t = self.tokens[self.pos].clone();
        if self.pos < self.tokens.len() - 1 {
            self.pos += 1;
        }
        t
    }

    fn unexpected(&self, expected: &[&str]) -> ParseError {
        let t = self.peek();
        let mut e = ParseError::new(
            t.span,
            format!(
                "expected {}, found {}",
                expected.join(" or "),
                t.tok.describe()
            ),
        );
        e.expected = expected.iter().map(|s| s.to_string()).collect();
        e
    }

    fn expect(&mut self, want: Tok, name: &str) -> PResult<Token> {
        if self.peek().tok == want {
            Ok(self.advance())
        } else {
            Err(self.unexpected(&[name]))
        }
    }

    fn keyword(&mut self, kw: &str) -> PResult<Token> {
        match &self.peek().tok {
            Tok::Ident(s) if s == kw => Ok(self.advance()),
            _ => Err(self.unexpected(&[&format!("'{kw}'")])),
        }
    }

    fn ident(&mut self) -> PResult<(String, SourceSpan)> {
        match &self.peek().tok {
            Tok::Ident(s) => {
                let s = s.clone();
                Ok((s, self.advance().span))
            }
            _ => Err(self.unexpected(&["identifier"])),
        }
    }

    fn string(&mut self) -> PResult<String> {
        match &self.peek().tok {
            Tok::Str(s) => {
                let s = s.clone();
                self.advance();
                Ok(s)
            }
            _ => Err(self.unexpected(&["string"])),
        }
    }

    fn is_kw(&self, kw: &str) -> bool {
        matches!(&self.peek().tok, Tok::Ident(s) if s == kw)
    }

    fn rulemap(&mut self) -> PResult<()> {
        self.keyword("rulemap")?;
        self.map.title = self.string()?;
        self.expect(Tok::LBrace, "'{'")?;
        let mut explicit_id = false;
        loop {
            match (&self.peek().tok, self.peek_at(1)) {
                (Tok::Ident(kw), Tok::Colon) if kw == "id" => {
                    self.advance();
                    self.advance();
                    self.map.id = match &self.peek().tok {
                        Tok::Str(_) => self.string()?,
                        _ => self.ident()?.0,
                    };
                    explicit_id = true;
                }
                (Tok::Ident(kw), Tok::Colon) if kw == "version" => {
                    self.advance();
                    self.advance();
                    match self.peek().tok {
                        Tok::Int(n) => {
                            self.map.version = n;
                            self.advance();
                        }
                        _ => return Err(self.unexpected(&["integer"])),
                    }
                }
                (Tok::Ident(kw), Tok::Str(_)) if kw == "meta" => {
                    self.advance();
                    let key = self.string()?;
                    self.expect(Tok::Colon, "':'")?;
                    let value = self.string()?;
                    self.map.metadata.insert(key, value);
                }
                _ => break,
            }
        }
        if !explicit_id {
            self.map.id = slugify(&self.map.title);
        }
        let root = self.node()?;
        self.map.root = root;
        self.expect(Tok::RBrace, "'}'")?;
        self.expect(Tok::Eof, "end of input")?;
        Ok(())
    }

    fn register(&mut self, node: Node, span: SourceSpan) {
        if let Some(first) = self.spans.get(&node.id) {
            let mut e = ParseError::new(span, format!("duplicate node id '{}'", node.id));
            e.kind = ParseErrorKind::DuplicateId;
            e.related = Some(*first);
            self.errors.push(e);
            return;
        }
        self.spans.insert(node.id.clone(), span);
        self.map.insert(node);
    }

    fn node(&mut self) -> PResult<String> {
        let start = self.peek().span;
        let negated = if self.is_kw("not") {
            self.advance();
            true
        } else {
            false
        };
        let op = match &self.peek().tok {
            Tok::Ident(s) if s == "leaf" && !negated => return self.leaf(),
            Tok::Ident(s) => Operator::from_keyword(s),
            _ => None,
        };
        let Some(operator) = op else {
            return Err(if negated {
                self.unexpected(&["'all'", "'any'", "'one'"])
            } else {
                self.unexpected(&["'all'", "'any'", "'one'", "'not'", "'leaf'"])
            });
        };
        self.advance();
        let (id, id_span) = self.ident()?;
        let label = match self.peek().tok {
            Tok::Str(_) => Some(self.string()?),
            _ => None,
        };
        self.expect(Tok::LBrace, "'{'")?;
        let mut children = Vec::new();
        while self.peek().tok != Tok::RBrace {
            if self.peek().tok == Tok::Eof {
                return Err(self.unexpected(&["node", "'}'"]));
            }
            children.push(self.node()?);
        }
        if children.is_empty() {
            return Err(ParseError::new(
                self.peek().span,
                format!("branch '{id}' needs at least one child"),
            ));
        }
        self.advance();
        let span = SourceSpan {
            start: start.start,
            end: id_span.end,
            line: start.line,
            column: start.column,
        };
        self.register(
            Node {
                id: id.clone(),
                kind: NodeKind::Branch(Branch {
                    label,
                    operator,
                    negated,
                    children,
                }),
            },
            span,
        );
        Ok(id)
    }

    fn leaf(&mut self) -> PResult<String> {
        let kw = self.keyword("leaf")?;
        let (id, id_span) = self.ident()?;
        let question = self.string()?;
        let mut leaf = Leaf::llm(question);
        if self.peek().tok == Tok::LBrace {
            self.advance();
            let mut retry_limit = DEFAULT_RETRY_LIMIT;
            while self.peek().tok != Tok::RBrace {
                self.prop(&mut leaf, &mut retry_limit)?;
            }
            self.advance();
            if let LeafBinding::Llm { retry_limit: r } = &mut leaf.binding {
                *r = retry_limit;
            }
        }
        let span = SourceSpan {
            start: kw.span.start,
            end: id_span.end,
            line: kw.span.line,
            column: kw.span.column,
        };
        self.register(Node::leaf(id.clone(), leaf), span);
        Ok(id)
    }

    fn prop(&mut self, leaf: &mut Leaf, retry_limit: &mut u32) -> PResult<()> {
        let (name, name_span) = match &self.peek().tok {
            Tok::Ident(_) => self.ident()?,
            _ => {
                return Err(self.unexpected(&[
                    "'evaluator'",
                    "'context'",
                    "'answer_language'",
                    "'retries'",
                    "'}'",
                ]))
            }
        };
        self.expect(Tok::Colon, "':'")?;
        match name.as_str() {
            "evaluator" => {
                let (kind, span) = self.ident()?;
                match kind.as_str() {
                    "llm" => {
                        leaf.binding = LeafBinding::Llm {
                            retry_limit: DEFAULT_RETRY_LIMIT,
                        }
                    }
                    "symbolic" => {
                        self.expect(Tok::LParen, "'('")?;
                        let predicate = match self.peek().tok {
                            Tok::Str(_) => self.string()?,
                            _ => self.ident()?.0,
                        };
                        let mut params = Vec::new();
                        while self.peek().tok == Tok::Comma {
                            self.advance();
                            params.push(self.string()?);
                        }
                        self.expect(Tok::RParen, "')'")?;
                        leaf.binding = LeafBinding::Symbolic { predicate, params };
                    }
                    _ => {
                        let mut e = ParseError::new(span, format!("unknown evaluator '{kind}'"));
                        e.expected = vec!["'llm'".into(), "'symbolic'".into()];
                        return Err(e);
                    }
                }
            }
            "context" => {
                leaf.context = match self.peek().tok.clone() {
                    Tok::Str(_) => self.string()?,
                    Tok::FileRef(path) => {
                        let span = self.advance().span;
                        self.read_context(&path, span)?
                    }
                    _ => return Err(self.unexpected(&["string", "'@' file reference"])),
                }
            }
            "answer_language" => {
                let (code, span) = self.ident()?;
                leaf.answer_language = Language::from_code(&code).ok_or_else(|| {
                    let mut e =
                        ParseError::new(span, format!("unsupported answer language '{code}'"));
                    e.expected = vec!["'de'".into(), "'en'".into()];
                    e
                })?;
            }
            "retries" => match self.peek().tok {
                Tok::Int(n) => {
                    let span = self.advance().span;
                    *retry_limit =
                        u32::try_from(n).ok().filter(|n| *n <= 100).ok_or_else(|| {
                            ParseError::new(span, "retries must be between 0 and 100")
                        })?;
                }
                _ => return Err(self.unexpected(&["integer"])),
            },
            other => {
                let mut e = ParseError::new(name_span, format!("unknown leaf property '{other}'"));
                e.expected = ["evaluator", "context", "answer_language", "retries"]
                    .iter()
                    .map(|s| format!("'{s}'"))
                    .collect();
                return Err(e);
            }
        }
        Ok(())
    }

    fn read_context(&self, path: &str, span: SourceSpan) -> PResult<String> {
        let full = match &self.opts.base_dir {
            Some(base) => base.join(path),
            None => Path::new(path).to_path_buf(),
        };
        std::fs::read_to_string(&full).map_err(|e| {
            let mut err = ParseError::new(
                span,
                format!("cannot read context file {}: {e}", full.display()),
            );
            err.kind = ParseErrorKind::Io;
            err
        })
    }
}

/// Lowercase ASCII identifier derived from a title.
pub(super) fn slugify(title: &str) -> String {
    let mut out = String::new();
    for c in title.chars() {
        let c = match c {
            'ä' | 'Ä' => "ae",
            'ö' | 'Ö' => "oe",
            'ü' | 'Ü' => "ue",
            'ß' => "ss",
            c if c.is_ascii_alphanumeric() => {
                out.push(c.to_ascii_lowercase());
                continue;
            }
            _ => "_",
        };
        if c == "_" {
            if !out.is_empty() && !out.ends_with('_') {
                out.push('_');
            }
        } else {
            out.push_str(c);
        }
    }
    let out = out.trim_end_matches('_').to_owned();
    match out.chars().next() {
        None => "rulemap".into(),
        Some(c) if c.is_ascii_digit() => format!("r_{out}"),
        _ => out,
    }
}

pub(super) fn parse_tokens(src: &str, opts: &ParseOptions) -> Result<RuleMap, Vec<ParseError>> {
    let tokens = tokenize(src).map_err(|e| vec![e])?;
    let mut p = Parser {
        tokens,
        pos: 0,
        opts,
        map: RuleMap::new("", "", ""),
        spans: HashMap::new(),
        errors: Vec::new(),
    };
    if let Err(e) = p.rulemap() {
        p.errors.push(e);
        return Err(p.errors);
    }
    if !p.errors.is_empty() {
        return Err(p.errors);
    }

    let report = validate(&p.map);
    let errors: Vec<ParseError> = report
        .issues
        .iter()
        .filter(|i| i.severity == Severity::Error)
        .map(|i| {
            let span = i
                .node_id
                .as_ref()
                .and_then(|id| p.spans.get(id).copied())
                .unwrap_or(SourceSpan {
                    start: 0,
                    end: 0,
                    line: 1,
                    column: 1,
                });
            let mut e = ParseError::new(span, i.message.clone());
            e.kind = ParseErrorKind::Invalid;
            e
        })
        .collect();
    if errors.is_empty() {
        Ok(p.map)
    } else {
        Err(errors)
    }
}
