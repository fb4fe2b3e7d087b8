use super::{ParseError, SourceSpan};

#[derive(Debug, Clone, PartialEq, Eq)]
pub(super) enum Tok {
    Ident(String),
    Str(String),
    Int(u64),
    /// `@path` or `@"path"`
    FileRef(String),
    LBrace,
    RBrace,
    LParen,
    RParen,
    Colon,
    Comma,
    Eof,
}

impl Tok {
    pub(super) fn describe(&self) -> String {
        match self {
            Tok::Ident(s) => format!("identifier '{s}'"),
            Tok::Str(_) => "string".into(),
            Tok::Int(n) => format!("integer {n}"),
            Tok::FileRef(p) => format!("file reference @{p}"),
            Tok::LBrace => "'{'".into(),
            Tok::RBrace => "'}'".into(),
            Tok::LParen => "'('".into(),
            Tok::RParen => "')'".into(),
            Tok::Colon => "':'".into(),
            Tok::Comma => "','".into(),
            Tok::Eof => "end of input".into(),
        }
    }
}

#[derive(Debug, Clone)]
pub(super) struct Token {
    pub tok: Tok,
    pub span: SourceSpan,
}

struct Lexer<'a> {
    src: &'a str,
    pos: usize,
    line: usize,
    col: usize,
}

impl<'a> Lexer<'a> {
    fn peek(&self) -> Option<char> {
        self.src[self.pos..].chars().next()
    }

    fn bump(&mut self) -> Option<char> {
        let c = self.peek()?;
        self.pos += c.len_utf8();
        if c == '\n' {
            self.line += 1;
            self.col = 1;
        } else {
            self.col += 1;
        }
        Some(c)
    }

    fn mark(&self) -> (usize, usize, usize) {
        (self.pos, self.line, self.col)
    }

    fn span_from(&self, (start, line, column): (usize, usize, usize)) -> SourceSpan {
        SourceSpan {
            start,
            end: self.pos,
            line,
            column,
        }
    }

    fn skip_trivia(&mut self) {
        while let Some(c) = self.peek() {
            if c.is_whitespace() {
                self.bump();
            } else if c == '#' {
                while let Some(c) = self.peek() {
                    if c == '\n' {
                        break;
                    }
                    self.bump();
                }
            } else {
                break;
            }
        }
    }

    fn string(&mut self, m: (usize, usize, usize)) -> Result<String, ParseError> {
        // opening quote already consumed
        let mut out = String::new();
        loop {
            let esc_mark = self.mark();
            match self.bump() {
                None => return Err(ParseError::new(self.span_from(m), "unterminated string")),
                Some('"') => return Ok(out),
                Some('\\') => match self.bump() {
                    Some('"') => out.push('"'),
                    Some('\\') => out.push('\\'),
                    Some('n') => out.push('\n'),
                    Some('t') => out.push('\t'),
                    Some('r') => out.push('\r'),
                    Some('u') => out.push(self.unicode_escape(esc_mark)?),
                    _ => {
                        return Err(ParseError::new(
                            self.span_from(esc_mark),
                            "unknown escape sequence",
                        ))
                    }
                },
                Some(c) => out.push(c),
            }
        }
    }

    fn unicode_escape(&mut self, m: (usize, usize, usize)) -> Result<char, ParseError> {
        if self.bump() != Some('{') {
            return Err(ParseError::new(self.span_from(m), "expected '{' after \\u"));
        }
        let mut hex = String::new();
        loop {
            match self.bump() {
                Some('}') => break,
                Some(c) if c.is_ascii_hexdigit() && hex.len() < 6 => hex.push(c),
                _ => {
                    return Err(ParseError::new(
                        self.span_from(m),
                        "malformed \\u{...} escape",
                    ))
                }
            }
        }
        u32::from_str_radix(&hex, 16)
            .ok()
            .and_then(char::from_u32)
            .ok_or_else(|| ParseError::new(self.span_from(m), "invalid unicode scalar in escape"))
    }

    fn next_token(&mut self) -> Result<Token, ParseError> {
        self.skip_trivia();
        let m = self.mark();
        let Some(c) = self.bump() else {
            return Ok(Token {
                tok: Tok::Eof,
                span: self.span_from(m),
            });
        };
        let tok = match c {
            '{' => Tok::LBrace,
            '}' => Tok::RBrace,
            '(' => Tok::LParen,
            ')' => Tok::RParen,
            ':' => Tok::Colon,
            ',' => Tok::Comma,
            '"' => Tok::Str(self.string(m)?),
            '@' => {
                if self.peek() == Some('"') {
                    self.bump();
                    Tok::FileRef(self.string(m)?)
                } else {
                    let start = self.pos;
                    while let Some(c) = self.peek() {
                        if c.is_whitespace() || c == '}' || c == '#' {
                            break;
                        }
                        self.bump();
                    }
                    if self.pos == start {
                        return Err(ParseError::new(
                            self.span_from(m),
                            "expected a path after '@'",
                        ));
                    }
                    Tok::FileRef(self.src[start..self.pos].to_owned())
                }
            }
            c if c.is_ascii_digit() => {
                while self.peek().is_some_and(|c| c.is_ascii_digit()) {
                    self.bump();
                }
                let text = &self.src[m.0..self.pos];
                match text.parse() {
                    Ok(n) => Tok::Int(n),
                    Err(_) => {
                        return Err(ParseError::new(self.span_from(m), "integer out of range"))
                    }
                }
            }
            c if c.is_ascii_alphabetic() || c == '_' => {
                while self
                    .peek()
                    .is_some_and(|c| c.is_ascii_alphanumeric() || c == '_')
                {
                    self.bump();
                }
                Tok::Ident(self.src[m.0..self.pos].to_owned())
            }
            other => {
                return Err(ParseError::new(
                    self.span_from(m),
                    format!("unexpected character {other:?}"),
                ))
            }
        };
        Ok(Token {
            tok,
            span: self.span_from(m),
        })
    }
}

pub(super) fn tokenize(src: &str) -> Result<Vec<Token>, ParseError> {
    let mut lx = Lexer {
        src,
        pos: 0,
        line: 1,
        col: 1,
    };
    let mut out = Vec::new();
    loop {
        let t = lx.next_token()?;
        let eof = t.tok == Tok::Eof;
        out.push(t);
        if eof {
            return Ok(out);
        }
    }
}
