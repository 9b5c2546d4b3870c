//! Reader and writer for the knowledge-base surface syntax.
//!
//! The reader keeps `;` comment lines and attaches them to the form that
//! follows, so that the natural-language explanations interleaved with the
//! formalised conditions survive parsing. Comments that close a list (no form
//! follows before the `)`) are appended to the enclosing list. Comments after
//! the last top-level form of a document are dropped.

use std::fmt;

use num_bigint::BigInt;
use thiserror::Error;

/// 1-based source position.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default)]
pub struct Span {
    pub line: usize,
    pub column: usize,
}

impl fmt::Display for Span {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}:{}", self.line, self.column)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ReadError {
    #[error("{at}: unbalanced parenthesis, list opened here is never closed")]
    Unbalanced { at: Span },
    #[error("{at}: unterminated string literal")]
    UnterminatedString { at: Span },
    #[error("{at}: stray closing parenthesis")]
    StrayClose { at: Span },
    #[error("{at}: dangling escape character at end of input")]
    DanglingEscape { at: Span },
}

impl ReadError {
    pub fn span(&self) -> Span {
        match self {
            ReadError::Unbalanced { at }
            | ReadError::UnterminatedString { at }
            | ReadError::StrayClose { at }
            | ReadError::DanglingEscape { at } => *at,
        }
    }
}

/// An integer literal. The source lexeme is kept because grant codes such as
/// `01` are compared as strings, never numerically.
#[derive(Debug, Clone)]
pub struct Integer {
    lexeme: String,
    value: BigInt,
}

impl Integer {
    pub fn parse(lexeme: &str) -> Option<Integer> {
        if !is_integer_lexeme(lexeme) {
            return None;
        }
        let value = lexeme.parse::<BigInt>().ok()?;
        Some(Integer { lexeme: lexeme.to_owned(), value })
    }

    pub fn value(&self) -> &BigInt {
        &self.value
    }

    pub fn lexeme(&self) -> &str {
        &self.lexeme
    }
}

impl PartialEq for Integer {
    fn eq(&self, other: &Self) -> bool {
        self.value == other.value
    }
}

impl Eq for Integer {}

fn is_integer_lexeme(s: &str) -> bool {
    let digits = s.strip_prefix(['+', '-']).unwrap_or(s);
    !digits.is_empty() && digits.chars().all(|c| c.is_ascii_digit())
}

#[derive(Debug, Clone)]
pub enum Atom {
    Symbol { package: Option<String>, name: String },
    Keyword(String),
    Str(String),
    Integer(Integer),
}

#[derive(Debug, Clone)]
pub enum SExprKind {
    Atom(Atom),
    List(Vec<SExpr>),
}

/// A node of the syntax tree together with the comment lines directly above it.
#[derive(Debug, Clone)]
pub struct SExpr {
    pub kind: SExprKind,
    pub comments: Vec<String>,
    pub span: Span,
}

/// Unicode-aware case folding used for every name comparison in the DSL.
pub fn fold_case(s: &str) -> String {
    s.to_lowercase()
}

impl PartialEq for Atom {
    fn eq(&self, other: &Self) -> bool {
        match (self, other) {
            (Atom::Symbol { package: p1, name: n1 }, Atom::Symbol { package: p2, name: n2 }) => {
                p1.as_deref().map(fold_case) == p2.as_deref().map(fold_case) && fold_case(n1) == fold_case(n2)
            }
            (Atom::Keyword(a), Atom::Keyword(b)) => fold_case(a) == fold_case(b),
            (Atom::Str(a), Atom::Str(b)) => a == b,
            (Atom::Integer(a), Atom::Integer(b)) => a == b,
            _ => false,
        }
    }
}

impl Eq for Atom {}

impl PartialEq for SExprKind {
    fn eq(&self, other: &Self) -> bool {
        match (self, other) {
            (SExprKind::Atom(a), SExprKind::Atom(b)) => a == b,
            (SExprKind::List(a), SExprKind::List(b)) => a == b,
            _ => false,
        }
    }
}

impl Eq for SExprKind {}

/// Structural equality: kinds and comments, ignoring source positions.
impl PartialEq for SExpr {
    fn eq(&self, other: &Self) -> bool {
        self.kind == other.kind && self.comments == other.comments
    }
}

impl Eq for SExpr {}

impl SExpr {
    pub fn new(kind: SExprKind) -> SExpr {
        SExpr { kind, comments: Vec::new(), span: Span::default() }
    }

    pub fn symbol(name: &str) -> SExpr {
        SExpr::new(SExprKind::Atom(split_symbol(name)))
    }

    pub fn keyword(name: &str) -> SExpr {
        SExpr::new(SExprKind::Atom(Atom::Keyword(name.to_owned())))
    }

    pub fn string(text: &str) -> SExpr {
        SExpr::new(SExprKind::Atom(Atom::Str(text.to_owned())))
    }

    pub fn integer(lexeme: &str) -> Option<SExpr> {
        Integer::parse(lexeme).map(|i| SExpr::new(SExprKind::Atom(Atom::Integer(i))))
    }

    pub fn list(items: Vec<SExpr>) -> SExpr {
        SExpr::new(SExprKind::List(items))
    }

    pub fn with_comments(mut self, comments: Vec<String>) -> SExpr {
        self.comments = comments;
        self
    }

    pub fn as_list(&self) -> Option<&[SExpr]> {
        match &self.kind {
            SExprKind::List(items) => Some(items),
            SExprKind::Atom(_) => None,
        }
    }

    pub fn as_atom(&self) -> Option<&Atom> {
        match &self.kind {
            SExprKind::Atom(a) => Some(a),
            SExprKind::List(_) => None,
        }
    }

    /// `(package, name)` if this node is a symbol.
    pub fn as_symbol(&self) -> Option<(Option<&str>, &str)> {
        match self.as_atom()? {
            Atom::Symbol { package, name } => Some((package.as_deref(), name.as_str())),
            _ => None,
        }
    }

    /// True if this is an unqualified symbol equal (case-insensitively) to `name`.
    pub fn is_symbol_named(&self, name: &str) -> bool {
        matches!(self.as_symbol(), Some((None, n)) if fold_case(n) == fold_case(name))
    }

    pub fn as_str(&self) -> Option<&str> {
        match self.as_atom()? {
            Atom::Str(s) => Some(s),
            _ => None,
        }
    }

    pub fn as_keyword(&self) -> Option<&str> {
        match self.as_atom()? {
            Atom::Keyword(k) => Some(k),
            _ => None,
        }
    }
}

/// Splits a symbol token at its first `:` into package and name.
fn split_symbol(token: &str) -> Atom {
    match token.split_once(':') {
        Some((package, name)) if !package.is_empty() => {
            Atom::Symbol { package: Some(package.to_owned()), name: name.to_owned() }
        }
        _ => Atom::Symbol { package: None, name: token.to_owned() },
    }
}

struct Reader<'a> {
    chars: std::iter::Peekable<std::str::Chars<'a>>,
    line: usize,
    column: usize,
}

enum Token {
    Open,
    Close,
    Comment(String),
    Atom(Atom),
}

impl<'a> Reader<'a> {
    fn new(text: &'a str) -> Self {
        Reader { chars: text.chars().peekable(), line: 1, column: 1 }
    }

    fn pos(&self) -> Span {
        Span { line: self.line, column: self.column }
    }

    fn bump(&mut self) -> Option<char> {
        let c = self.chars.next()?;
        if c == '\n' {
            self.line += 1;
            self.column = 1;
        } else {
            self.column += 1;
        }
        Some(c)
    }

    fn next_token(&mut self) -> Result<Option<(Token, Span)>, ReadError> {
        while let Some(&c) = self.chars.peek() {
            if c.is_whitespace() {
                self.bump();
            } else {
                break;
            }
        }
        let at = self.pos();
        let Some(&c) = self.chars.peek() else {
            return Ok(None);
        };
        let token = match c {
            '(' => {
                self.bump();
                Token::Open
            }
            ')' => {
                self.bump();
                Token::Close
            }
            ';' => {
                while self.chars.peek() == Some(&';') {
                    self.bump();
                }
                let mut text = String::new();
                while let Some(&c) = self.chars.peek() {
                    if c == '\n' {
                        break;
                    }
                    text.push(c);
                    self.bump();
                }
                let text = text.strip_prefix(' ').unwrap_or(&text).trim_end().to_owned();
                Token::Comment(text)
            }
            '"' => {
                self.bump();
                let mut text = String::new();
                loop {
                    match self.bump() {
                        None => return Err(ReadError::UnterminatedString { at }),
                        Some('"') => break,
                        Some('\\') => match self.bump() {
                            None => return Err(ReadError::UnterminatedString { at }),
                            Some('n') => text.push('\n'),
                            Some('t') => text.push('\t'),
                            Some(other) => text.push(other),
                        },
                        Some(other) => text.push(other),
                    }
                }
                Token::Atom(Atom::Str(text))
            }
            _ => Token::Atom(self.read_bare(at)?),
        };
        Ok(Some((token, at)))
    }

    fn read_bare(&mut self, at: Span) -> Result<Atom, ReadError> {
        // `raw` keeps escapes out so that `\:` never splits a package.
        let mut raw = String::new();
        let mut split: Option<usize> = None;
        let mut escaped_any = false;
        while let Some(&c) = self.chars.peek() {
            if c.is_whitespace() || matches!(c, '(' | ')' | '"' | ';') {
                break;
            }
            self.bump();
            if c == '\\' {
                let Some(next) = self.bump() else {
                    return Err(ReadError::DanglingEscape { at });
                };
                escaped_any = true;
                raw.push(next);
                continue;
            }
            if c == ':' && split.is_none() {
                split = Some(raw.len());
            }
            raw.push(c);
        }
        if !escaped_any {
            if let Some(i) = Integer::parse(&raw) {
                return Ok(Atom::Integer(i));
            }
        }
        Ok(match split {
            Some(0) => Atom::Keyword(raw[1..].to_owned()),
            Some(i) => Atom::Symbol { package: Some(raw[..i].to_owned()), name: raw[i + 1..].to_owned() },
            None => Atom::Symbol { package: None, name: raw },
        })
    }
}

/// Reads every top-level form of `text` in order.
pub fn read_all(text: &str) -> Result<Vec<SExpr>, ReadError> {
    let mut reader = Reader::new(text);
    // Each frame: (span of '(', comments of the list itself, children so far).
    let mut stack: Vec<(Span, Vec<String>, Vec<SExpr>)> = Vec::new();
    let mut top = Vec::new();
    let mut pending: Vec<String> = Vec::new();

    while let Some((token, at)) = reader.next_token()? {
        match token {
            Token::Comment(text) => pending.push(text),
            Token::Open => stack.push((at, std::mem::take(&mut pending), Vec::new())),
            Token::Close => {
                let Some((span, mut comments, items)) = stack.pop() else {
                    return Err(ReadError::StrayClose { at });
                };
                comments.append(&mut pending);
                let node = SExpr { kind: SExprKind::List(items), comments, span };
                push_node(&mut stack, &mut top, node);
            }
            Token::Atom(atom) => {
                let node =
                    SExpr { kind: SExprKind::Atom(atom), comments: std::mem::take(&mut pending), span: at };
                push_node(&mut stack, &mut top, node);
            }
        }
    }
    if let Some((span, _, _)) = stack.pop() {
        return Err(ReadError::Unbalanced { at: span });
    }
    Ok(top)
}

fn push_node(stack: &mut [(Span, Vec<String>, Vec<SExpr>)], top: &mut Vec<SExpr>, node: SExpr) {
    match stack.last_mut() {
        Some((_, _, items)) => items.push(node),
        None => top.push(node),
    }
}

/// Reads exactly one form.
pub fn read_one(text: &str) -> Result<Option<SExpr>, ReadError> {
    Ok(read_all(text)?.into_iter().next())
}

fn write_symbol_part(out: &mut String, s: &str, escape_colon: bool) {
    for c in s.chars() {
        if c.is_whitespace() || matches!(c, '(' | ')' | '"' | ';' | '\\') || (escape_colon && c == ':') {
            out.push('\\');
        }
        out.push(c);
    }
}

fn write_atom(out: &mut String, atom: &Atom) {
    match atom {
        Atom::Symbol { package, name } => {
            let start = out.len();
            match package {
                Some(p) => {
                    write_symbol_part(out, p, true);
                    out.push(':');
                    write_symbol_part(out, name, false);
                }
                None => {
                    write_symbol_part(out, name, true);
                    // An unqualified symbol that looks like an integer needs an escape.
                    if is_integer_lexeme(&out[start..]) {
                        out.insert(start, '\\');
                    }
                }
            }
        }
        Atom::Keyword(k) => {
            out.push(':');
            write_symbol_part(out, k, false);
        }
        Atom::Str(s) => {
            out.push('"');
            for c in s.chars() {
                if c == '"' || c == '\\' {
                    out.push('\\');
                }
                out.push(c);
            }
            out.push('"');
        }
        Atom::Integer(i) => out.push_str(i.lexeme()),
    }
}

fn write_comments(out: &mut String, comments: &[String], indent: usize) {
    for line in comments {
        if line.is_empty() {
            out.push_str(";;");
        } else {
            out.push_str(";; ");
            out.push_str(line);
        }
        out.push('\n');
        out.push_str(&" ".repeat(indent));
    }
}

fn write_node(out: &mut String, expr: &SExpr, indent: usize) {
    write_comments(out, &expr.comments, indent);
    match &expr.kind {
        SExprKind::Atom(atom) => write_atom(out, atom),
        SExprKind::List(items) => {
            out.push('(');
            for (i, item) in items.iter().enumerate() {
                if i > 0 {
                    if item.comments.is_empty() {
                        out.push(' ');
                    } else {
                        out.push('\n');
                        out.push_str(&" ".repeat(indent + 2));
                    }
                }
                write_node(out, item, indent + 2);
            }
            out.push(')');
        }
    }
}

/// Canonical text for one form: siblings separated by one space, comments
/// re-emitted as `;;` lines before their node.
pub fn write(expr: &SExpr) -> String {
    let mut out = String::new();
    write_node(&mut out, expr, 0);
    out
}

pub fn write_all(exprs: &[SExpr]) -> String {
    let mut out = String::new();
    for e in exprs {
        out.push_str(&write(e));
        out.push('\n');
    }
    out
}

impl fmt::Display for SExpr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&write(self))
    }
}
