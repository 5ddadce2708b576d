//! RDF Turtle output for knowledge graphs, and a parser for reading it back.
//!
//! Every edge is reified as a link resource so its weight, lag and p-value
//! can be attached. Statements are sorted by subject, predicate and object
//! IRI/lexical form, so identical graphs give identical text.
//!
//! Besides the core vocabulary, node attributes and the provenance config
//! snapshot are written as `kg:attr` / `kg:config` literals of the form
//! `key=value`. The integration report and the filter query are carried by
//! JSON only.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use kgforge_core::kg::{Edge, KnowledgeGraph, Node, Provenance};
use kgforge_core::CorrelationMethod;

pub const KG: &str = "https://example.org/kgforge/vocab#";
pub const XSD: &str = "http://www.w3.org/2001/XMLSchema#";
pub const RDF_TYPE: &str = "http://www.w3.org/1999/02/22-rdf-syntax-ns#type";
pub const DEFAULT_BASE_IRI: &str = "https://example.org/kgforge/data/";

#[derive(Debug, PartialEq, thiserror::Error)]
pub enum TurtleError {
    #[error("base IRI `{0}` must be absolute and end in `/` or `#`")]
    InvalidBase(String),
    #[error("line {line}: {message}")]
    Syntax { line: usize, message: String },
    #[error("graph structure: {0}")]
    Structure(String),
}

#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord)]
pub enum Term {
    Iri(String),
    Blank(String),
    Literal {
        value: String,
        datatype: Option<String>,
        lang: Option<String>,
    },
}

impl Term {
    fn typed(value: impl Into<String>, datatype: &str) -> Self {
        Term::Literal {
            value: value.into(),
            datatype: Some(format!("{XSD}{datatype}")),
            lang: None,
        }
    }

    fn plain(value: impl Into<String>) -> Self {
        Term::Literal {
            value: value.into(),
            datatype: None,
            lang: None,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord)]
pub struct Triple {
    pub subject: Term,
    pub predicate: String,
    pub object: Term,
}

fn kg(local: &str) -> String {
    format!("{KG}{local}")
}

/// Checks that `base` is an absolute IRI ending in `/` or `#`.
pub fn validate_base(base: &str) -> Result<(), TurtleError> {
    let bad = || TurtleError::InvalidBase(base.into());
    let (scheme, rest) = base.split_once(':').ok_or_else(bad)?;
    let scheme_ok = scheme
        .chars()
        .next()
        .is_some_and(|c| c.is_ascii_alphabetic())
        && scheme
            .chars()
            .all(|c| c.is_ascii_alphanumeric() || "+-.".contains(c));
    let chars_ok = !base
        .chars()
        .any(|c| c.is_whitespace() || c.is_control() || "<>\"{}|^`\\".contains(c));
    if scheme_ok && chars_ok && !rest.is_empty() && (base.ends_with('/') || base.ends_with('#')) {
        Ok(())
    } else {
        Err(bad())
    }
}

fn pct_encode(s: &str) -> String {
    let mut out = String::new();
    for b in s.bytes() {
        if b.is_ascii_alphanumeric() || b"-_.~".contains(&b) {
            out.push(b as char);
        } else {
            let _ = write!(out, "%{b:02X}");
        }
    }
    out
}

fn pct_decode(s: &str) -> Option<String> {
    let bytes = s.as_bytes();
    let mut out = Vec::with_capacity(bytes.len());
    let mut i = 0;
    while i < bytes.len() {
        if bytes[i] == b'%' {
            let hex = s.get(i + 1..i + 3)?;
            out.push(u8::from_str_radix(hex, 16).ok()?);
            i += 3;
        } else {
            out.push(bytes[i]);
            i += 1;
        }
    }
    String::from_utf8(out).ok()
}

fn pair_literal(key: &str, value: &str) -> Term {
    let key = key.replace('%', "%25").replace('=', "%3D");
    Term::plain(format!("{key}={value}"))
}

fn split_pair(s: &str) -> Option<(String, String)> {
    let (k, v) = s.split_once('=')?;
    Some((pct_decode(k)?, v.to_string()))
}

/// Lexical form of an `xsd:double`.
pub fn double_lexical(v: f64) -> String {
    if v.is_nan() {
        "NaN".into()
    } else if v.is_infinite() {
        if v > 0.0 { "INF" } else { "-INF" }.into()
    } else {
        format!("{v:?}")
    }
}

fn parse_double(s: &str) -> Option<f64> {
    match s {
        "NaN" => Some(f64::NAN),
        "INF" | "+INF" => Some(f64::INFINITY),
        "-INF" => Some(f64::NEG_INFINITY),
        _ => s.parse().ok(),
    }
}

/// Statements describing `graph`, in canonical order.
pub fn triples(graph: &KnowledgeGraph, base: &str) -> Result<Vec<Triple>, TurtleError> {
    validate_base(base)?;
    let param = |id: &str| Term::Iri(format!("{base}param/{}", pct_encode(id)));
    let mut out = Vec::new();
    let mut push = |s: &Term, p: String, o: Term| {
        out.push(Triple {
            subject: s.clone(),
            predicate: p,
            object: o,
        })
    };
    for n in &graph.nodes {
        let s = param(&n.id);
        push(&s, RDF_TYPE.into(), Term::Iri(kg("Parameter")));
        push(&s, kg("label"), Term::plain(n.label.clone()));
        for (k, v) in &n.attrs {
            push(&s, kg("attr"), pair_literal(k, v));
        }
    }
    for e in &graph.edges {
        match e {
            Edge::Causal {
                a,
                b,
                weight,
                lag,
                p_value,
            } => {
                let s = Term::Iri(format!(
                    "{base}link/causal/{}/{}/{lag}",
                    pct_encode(a),
                    pct_encode(b)
                ));
                push(&s, RDF_TYPE.into(), Term::Iri(kg("CausalLink")));
                push(&s, kg("source"), param(a));
                push(&s, kg("target"), param(b));
                push(&s, kg("lag"), Term::typed(lag.to_string(), "integer"));
                push(
                    &s,
                    kg("fStatistic"),
                    Term::typed(double_lexical(*weight), "double"),
                );
                push(
                    &s,
                    kg("pValue"),
                    Term::typed(double_lexical(*p_value), "double"),
                );
            }
            Edge::Correlation {
                a,
                b,
                weight,
                method,
            } => {
                let s = Term::Iri(format!(
                    "{base}link/correlation/{}/{}/{}",
                    method.as_str(),
                    pct_encode(a),
                    pct_encode(b)
                ));
                push(&s, RDF_TYPE.into(), Term::Iri(kg("CorrelationLink")));
                push(&s, kg("memberA"), param(a));
                push(&s, kg("memberB"), param(b));
                push(&s, kg("method"), Term::plain(method.as_str()));
                push(
                    &s,
                    kg("coefficient"),
                    Term::typed(double_lexical(*weight), "double"),
                );
            }
        }
    }
    let prov = Term::Iri(format!("{base}provenance"));
    let p = &graph.provenance;
    push(&prov, RDF_TYPE.into(), Term::Iri(kg("Provenance")));
    push(&prov, kg("dataset"), Term::plain(p.dataset.clone()));
    if !p.created_at.is_empty() {
        push(
            &prov,
            kg("createdAt"),
            Term::typed(p.created_at.clone(), "dateTime"),
        );
    }
    for (k, v) in &p.config {
        push(&prov, kg("config"), pair_literal(k, v));
    }
    out.sort_by(|x, y| {
        (term_key(&x.subject), &x.predicate, term_key(&x.object)).cmp(&(
            term_key(&y.subject),
            &y.predicate,
            term_key(&y.object),
        ))
    });
    out.dedup();
    Ok(out)
}

fn term_key(t: &Term) -> String {
    match t {
        Term::Iri(i) => i.clone(),
        Term::Blank(b) => format!("_:{b}"),
        Term::Literal {
            value,
            datatype,
            lang,
        } => format!(
            "\"{value}\"{}{}",
            datatype.as_deref().unwrap_or(""),
            lang.as_deref().unwrap_or("")
        ),
    }
}

fn escape_string(s: &str) -> String {
    let mut out = String::with_capacity(s.len() + 2);
    out.push('"');
    for c in s.chars() {
        match c {
            '"' => out.push_str("\\\""),
            '\\' => out.push_str("\\\\"),
            '\n' => out.push_str("\\n"),
            '\r' => out.push_str("\\r"),
            '\t' => out.push_str("\\t"),
            c if c.is_control() => {
                let _ = write!(out, "\\u{:04X}", c as u32);
            }
            c => out.push(c),
        }
    }
    out.push('"');
    out
}

fn write_iri(out: &mut String, iri: &str) {
    if iri == RDF_TYPE {
        out.push('a');
    } else if let Some(local) = iri.strip_prefix(KG).filter(|l| is_simple_local(l)) {
        out.push_str("kg:");
        out.push_str(local);
    } else if let Some(local) = iri.strip_prefix(XSD).filter(|l| is_simple_local(l)) {
        out.push_str("xsd:");
        out.push_str(local);
    } else {
        out.push('<');
        out.push_str(iri);
        out.push('>');
    }
}

fn is_simple_local(s: &str) -> bool {
    s.chars().next().is_some_and(|c| c.is_ascii_alphabetic())
        && s.chars().all(|c| c.is_ascii_alphanumeric())
}

fn write_term(out: &mut String, t: &Term) {
    match t {
        Term::Iri(i) => write_iri(out, i),
        Term::Blank(b) => {
            out.push_str("_:");
            out.push_str(b);
        }
        Term::Literal {
            value,
            datatype,
            lang,
        } => {
            out.push_str(&escape_string(value));
            if let Some(l) = lang {
                out.push('@');
                out.push_str(l);
            } else if let Some(d) = datatype {
                out.push_str("^^");
                write_iri(out, d);
            }
        }
    }
}

/// Serialises `graph` as Turtle with link resources under `base`.
pub fn to_turtle(graph: &KnowledgeGraph, base: &str) -> Result<String, TurtleError> {
    let triples = triples(graph, base)?;
    let mut out = String::new();
    out.push_str(&format!("@prefix kg: <{KG}> .\n"));
    out.push_str(&format!("@prefix xsd: <{XSD}> .\n"));
    let mut i = 0;
    while i < triples.len() {
        let subject = &triples[i].subject;
        out.push('\n');
        write_term(&mut out, subject);
        let mut first = true;
        while i < triples.len() && &triples[i].subject == subject {
            out.push_str(if first { " " } else { " ;\n    " });
            first = false;
            write_iri(&mut out, &triples[i].predicate);
            out.push(' ');
            write_term(&mut out, &triples[i].object);
            i += 1;
        }
        out.push_str(" .\n");
    }
    Ok(out)
}

#[derive(Clone, Debug, PartialEq)]
enum Token {
    Iri(String),
    PName(String, String),
    Blank(String),
    Str(String),
    LangTag(String),
    Number(String),
    Bool(bool),
    A,
    Prefix,
    Base,
    SparqlPrefix,
    SparqlBase,
    DatatypeMark,
    Dot,
    Semicolon,
    Comma,
}

struct Lexer {
    chars: Vec<char>,
    pos: usize,
    line: usize,
}

impl Lexer {
    fn new(text: &str) -> Self {
        Self {
            chars: text.chars().collect(),
            pos: 0,
            line: 1,
        }
    }

    fn err(&self, message: impl Into<String>) -> TurtleError {
        TurtleError::Syntax {
            line: self.line,
            message: message.into(),
        }
    }

    fn peek(&self) -> Option<char> {
        self.chars.get(self.pos).copied()
    }

    fn peek_at(&self, ahead: usize) -> Option<char> {
        self.chars.get(self.pos + ahead).copied()
    }

    fn bump(&mut self) -> Option<char> {
        let c = self.peek()?;
        self.pos += 1;
        if c == '\n' {
            self.line += 1;
        }
        Some(c)
    }

    fn skip_space(&mut self) {
        while let Some(c) = self.peek() {
            if c.is_whitespace() {
                self.bump();
            } else if c == '#' {
                while let Some(c) = self.bump() {
                    if c == '\n' {
                        break;
                    }
                }
            } else {
                break;
            }
        }
    }

    fn unicode(&mut self, len: usize) -> Result<char, TurtleError> {
        let hex: String = (0..len).filter_map(|_| self.bump()).collect();
        u32::from_str_radix(&hex, 16)
            .ok()
            .and_then(char::from_u32)
            .ok_or_else(|| self.err(format!("bad unicode escape `{hex}`")))
    }

    fn iri(&mut self) -> Result<String, TurtleError> {
        let mut s = String::new();
        loop {
            match self.bump() {
                Some('>') => return Ok(s),
                Some('\\') => match self.bump() {
                    Some('u') => s.push(self.unicode(4)?),
                    Some('U') => s.push(self.unicode(8)?),
                    _ => return Err(self.err("bad escape in IRI")),
                },
                Some(c) if c.is_whitespace() || "<\"{}|^`".contains(c) => {
                    return Err(self.err(format!("illegal character `{c}` in IRI")))
                }
                Some(c) => s.push(c),
                None => return Err(self.err("unterminated IRI")),
            }
        }
    }

    fn string(&mut self, quote: char) -> Result<String, TurtleError> {
        let long = self.peek() == Some(quote) && self.peek_at(1) == Some(quote);
        if long {
            self.bump();
            self.bump();
        }
        let mut s = String::new();
        loop {
            let c = self.bump().ok_or_else(|| self.err("unterminated string"))?;
            if c == quote {
                if !long {
                    return Ok(s);
                }
                if self.peek() == Some(quote) && self.peek_at(1) == Some(quote) {
                    self.bump();
                    self.bump();
                    return Ok(s);
                }
                s.push(c);
            } else if c == '\\' {
                match self.bump() {
                    Some('t') => s.push('\t'),
                    Some('b') => s.push('\u{8}'),
                    Some('n') => s.push('\n'),
                    Some('r') => s.push('\r'),
                    Some('f') => s.push('\u{c}'),
                    Some('"') => s.push('"'),
                    Some('\'') => s.push('\''),
                    Some('\\') => s.push('\\'),
                    Some('u') => s.push(self.unicode(4)?),
                    Some('U') => s.push(self.unicode(8)?),
                    _ => return Err(self.err("bad string escape")),
                }
            } else if !long && (c == '\n' || c == '\r') {
                return Err(self.err("line break in short string"));
            } else {
                s.push(c);
            }
        }
    }

    /// Name characters; a final `.` is left for the statement terminator.
    fn word(&mut self) -> String {
        let start = self.pos;
        while let Some(c) = self.peek() {
            if c.is_alphanumeric() || "_-:.%".contains(c) {
                self.pos += 1;
            } else {
                break;
            }
        }
        while self.pos > start && self.chars[self.pos - 1] == '.' {
            self.pos -= 1;
        }
        self.chars[start..self.pos].iter().collect()
    }

    fn number(&mut self) -> String {
        let start = self.pos;
        if matches!(self.peek(), Some('+' | '-')) {
            self.pos += 1;
        }
        while let Some(c) = self.peek() {
            let exponent_sign =
                matches!(c, '+' | '-') && matches!(self.chars.get(self.pos - 1), Some('e' | 'E'));
            let dot = c == '.' && self.peek_at(1).is_some_and(|d| d.is_ascii_digit());
            if c.is_ascii_digit() || matches!(c, 'e' | 'E') || exponent_sign || dot {
                self.pos += 1;
            } else {
                break;
            }
        }
        self.chars[start..self.pos].iter().collect()
    }

    fn next(&mut self) -> Result<Option<Token>, TurtleError> {
        self.skip_space();
        let Some(c) = self.peek() else {
            return Ok(None);
        };
        let tok = match c {
            '<' => {
                self.bump();
                Token::Iri(self.iri()?)
            }
            '"' | '\'' => {
                self.bump();
                Token::Str(self.string(c)?)
            }
            '.' if !self.peek_at(1).is_some_and(|d| d.is_ascii_digit()) => {
                self.bump();
                Token::Dot
            }
            ';' => {
                self.bump();
                Token::Semicolon
            }
            ',' => {
                self.bump();
                Token::Comma
            }
            '^' if self.peek_at(1) == Some('^') => {
                self.bump();
                self.bump();
                Token::DatatypeMark
            }
            '@' => {
                self.bump();
                let w = self.word();
                match w.as_str() {
                    "prefix" => Token::Prefix,
                    "base" => Token::Base,
                    "" => return Err(self.err("empty directive")),
                    _ => Token::LangTag(w),
                }
            }
            '_' if self.peek_at(1) == Some(':') => {
                self.bump();
                self.bump();
                Token::Blank(self.word())
            }
            c if c.is_ascii_digit() || matches!(c, '+' | '-' | '.') => Token::Number(self.number()),
            '[' | ']' | '(' | ')' => {
                return Err(self.err(format!(
                    "`{c}` collections and anonymous nodes are not supported"
                )))
            }
            _ => {
                let w = self.word();
                if w.is_empty() {
                    return Err(self.err(format!("unexpected character `{c}`")));
                }
                match w.as_str() {
                    "a" => Token::A,
                    "true" => Token::Bool(true),
                    "false" => Token::Bool(false),
                    _ if w.eq_ignore_ascii_case("prefix") => Token::SparqlPrefix,
                    _ if w.eq_ignore_ascii_case("base") => Token::SparqlBase,
                    _ => match w.split_once(':') {
                        Some((p, l)) => Token::PName(p.into(), l.into()),
                        None => return Err(self.err(format!("unexpected word `{w}`"))),
                    },
                }
            }
        };
        Ok(Some(tok))
    }
}

struct Parser {
    tokens: Vec<(Token, usize)>,
    pos: usize,
    prefixes: BTreeMap<String, String>,
    base: Option<String>,
    out: Vec<Triple>,
}

impl Parser {
    fn err(&self, message: impl Into<String>) -> TurtleError {
        let line = self
            .tokens
            .get(self.pos.min(self.tokens.len().saturating_sub(1)))
            .map_or(0, |t| t.1);
        TurtleError::Syntax {
            line,
            message: message.into(),
        }
    }

    fn peek(&self) -> Option<&Token> {
        self.tokens.get(self.pos).map(|t| &t.0)
    }

    fn next(&mut self) -> Result<Token, TurtleError> {
        let t = self
            .tokens
            .get(self.pos)
            .map(|t| t.0.clone())
            .ok_or_else(|| self.err("unexpected end of input"))?;
        self.pos += 1;
        Ok(t)
    }

    fn expect(&mut self, want: Token) -> Result<(), TurtleError> {
        let got = self.next()?;
        if got == want {
            Ok(())
        } else {
            Err(self.err(format!("expected {want:?}, found {got:?}")))
        }
    }

    fn resolve(&self, iri: String) -> String {
        match &self.base {
            Some(b) if !iri.contains(':') => format!("{b}{iri}"),
            _ => iri,
        }
    }

    fn expand(&self, prefix: &str, local: &str) -> Result<String, TurtleError> {
        let ns = self
            .prefixes
            .get(prefix)
            .ok_or_else(|| self.err(format!("undeclared prefix `{prefix}:`")))?;
        let local = local.replace('\\', "");
        Ok(format!("{ns}{local}"))
    }

    fn iri_token(&mut self) -> Result<String, TurtleError> {
        match self.next()? {
            Token::Iri(i) => Ok(self.resolve(i)),
            Token::PName(p, l) => self.expand(&p, &l),
            other => Err(self.err(format!("expected IRI, found {other:?}"))),
        }
    }

    fn directive(&mut self, sparql: bool) -> Result<(), TurtleError> {
        match self.next()? {
            Token::PName(p, l) if l.is_empty() => {
                let Token::Iri(ns) = self.next()? else {
                    return Err(self.err("prefix needs an IRI"));
                };
                let ns = self.resolve(ns);
                self.prefixes.insert(p, ns);
            }
            other => return Err(self.err(format!("bad prefix declaration {other:?}"))),
        }
        if !sparql {
            self.expect(Token::Dot)?;
        }
        Ok(())
    }

    fn object(&mut self) -> Result<Term, TurtleError> {
        match self.next()? {
            Token::Iri(i) => Ok(Term::Iri(self.resolve(i))),
            Token::PName(p, l) => Ok(Term::Iri(self.expand(&p, &l)?)),
            Token::Blank(b) => Ok(Term::Blank(b)),
            Token::Str(value) => match self.peek() {
                Some(Token::DatatypeMark) => {
                    self.pos += 1;
                    let dt = self.iri_token()?;
                    Ok(Term::Literal {
                        value,
                        datatype: Some(dt),
                        lang: None,
                    })
                }
                Some(Token::LangTag(_)) => {
                    let Token::LangTag(lang) = self.next()? else {
                        unreachable!()
                    };
                    Ok(Term::Literal {
                        value,
                        datatype: None,
                        lang: Some(lang),
                    })
                }
                _ => Ok(Term::plain(value)),
            },
            Token::Number(n) => {
                let dt = if n.contains(['e', 'E']) {
                    "double"
                } else if n.contains('.') {
                    "decimal"
                } else {
                    "integer"
                };
                Ok(Term::typed(n, dt))
            }
            Token::Bool(b) => Ok(Term::typed(b.to_string(), "boolean")),
            other => Err(self.err(format!("expected object, found {other:?}"))),
        }
    }

    fn statement(&mut self) -> Result<(), TurtleError> {
        let subject = match self.next()? {
            Token::Iri(i) => Term::Iri(self.resolve(i)),
            Token::PName(p, l) => Term::Iri(self.expand(&p, &l)?),
            Token::Blank(b) => Term::Blank(b),
            other => return Err(self.err(format!("expected subject, found {other:?}"))),
        };
        loop {
            let predicate = match self.peek() {
                Some(Token::A) => {
                    self.pos += 1;
                    RDF_TYPE.to_string()
                }
                _ => self.iri_token()?,
            };
            loop {
                let object = self.object()?;
                self.out.push(Triple {
                    subject: subject.clone(),
                    predicate: predicate.clone(),
                    object,
                });
                if self.peek() == Some(&Token::Comma) {
                    self.pos += 1;
                } else {
                    break;
                }
            }
            match self.next()? {
                Token::Dot => return Ok(()),
                Token::Semicolon => {
                    while self.peek() == Some(&Token::Semicolon) {
                        self.pos += 1;
                    }
                    if self.peek() == Some(&Token::Dot) {
                        self.pos += 1;
                        return Ok(());
                    }
                }
                other => return Err(self.err(format!("expected `;` or `.`, found {other:?}"))),
            }
        }
    }
}

/// Parses Turtle text into triples. Supports prefix and base directives,
/// IRIs, prefixed names, blank node labels, literals with language tags or
/// datatypes, numbers and booleans. Collections and `[ ]` nodes are
/// rejected.
pub fn parse_triples(text: &str) -> Result<Vec<Triple>, TurtleError> {
    let mut lexer = Lexer::new(text);
    let mut tokens = Vec::new();
    loop {
        let line = lexer.line;
        match lexer.next()? {
            Some(t) => tokens.push((t, line)),
            None => break,
        }
    }
    let mut p = Parser {
        tokens,
        pos: 0,
        prefixes: BTreeMap::new(),
        base: None,
        out: Vec::new(),
    };
    while let Some(t) = p.peek().cloned() {
        match t {
            Token::Prefix => {
                p.pos += 1;
                p.directive(false)?;
            }
            Token::SparqlPrefix => {
                p.pos += 1;
                p.directive(true)?;
            }
            Token::Base | Token::SparqlBase => {
                p.pos += 1;
                let Token::Iri(b) = p.next()? else {
                    return Err(p.err("base needs an IRI"));
                };
                p.base = Some(b);
                if t == Token::Base {
                    p.expect(Token::Dot)?;
                }
            }
            _ => p.statement()?,
        }
    }
    Ok(p.out)
}

fn literal_value(t: &Term) -> Option<&str> {
    match t {
        Term::Literal { value, .. } => Some(value),
        _ => None,
    }
}

/// Rebuilds a graph from Turtle produced by [`to_turtle`].
pub fn from_turtle(text: &str) -> Result<KnowledgeGraph, TurtleError> {
    let triples = parse_triples(text)?;
    let mut subjects: BTreeMap<Term, BTreeMap<String, Vec<Term>>> = BTreeMap::new();
    for t in triples {
        subjects
            .entry(t.subject)
            .or_default()
            .entry(t.predicate)
            .or_default()
            .push(t.object);
    }
    let bad = |m: String| TurtleError::Structure(m);
    let type_of = |props: &BTreeMap<String, Vec<Term>>| -> Option<String> {
        props.get(RDF_TYPE).and_then(|v| match v.first() {
            Some(Term::Iri(i)) => i.strip_prefix(KG).map(String::from),
            _ => None,
        })
    };
    let one = |props: &BTreeMap<String, Vec<Term>>, local: &str| -> Result<Term, TurtleError> {
        match props.get(&kg(local)).map(Vec::as_slice) {
            Some([t]) => Ok(t.clone()),
            _ => Err(TurtleError::Structure(format!(
                "expected exactly one kg:{local}"
            ))),
        }
    };
    let double = |props: &BTreeMap<String, Vec<Term>>, local: &str| -> Result<f64, TurtleError> {
        let t = one(props, local)?;
        literal_value(&t)
            .and_then(parse_double)
            .ok_or_else(|| TurtleError::Structure(format!("kg:{local} is not a double")))
    };

    let mut node_of: BTreeMap<String, String> = BTreeMap::new();
    let mut nodes = Vec::new();
    for (subject, props) in &subjects {
        if type_of(props).as_deref() != Some("Parameter") {
            continue;
        }
        let Term::Iri(iri) = subject else {
            return Err(bad("parameter without an IRI".into()));
        };
        let id = iri
            .rsplit('/')
            .next()
            .and_then(pct_decode)
            .ok_or_else(|| bad(format!("cannot derive node id from <{iri}>")))?;
        let label = literal_value(&one(props, "label")?)
            .ok_or_else(|| bad("kg:label must be a literal".into()))?
            .to_string();
        let mut attrs = BTreeMap::new();
        for t in props.get(&kg("attr")).into_iter().flatten() {
            let (k, v) = literal_value(t)
                .and_then(split_pair)
                .ok_or_else(|| bad("kg:attr must be `key=value`".into()))?;
            attrs.insert(k, v);
        }
        node_of.insert(iri.clone(), id.clone());
        nodes.push(Node { id, label, attrs });
    }
    let endpoint =
        |props: &BTreeMap<String, Vec<Term>>, local: &str| -> Result<String, TurtleError> {
            match one(props, local)? {
                Term::Iri(i) => node_of.get(&i).cloned().ok_or_else(|| {
                    TurtleError::Structure(format!("kg:{local} <{i}> is not a parameter"))
                }),
                _ => Err(TurtleError::Structure(format!("kg:{local} must be an IRI"))),
            }
        };

    let mut edges = Vec::new();
    let mut provenance = Provenance::default();
    for props in subjects.values() {
        match type_of(props).as_deref() {
            Some("CausalLink") => {
                let lag = literal_value(&one(props, "lag")?)
                    .and_then(|v| v.parse::<u32>().ok())
                    .ok_or_else(|| bad("kg:lag is not a non-negative integer".into()))?;
                edges.push(Edge::Causal {
                    a: endpoint(props, "source")?,
                    b: endpoint(props, "target")?,
                    weight: double(props, "fStatistic")?,
                    lag,
                    p_value: double(props, "pValue")?,
                });
            }
            Some("CorrelationLink") => {
                let method = literal_value(&one(props, "method")?)
                    .and_then(CorrelationMethod::parse)
                    .ok_or_else(|| bad("unknown kg:method".into()))?;
                edges.push(Edge::Correlation {
                    a: endpoint(props, "memberA")?,
                    b: endpoint(props, "memberB")?,
                    weight: double(props, "coefficient")?,
                    method,
                });
            }
            Some("Provenance") => {
                provenance.dataset = literal_value(&one(props, "dataset")?)
                    .unwrap_or_default()
                    .to_string();
                if props.contains_key(&kg("createdAt")) {
                    provenance.created_at = literal_value(&one(props, "createdAt")?)
                        .unwrap_or_default()
                        .to_string();
                }
                for t in props.get(&kg("config")).into_iter().flatten() {
                    let (k, v) = literal_value(t)
                        .and_then(split_pair)
                        .ok_or_else(|| bad("kg:config must be `key=value`".into()))?;
                    provenance.config.insert(k, v);
                }
            }
            _ => {}
        }
    }
    let mut g = KnowledgeGraph {
        nodes,
        edges,
        provenance,
    };
    g.canonicalize();
    g.validate().map_err(|e| bad(e.to_string()))?;
    Ok(g)
}
