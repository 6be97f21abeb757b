//! Boolean field query language over extracted records.
//!
//! ```text
//! query  := or
//! or     := and ("OR" and)*
//! and    := not ("AND" not)*
//! not    := "NOT" not | atom
//! atom   := "(" or ")" | FIELD ":" value | value
//! value  := WORD | "quoted phrase"
//! ```
//!
//! Operators are upper-case keywords; a bare value searches paragraph text.
//! Matching is case-insensitive substring.

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::record::{Slot, SynthesisRecord};

#[derive(Clone, Debug, PartialEq, Eq, thiserror::Error)]
#[error("syntax error at offset {offset}: {message}")]
pub struct QueryError {
    /// Byte offset into the query string.
    pub offset: usize,
    pub message: String,
}

fn err<T>(offset: usize, message: impl Into<String>) -> Result<T, QueryError> {
    Err(QueryError { offset, message: message.into() })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Field {
    Slot(Slot),
    Title,
    Paragraph,
    Doi,
}

const ALIASES: [(&str, Slot); 10] = [
    ("metal", Slot::MetalPrecursorName),
    ("metal_amount", Slot::MetalPrecursorAmount),
    ("linker", Slot::OrganicLinkerName),
    ("linker_amount", Slot::OrganicLinkerAmount),
    ("solvent", Slot::SolventName),
    ("solvent_amount", Slot::SolventAmount),
    ("modulator", Slot::ModulatorName),
    ("modulator_amount", Slot::ModulatorAmount),
    ("duration", Slot::ReactionDuration),
    ("temperature", Slot::ReactionTemperature),
];

impl Field {
    /// Short alias, full slot key, or one of title/paragraph/doi.
    pub fn from_name(name: &str) -> Option<Field> {
        let lower = name.to_ascii_lowercase();
        match lower.as_str() {
            "title" => Some(Field::Title),
            "paragraph" | "text" => Some(Field::Paragraph),
            "doi" => Some(Field::Doi),
            other => ALIASES
                .iter()
                .find(|(a, _)| *a == other)
                .map(|(_, s)| *s)
                .or_else(|| Slot::from_key(other))
                .map(Field::Slot),
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Field::Title => "title",
            Field::Paragraph => "paragraph",
            Field::Doi => "doi",
            Field::Slot(s) => ALIASES.iter().find(|(_, a)| *a == s).map(|(n, _)| *n).expect("every slot aliased"),
        }
    }

    pub const ALL: [Field; 13] = [
        Field::Slot(Slot::MetalPrecursorName),
        Field::Slot(Slot::MetalPrecursorAmount),
        Field::Slot(Slot::OrganicLinkerName),
        Field::Slot(Slot::OrganicLinkerAmount),
        Field::Slot(Slot::SolventName),
        Field::Slot(Slot::SolventAmount),
        Field::Slot(Slot::ModulatorName),
        Field::Slot(Slot::ModulatorAmount),
        Field::Slot(Slot::ReactionDuration),
        Field::Slot(Slot::ReactionTemperature),
        Field::Title,
        Field::Paragraph,
        Field::Doi,
    ];
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "node", rename_all = "snake_case")]
pub enum QueryAst {
    And { left: Box<QueryAst>, right: Box<QueryAst> },
    Or { left: Box<QueryAst>, right: Box<QueryAst> },
    Not { inner: Box<QueryAst> },
    FieldTerm { field: Field, matcher: String },
    TextTerm { matcher: String },
}

impl QueryAst {
    pub fn and(l: QueryAst, r: QueryAst) -> Self {
        QueryAst::And { left: Box::new(l), right: Box::new(r) }
    }

    pub fn or(l: QueryAst, r: QueryAst) -> Self {
        QueryAst::Or { left: Box::new(l), right: Box::new(r) }
    }

    #[allow(clippy::should_implement_trait)]
    pub fn not(x: QueryAst) -> Self {
        QueryAst::Not { inner: Box::new(x) }
    }

    pub fn field(f: Field, m: impl Into<String>) -> Self {
        QueryAst::FieldTerm { field: f, matcher: m.into() }
    }

    pub fn text(m: impl Into<String>) -> Self {
        QueryAst::TextTerm { matcher: m.into() }
    }

    fn precedence(&self) -> u8 {
        match self {
            QueryAst::Or { .. } => 1,
            QueryAst::And { .. } => 2,
            QueryAst::Not { .. } => 3,
            _ => 4,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
enum Tok {
    LParen,
    RParen,
    Colon,
    And,
    Or,
    Not,
    Word(String),
    Quoted(String),
}

fn is_word_char(c: char) -> bool {
    !(c.is_whitespace() || matches!(c, '(' | ')' | ':' | '"'))
}

fn lex(src: &str) -> Result<Vec<(usize, Tok)>, QueryError> {
    let mut out = Vec::new();
    let mut it = src.char_indices().peekable();
    while let Some(&(i, c)) = it.peek() {
        match c {
            c if c.is_whitespace() => {
                it.next();
            }
            '(' | ')' | ':' => {
                it.next();
                out.push((i, match c {
                    '(' => Tok::LParen,
                    ')' => Tok::RParen,
                    _ => Tok::Colon,
                }));
            }
            '"' => {
                it.next();
                let mut s = String::new();
                let mut closed = false;
                while let Some((_, c)) = it.next() {
                    match c {
                        '"' => {
                            closed = true;
                            break;
                        }
                        '\\' => match it.next() {
                            Some((_, e)) => s.push(e),
                            None => break,
                        },
                        c => s.push(c),
                    }
                }
                if !closed {
                    return err(i, "unterminated quoted phrase");
                }
                out.push((i, Tok::Quoted(s)));
            }
            _ => {
                let mut s = String::new();
                while let Some(&(_, c)) = it.peek() {
                    if !is_word_char(c) {
                        break;
                    }
                    s.push(c);
                    it.next();
                }
                let tok = match s.as_str() {
                    "AND" => Tok::And,
                    "OR" => Tok::Or,
                    "NOT" => Tok::Not,
                    _ => Tok::Word(s),
                };
                out.push((i, tok));
            }
        }
    }
    Ok(out)
}

struct Parser {
    toks: Vec<(usize, Tok)>,
    pos: usize,
    end: usize,
}

impl Parser {
    fn peek(&self) -> Option<&Tok> {
        self.toks.get(self.pos).map(|(_, t)| t)
    }

    fn offset(&self) -> usize {
        self.toks.get(self.pos).map_or(self.end, |(o, _)| *o)
    }

    fn found(&self) -> String {
        match self.peek() {
            None => "end of input".into(),
            Some(Tok::LParen) => "`(`".into(),
            Some(Tok::RParen) => "`)`".into(),
            Some(Tok::Colon) => "`:`".into(),
            Some(Tok::And) => "`AND`".into(),
            Some(Tok::Or) => "`OR`".into(),
            Some(Tok::Not) => "`NOT`".into(),
            Some(Tok::Word(w)) => format!("`{w}`"),
            Some(Tok::Quoted(q)) => format!("\"{q}\""),
        }
    }

    fn or(&mut self) -> Result<QueryAst, QueryError> {
        let mut left = self.and()?;
        while self.peek() == Some(&Tok::Or) {
            self.pos += 1;
            left = QueryAst::or(left, self.and()?);
        }
        Ok(left)
    }

    fn and(&mut self) -> Result<QueryAst, QueryError> {
        let mut left = self.not()?;
        while self.peek() == Some(&Tok::And) {
            self.pos += 1;
            left = QueryAst::and(left, self.not()?);
        }
        Ok(left)
    }

    fn not(&mut self) -> Result<QueryAst, QueryError> {
        if self.peek() == Some(&Tok::Not) {
            self.pos += 1;
            return Ok(QueryAst::not(self.not()?));
        }
        self.atom()
    }

    fn value(&mut self, after: &str) -> Result<String, QueryError> {
        let v = match self.peek() {
            Some(Tok::Word(w)) => w.clone(),
            Some(Tok::Quoted(q)) => q.clone(),
            _ => return err(self.offset(), format!("expected a value{after}, found {}", self.found())),
        };
        if v.trim().is_empty() {
            return err(self.offset(), "empty phrase");
        }
        self.pos += 1;
        Ok(v)
    }

    fn atom(&mut self) -> Result<QueryAst, QueryError> {
        match self.peek() {
            Some(Tok::LParen) => {
                self.pos += 1;
                let inner = self.or()?;
                if self.peek() != Some(&Tok::RParen) {
                    return err(self.offset(), format!("expected `)`, found {}", self.found()));
                }
                self.pos += 1;
                Ok(inner)
            }
            Some(Tok::Word(w)) if self.toks.get(self.pos + 1).map(|t| &t.1) == Some(&Tok::Colon) => {
                let name = w.clone();
                let at = self.offset();
                let field = Field::from_name(&name)
                    .ok_or_else(|| QueryError { offset: at, message: format!("unknown field `{name}`") })?;
                self.pos += 2;
                let matcher = self.value(&format!(" after `{name}:`"))?;
                Ok(QueryAst::FieldTerm { field, matcher })
            }
            Some(Tok::Word(_)) | Some(Tok::Quoted(_)) => Ok(QueryAst::TextTerm { matcher: self.value("")? }),
            _ => err(self.offset(), format!("expected a term, `NOT` or `(`, found {}", self.found())),
        }
    }
}

pub fn parse(query: &str) -> Result<QueryAst, QueryError> {
    let toks = lex(query)?;
    let mut p = Parser { toks, pos: 0, end: query.len() };
    let ast = p.or()?;
    if p.pos < p.toks.len() {
        return err(p.offset(), format!("expected `AND`, `OR` or end of input, found {}", p.found()));
    }
    Ok(ast)
}

fn needs_quotes(v: &str) -> bool {
    v.is_empty() || matches!(v, "AND" | "OR" | "NOT") || !v.chars().all(is_word_char)
}

fn write_value(f: &mut fmt::Formatter<'_>, v: &str) -> fmt::Result {
    if !needs_quotes(v) {
        return f.write_str(v);
    }
    f.write_str("\"")?;
    for c in v.chars() {
        if matches!(c, '"' | '\\') {
            f.write_str("\\")?;
        }
        write!(f, "{c}")?;
    }
    f.write_str("\"")
}

impl QueryAst {
    fn write_at(&self, f: &mut fmt::Formatter<'_>, min: u8) -> fmt::Result {
        let paren = self.precedence() < min;
        if paren {
            f.write_str("(")?;
        }
        match self {
            // Left-associative: the right operand binds one level tighter.
            QueryAst::Or { left, right } => {
                left.write_at(f, 1)?;
                f.write_str(" OR ")?;
                right.write_at(f, 2)?;
            }
            QueryAst::And { left, right } => {
                left.write_at(f, 2)?;
                f.write_str(" AND ")?;
                right.write_at(f, 3)?;
            }
            QueryAst::Not { inner } => {
                f.write_str("NOT ")?;
                inner.write_at(f, 3)?;
            }
            QueryAst::FieldTerm { field, matcher } => {
                write!(f, "{}:", field.name())?;
                write_value(f, matcher)?;
            }
            QueryAst::TextTerm { matcher } => write_value(f, matcher)?,
        }
        if paren {
            f.write_str(")")?;
        }
        Ok(())
    }
}

/// Minimal-parenthesis rendering; `parse(&ast.to_string()) == ast`.
impl fmt::Display for QueryAst {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        self.write_at(f, 0)
    }
}

/// A searchable row: the record plus its source context.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct SearchRecord {
    pub id: String,
    pub doi: String,
    pub title: String,
    pub paragraph: String,
    pub record: SynthesisRecord,
}

impl SearchRecord {
    pub fn value(&self, field: Field) -> Option<&str> {
        match field {
            Field::Slot(s) => self.record.get(s),
            Field::Title => Some(&self.title),
            Field::Paragraph => Some(&self.paragraph),
            Field::Doi => Some(&self.doi),
        }
    }
}

pub fn evaluate(ast: &QueryAst, rec: &SearchRecord) -> bool {
    match ast {
        QueryAst::And { left, right } => evaluate(left, rec) && evaluate(right, rec),
        QueryAst::Or { left, right } => evaluate(left, rec) || evaluate(right, rec),
        QueryAst::Not { inner } => !evaluate(inner, rec),
        QueryAst::FieldTerm { field, matcher } => rec.value(*field).is_some_and(|v| contains_ci(v, matcher)),
        QueryAst::TextTerm { matcher } => contains_ci(&rec.paragraph, matcher),
    }
}

pub fn contains_ci(hay: &str, needle: &str) -> bool {
    hay.to_lowercase().contains(&needle.to_lowercase())
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct SnippetSpan {
    pub field: String,
    pub start: usize,
    pub end: usize,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct SearchHit {
    pub id: String,
    pub matched_fields: Vec<String>,
    pub snippets: Vec<SnippetSpan>,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct SearchPage {
    pub total: usize,
    pub offset: usize,
    pub limit: usize,
    pub hits: Vec<SearchHit>,
}

/// Positive leaves (not under a NOT) that hold for `rec`.
fn collect_matches(ast: &QueryAst, rec: &SearchRecord, negated: bool, out: &mut Vec<(Field, String)>) {
    match ast {
        QueryAst::And { left, right } | QueryAst::Or { left, right } => {
            collect_matches(left, rec, negated, out);
            collect_matches(right, rec, negated, out);
        }
        QueryAst::Not { inner } => collect_matches(inner, rec, !negated, out),
        QueryAst::FieldTerm { field, matcher } if !negated => {
            if rec.value(*field).is_some_and(|v| contains_ci(v, matcher)) {
                out.push((*field, matcher.clone()));
            }
        }
        QueryAst::TextTerm { matcher } if !negated => {
            if contains_ci(&rec.paragraph, matcher) {
                out.push((Field::Paragraph, matcher.clone()));
            }
        }
        _ => {}
    }
}

fn hit(ast: &QueryAst, rec: &SearchRecord) -> SearchHit {
    let mut leaves = Vec::new();
    collect_matches(ast, rec, false, &mut leaves);
    let mut matched_fields: Vec<String> = leaves.iter().map(|(f, _)| f.name().to_string()).collect();
    matched_fields.sort();
    matched_fields.dedup();
    let mut snippets: Vec<SnippetSpan> = leaves
        .iter()
        .filter_map(|(f, m)| {
            let v = rec.value(*f)?;
            let (start, end) = locate(v, m)?;
            Some(SnippetSpan { field: f.name().to_string(), start, end })
        })
        .collect();
    snippets.sort_by(|a, b| (&a.field, a.start, a.end).cmp(&(&b.field, b.start, b.end)));
    snippets.dedup();
    SearchHit { id: rec.id.clone(), matched_fields, snippets }
}

/// Byte span in `hay` of the first case-insensitive match of `needle`,
/// mapped back through per-char lowercasing.
fn locate(hay: &str, needle: &str) -> Option<(usize, usize)> {
    let lowered: Vec<(usize, char)> =
        hay.char_indices().flat_map(|(i, c)| c.to_lowercase().map(move |l| (i, l))).collect();
    let n: Vec<char> = needle.chars().flat_map(char::to_lowercase).collect();
    if n.is_empty() || n.len() > lowered.len() {
        return None;
    }
    (0..=lowered.len() - n.len()).find_map(|s| {
        lowered[s..s + n.len()].iter().map(|p| p.1).eq(n.iter().copied()).then(|| {
            let (last_i, _) = lowered[s + n.len() - 1];
            let last_len = hay[last_i..].chars().next().map_or(0, char::len_utf8);
            (lowered[s].0, last_i + last_len)
        })
    })
}

/// All matching records in id order, paginated.
pub fn search(records: &[SearchRecord], ast: &QueryAst, limit: usize, offset: usize) -> SearchPage {
    let mut matching: Vec<&SearchRecord> = records.iter().filter(|r| evaluate(ast, r)).collect();
    matching.sort_by(|a, b| a.id.cmp(&b.id));
    let hits = matching.iter().skip(offset).take(limit).map(|r| hit(ast, r)).collect();
    SearchPage { total: matching.len(), offset, limit, hits }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn metal(v: &str) -> QueryAst {
        QueryAst::field(Field::Slot(Slot::MetalPrecursorName), v)
    }

    #[test]
    fn grammar_example() {
        let ast = parse(r#"metal:"zinc nitrate" AND NOT solvent:DMF"#).unwrap();
        assert_eq!(
            ast,
            QueryAst::and(metal("zinc nitrate"), QueryAst::not(QueryAst::field(Field::Slot(Slot::SolventName), "DMF")))
        );
    }

    #[test]
    fn precedence() {
        let ast = parse("a OR b AND c").unwrap();
        assert_eq!(ast, QueryAst::or(QueryAst::text("a"), QueryAst::and(QueryAst::text("b"), QueryAst::text("c"))));
        assert_eq!(ast.to_string(), "a OR b AND c");
        let grouped = parse("(a OR b) AND c").unwrap();
        assert_eq!(grouped.to_string(), "(a OR b) AND c");
    }

    #[test]
    fn errors() {
        let e = parse("metal:(unclosed").unwrap_err();
        assert_eq!(e.offset, 6);
        assert_eq!(parse("bogus:x").unwrap_err().offset, 0);
        assert_eq!(parse("(a OR b").unwrap_err().offset, 7);
        assert!(parse("a b").is_err());
        assert!(parse("\"open").is_err());
        assert!(parse("metal:\"\"").is_err());
        assert!(parse("").is_err());
    }

    #[test]
    fn aliases_and_full_keys() {
        assert_eq!(parse("organic_linker_name:bdc").unwrap(), parse("linker:bdc").unwrap());
        assert_eq!(Field::from_name("TITLE"), Some(Field::Title));
    }

    fn row(id: &str, m: &str) -> SearchRecord {
        SearchRecord {
            id: id.into(),
            doi: format!("10.1/{id}"),
            title: "A zinc framework".into(),
            paragraph: "Zinc nitrate was dissolved in DMF.".into(),
            record: SynthesisRecord::new().with(Slot::MetalPrecursorName, m),
        }
    }

    #[test]
    fn substring_semantics() {
        let r = row("a", "zinc nitrate hexahydrate");
        assert!(evaluate(&parse("metal:zinc").unwrap(), &r));
        assert!(evaluate(&parse("metal:ZINC").unwrap(), &r));
        assert!(!evaluate(&parse("modulator:x").unwrap(), &r));
        assert!(evaluate(&parse("NOT modulator:x").unwrap(), &r));
        assert!(evaluate(&parse("dmf").unwrap(), &r));
    }

    #[test]
    fn search_pages_and_spans() {
        let rows = vec![row("c", "Zinc acetate"), row("a", "zinc nitrate"), row("b", "copper nitrate")];
        let q = parse("metal:zinc").unwrap();
        let page = search(&rows, &q, 10, 0);
        assert_eq!(page.total, 2);
        assert_eq!(page.hits.iter().map(|h| h.id.as_str()).collect::<Vec<_>>(), ["a", "c"]);
        assert_eq!(page.hits[1].snippets, [SnippetSpan { field: "metal".into(), start: 0, end: 4 }]);
        assert_eq!(page.hits[0].matched_fields, ["metal"]);
        let empty = search(&rows, &q, 0, 0);
        assert_eq!((empty.total, empty.hits.len()), (2, 0));
        assert_eq!(search(&rows, &parse("metal:iron").unwrap(), 5, 0).total, 0);
    }
}
