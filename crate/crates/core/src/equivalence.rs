//! Semantic document comparison.
//!
//! Documents are parsed into a [`CanonicalDoc`]: objects keyed by sorted
//! keys, arrays in source order, and numbers held as exact decimals. Two
//! documents are equivalent when their canonical trees match, optionally
//! allowing an absolute numeric tolerance.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use bigdecimal::BigDecimal;

use crate::error::{Error, Result};

/// Canonical JSON tree.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum CanonicalDoc {
    Null,
    Bool(bool),
    /// Exact decimal value; `0.10`, `0.1` and `1e-1` compare equal.
    Number(BigDecimal),
    String(String),
    Array(Vec<CanonicalDoc>),
    Object(BTreeMap<String, CanonicalDoc>),
}

impl CanonicalDoc {
    fn kind(&self) -> &'static str {
        match self {
            Self::Null => "null",
            Self::Bool(_) => "boolean",
            Self::Number(_) => "number",
            Self::String(_) => "string",
            Self::Array(_) => "array",
            Self::Object(_) => "object",
        }
    }
}

/// Parses `text` strictly. Numbers keep the full precision of their source
/// digits; duplicate object keys are rejected.
pub fn canonicalize(text: &str) -> Result<CanonicalDoc> {
    let mut p = Parser {
        src: text.as_bytes(),
        pos: 0,
    };
    p.skip_ws();
    let doc = p.value(0)?;
    p.skip_ws();
    if p.pos != p.src.len() {
        return Err(p.err("trailing characters after document"));
    }
    Ok(doc)
}

const MAX_DEPTH: usize = 512;

struct Parser<'a> {
    src: &'a [u8],
    pos: usize,
}

impl Parser<'_> {
    fn err(&self, message: impl Into<String>) -> Error {
        Error::JsonSyntax {
            offset: self.pos,
            message: message.into(),
        }
    }

    fn peek(&self) -> Option<u8> {
        self.src.get(self.pos).copied()
    }

    fn skip_ws(&mut self) {
        while let Some(b' ' | b'\t' | b'\n' | b'\r') = self.peek() {
            self.pos += 1;
        }
    }

    fn expect_literal(&mut self, lit: &str) -> Result<()> {
        if self.src[self.pos..].starts_with(lit.as_bytes()) {
            self.pos += lit.len();
            Ok(())
        } else {
            Err(self.err(format!("expected `{lit}`")))
        }
    }

    fn value(&mut self, depth: usize) -> Result<CanonicalDoc> {
        if depth > MAX_DEPTH {
            return Err(self.err("nesting too deep"));
        }
        match self.peek() {
            None => Err(self.err("unexpected end of input")),
            Some(b'{') => self.object(depth),
            Some(b'[') => self.array(depth),
            Some(b'"') => Ok(CanonicalDoc::String(self.string()?)),
            Some(b't') => self.expect_literal("true").map(|_| CanonicalDoc::Bool(true)),
            Some(b'f') => self.expect_literal("false").map(|_| CanonicalDoc::Bool(false)),
            Some(b'n') => self.expect_literal("null").map(|_| CanonicalDoc::Null),
            Some(b'-' | b'0'..=b'9') => self.number(),
            Some(c) => Err(self.err(format!("unexpected character {:?}", c as char))),
        }
    }

    fn object(&mut self, depth: usize) -> Result<CanonicalDoc> {
        self.pos += 1;
        let mut map = BTreeMap::new();
        self.skip_ws();
        if self.peek() == Some(b'}') {
            self.pos += 1;
            return Ok(CanonicalDoc::Object(map));
        }
        loop {
            self.skip_ws();
            if self.peek() != Some(b'"') {
                return Err(self.err("expected object key"));
            }
            let key_at = self.pos;
            let key = self.string()?;
            self.skip_ws();
            if self.peek() != Some(b':') {
                return Err(self.err("expected `:`"));
            }
            self.pos += 1;
            self.skip_ws();
            let v = self.value(depth + 1)?;
            if map.insert(key.clone(), v).is_some() {
                return Err(Error::JsonSyntax {
                    offset: key_at,
                    message: format!("duplicate key {key:?}"),
                });
            }
            self.skip_ws();
            match self.peek() {
                Some(b',') => self.pos += 1,
                Some(b'}') => {
                    self.pos += 1;
                    return Ok(CanonicalDoc::Object(map));
                }
                None => return Err(self.err("unbalanced brace")),
                _ => return Err(self.err("expected `,` or `}`")),
            }
        }
    }

    fn array(&mut self, depth: usize) -> Result<CanonicalDoc> {
        self.pos += 1;
        let mut items = Vec::new();
        self.skip_ws();
        if self.peek() == Some(b']') {
            self.pos += 1;
            return Ok(CanonicalDoc::Array(items));
        }
        loop {
            self.skip_ws();
            items.push(self.value(depth + 1)?);
            self.skip_ws();
            match self.peek() {
                Some(b',') => self.pos += 1,
                Some(b']') => {
                    self.pos += 1;
                    return Ok(CanonicalDoc::Array(items));
                }
                None => return Err(self.err("unbalanced bracket")),
                _ => return Err(self.err("expected `,` or `]`")),
            }
        }
    }

    fn string(&mut self) -> Result<String> {
        self.pos += 1;
        let mut out = String::new();
        loop {
            let start = self.pos;
            while let Some(c) = self.peek() {
                if c == b'"' || c == b'\\' || c < 0x20 {
                    break;
                }
                self.pos += 1;
            }
            // Slicing at ASCII delimiters keeps UTF-8 boundaries intact.
            out.push_str(
                std::str::from_utf8(&self.src[start..self.pos])
                    .map_err(|_| self.err("invalid utf-8 in string"))?,
            );
            match self.peek() {
                None => return Err(self.err("unterminated string")),
                Some(b'"') => {
                    self.pos += 1;
                    return Ok(out);
                }
                Some(b'\\') => {
                    self.pos += 1;
                    let esc = self.peek().ok_or_else(|| self.err("unterminated escape"))?;
                    self.pos += 1;
                    match esc {
                        b'"' => out.push('"'),
                        b'\\' => out.push('\\'),
                        b'/' => out.push('/'),
                        b'b' => out.push('\u{8}'),
                        b'f' => out.push('\u{c}'),
                        b'n' => out.push('\n'),
                        b'r' => out.push('\r'),
                        b't' => out.push('\t'),
                        b'u' => out.push(self.unicode_escape()?),
                        _ => return Err(self.err("invalid escape")),
                    }
                }
                Some(_) => return Err(self.err("control character in string")),
            }
        }
    }

    fn hex4(&mut self) -> Result<u32> {
        let digits = self
            .src
            .get(self.pos..self.pos + 4)
            .ok_or_else(|| self.err("truncated unicode escape"))?;
        let s = std::str::from_utf8(digits).map_err(|_| self.err("invalid unicode escape"))?;
        let v = u32::from_str_radix(s, 16).map_err(|_| self.err("invalid unicode escape"))?;
        self.pos += 4;
        Ok(v)
    }

    fn unicode_escape(&mut self) -> Result<char> {
        let hi = self.hex4()?;
        if (0xD800..0xDC00).contains(&hi) {
            self.expect_literal("\\u")?;
            let lo = self.hex4()?;
            if !(0xDC00..0xE000).contains(&lo) {
                return Err(self.err("invalid low surrogate"));
            }
            let cp = 0x10000 + ((hi - 0xD800) << 10) + (lo - 0xDC00);
            return char::from_u32(cp).ok_or_else(|| self.err("invalid code point"));
        }
        char::from_u32(hi).ok_or_else(|| self.err("lone surrogate"))
    }

    fn number(&mut self) -> Result<CanonicalDoc> {
        let start = self.pos;
        if self.peek() == Some(b'-') {
            self.pos += 1;
        }
        match self.peek() {
            Some(b'0') => self.pos += 1,
            Some(b'1'..=b'9') => self.digits(),
            _ => return Err(self.err("invalid number")),
        }
        if self.peek() == Some(b'.') {
            self.pos += 1;
            if !matches!(self.peek(), Some(b'0'..=b'9')) {
                return Err(self.err("expected fraction digits"));
            }
            self.digits();
        }
        if let Some(b'e' | b'E') = self.peek() {
            self.pos += 1;
            if let Some(b'+' | b'-') = self.peek() {
                self.pos += 1;
            }
            if !matches!(self.peek(), Some(b'0'..=b'9')) {
                return Err(self.err("expected exponent digits"));
            }
            self.digits();
        }
        let lexeme = std::str::from_utf8(&self.src[start..self.pos]).expect("ascii number");
        BigDecimal::from_str(lexeme)
            .map(CanonicalDoc::Number)
            .map_err(|e| Error::JsonSyntax {
                offset: start,
                message: format!("number out of range: {e}"),
            })
    }

    fn digits(&mut self) {
        while let Some(b'0'..=b'9') = self.peek() {
            self.pos += 1;
        }
    }
}

/// A segment of a document path.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum PathSegment {
    Key(String),
    Index(usize),
}

/// Location of a difference inside a document, e.g. `features[0].properties.area_ha`.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct DocPath(pub Vec<PathSegment>);

impl fmt::Display for DocPath {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.0.is_empty() {
            return f.write_str("$");
        }
        for (i, seg) in self.0.iter().enumerate() {
            match seg {
                PathSegment::Key(k) if i == 0 => write!(f, "{k}")?,
                PathSegment::Key(k) => write!(f, ".{k}")?,
                PathSegment::Index(n) => write!(f, "[{n}]")?,
            }
        }
        Ok(())
    }
}

/// First difference between two documents.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Difference {
    pub path: DocPath,
    pub reason: String,
}

impl fmt::Display for Difference {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}: {}", self.path, self.reason)
    }
}

/// Compares two canonical documents. Without a tolerance numbers must be
/// exactly equal; with tolerance `t` they are equal iff `|a - b| <= t`.
pub fn equivalent(
    a: &CanonicalDoc,
    b: &CanonicalDoc,
    tolerance: Option<&BigDecimal>,
) -> std::result::Result<(), Difference> {
    let mut path = Vec::new();
    compare(a, b, tolerance, &mut path).map_err(|reason| Difference {
        path: DocPath(path),
        reason,
    })
}

fn compare(
    a: &CanonicalDoc,
    b: &CanonicalDoc,
    tol: Option<&BigDecimal>,
    path: &mut Vec<PathSegment>,
) -> std::result::Result<(), String> {
    use CanonicalDoc as D;
    match (a, b) {
        (D::Null, D::Null) => Ok(()),
        (D::Bool(x), D::Bool(y)) if x == y => Ok(()),
        (D::String(x), D::String(y)) if x == y => Ok(()),
        (D::Number(x), D::Number(y)) => {
            let equal = match tol {
                None => x == y,
                Some(t) => (x - y).abs() <= *t,
            };
            if equal {
                Ok(())
            } else {
                Err(format!("{x} != {y}"))
            }
        }
        (D::Array(xs), D::Array(ys)) => {
            for (i, (x, y)) in xs.iter().zip(ys).enumerate() {
                path.push(PathSegment::Index(i));
                compare(x, y, tol, path)?;
                path.pop();
            }
            if xs.len() != ys.len() {
                return Err(format!("array length {} != {}", xs.len(), ys.len()));
            }
            Ok(())
        }
        (D::Object(xm), D::Object(ym)) => {
            for (k, x) in xm {
                path.push(PathSegment::Key(k.clone()));
                match ym.get(k) {
                    Some(y) => compare(x, y, tol, path)?,
                    None => return Err("key missing on right".to_string()),
                }
                path.pop();
            }
            if let Some(k) = ym.keys().find(|k| !xm.contains_key(*k)) {
                path.push(PathSegment::Key(k.clone()));
                return Err("key missing on left".to_string());
            }
            Ok(())
        }
        (D::Bool(_), D::Bool(_)) | (D::String(_), D::String(_)) => {
            Err("values differ".to_string())
        }
        _ => Err(format!("{} vs {}", a.kind(), b.kind())),
    }
}

/// Parses both texts and compares them.
pub fn texts_equivalent(
    a: &str,
    b: &str,
    tolerance: Option<&BigDecimal>,
) -> Result<std::result::Result<(), Difference>> {
    Ok(equivalent(&canonicalize(a)?, &canonicalize(b)?, tolerance))
}
