//! Diagnostics and the `.err` / `.msg` file formats shared with external
//! Mizar tools.
//!
//! An `.err` file holds one `<line> <column> <code>` triple per line, single
//! ASCII spaces, LF terminated. A `.msg` catalog alternates `# <code>` header
//! lines with one message line each.

use std::collections::BTreeMap;
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Catalog for every code the built-in toolchain can emit.
pub const BUILTIN_CATALOG: &str = include_str!("../data/builtin.msg");

pub mod codes {
    pub const UNMATCHED_END: u32 = 1001;
    pub const UNCLOSED_BLOCK: u32 = 1002;
    pub const MISSING_ENVIRON: u32 = 1003;
    pub const MISSING_BEGIN: u32 = 1004;
    pub const TEXT_BEFORE_ENVIRON: u32 = 1005;
    pub const UNKNOWN_LABEL: u32 = 1101;
    pub const TRAILING_WHITESPACE: u32 = 1201;
    pub const TAB_CHARACTER: u32 = 1202;
    pub const LINE_TOO_LONG: u32 = 1203;
    pub const BLANK_LINES: u32 = 1204;
    pub const NESTING_TOO_DEEP: u32 = 1205;

    pub const ALL: &[u32] = &[
        UNMATCHED_END,
        UNCLOSED_BLOCK,
        MISSING_ENVIRON,
        MISSING_BEGIN,
        TEXT_BEFORE_ENVIRON,
        UNKNOWN_LABEL,
        TRAILING_WHITESPACE,
        TAB_CHARACTER,
        LINE_TOO_LONG,
        BLANK_LINES,
        NESTING_TOO_DEEP,
    ];
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct Diagnostic {
    pub line: u32,
    pub column: u32,
    pub code: u32,
}

impl Diagnostic {
    pub fn new(line: u32, column: u32, code: u32) -> Self {
        debug_assert!(line >= 1 && column >= 1 && code >= 1);
        Diagnostic { line, column, code }
    }
}

impl fmt::Display for Diagnostic {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} {} {}", self.line, self.column, self.code)
    }
}

/// Diagnostics ordered by (line, column, code).
#[derive(Clone, Debug, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct ErrorList(Vec<Diagnostic>);

impl ErrorList {
    pub fn new() -> Self {
        ErrorList(Vec::new())
    }

    pub fn sorted(mut items: Vec<Diagnostic>) -> Self {
        items.sort_unstable();
        ErrorList(items)
    }

    pub fn push(&mut self, d: Diagnostic) {
        self.0.push(d);
    }

    pub fn sort(&mut self) {
        self.0.sort_unstable();
    }

    pub fn extend(&mut self, other: ErrorList) {
        self.0.extend(other.0);
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn iter(&self) -> std::slice::Iter<'_, Diagnostic> {
        self.0.iter()
    }

    pub fn as_slice(&self) -> &[Diagnostic] {
        &self.0
    }

    pub fn into_vec(self) -> Vec<Diagnostic> {
        self.0
    }
}

impl From<Vec<Diagnostic>> for ErrorList {
    fn from(items: Vec<Diagnostic>) -> Self {
        ErrorList::sorted(items)
    }
}

impl FromIterator<Diagnostic> for ErrorList {
    fn from_iter<I: IntoIterator<Item = Diagnostic>>(iter: I) -> Self {
        ErrorList::sorted(iter.into_iter().collect())
    }
}

impl IntoIterator for ErrorList {
    type Item = Diagnostic;
    type IntoIter = std::vec::IntoIter<Diagnostic>;

    fn into_iter(self) -> Self::IntoIter {
        self.0.into_iter()
    }
}

impl<'a> IntoIterator for &'a ErrorList {
    type Item = &'a Diagnostic;
    type IntoIter = std::slice::Iter<'a, Diagnostic>;

    fn into_iter(self) -> Self::IntoIter {
        self.0.iter()
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ErrFileError {
    #[error("line {line}: expected 3 fields, found {found}")]
    FieldCount { line: usize, found: usize },
    #[error("line {line}: field {field:?} is not a positive integer")]
    BadField { line: usize, field: String },
    #[error("line {line}: blank line before end of file")]
    BlankLine { line: usize },
}

impl ErrFileError {
    /// 1-based line of the `.err` file that failed to parse.
    pub fn line(&self) -> usize {
        match self {
            ErrFileError::FieldCount { line, .. }
            | ErrFileError::BadField { line, .. }
            | ErrFileError::BlankLine { line } => *line,
        }
    }
}

pub fn serialize_err(errs: &ErrorList) -> Vec<u8> {
    let mut out = String::new();
    for d in errs {
        out.push_str(&d.to_string());
        out.push('\n');
    }
    out.into_bytes()
}

fn positive(field: &[u8], line: usize) -> Result<u32, ErrFileError> {
    let bad = || ErrFileError::BadField {
        line,
        field: String::from_utf8_lossy(field).into_owned(),
    };
    if field.is_empty() || !field.iter().all(u8::is_ascii_digit) {
        return Err(bad());
    }
    // all-ASCII digits, so the UTF-8 conversion cannot fail
    let n: u32 = std::str::from_utf8(field)
        .ok()
        .and_then(|s| s.parse().ok())
        .ok_or_else(bad)?;
    if n == 0 {
        return Err(bad());
    }
    Ok(n)
}

/// Splits on LF, dropping one CR before each LF and the empty piece after a
/// final terminator.
fn lines(data: &[u8]) -> Vec<&[u8]> {
    let mut out: Vec<&[u8]> = data
        .split(|&b| b == b'\n')
        .map(|l| l.strip_suffix(b"\r").unwrap_or(l))
        .collect();
    if data.ends_with(b"\n") || data.is_empty() {
        out.pop();
    }
    out
}

pub fn parse_err(data: &[u8]) -> Result<ErrorList, ErrFileError> {
    let lines = lines(data);
    let last_content = lines.iter().rposition(|l| !l.is_empty());
    let mut items = Vec::new();
    for (i, raw) in lines.iter().enumerate() {
        let line = i + 1;
        if raw.is_empty() {
            if last_content.is_some_and(|last| i < last) {
                return Err(ErrFileError::BlankLine { line });
            }
            continue;
        }
        let fields: Vec<&[u8]> = raw.split(|&b| b == b' ').collect();
        if fields.len() != 3 {
            return Err(ErrFileError::FieldCount {
                line,
                found: fields.len(),
            });
        }
        items.push(Diagnostic {
            line: positive(fields[0], line)?,
            column: positive(fields[1], line)?,
            code: positive(fields[2], line)?,
        });
    }
    Ok(ErrorList::sorted(items))
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum CatalogError {
    #[error("line {line}: expected a \"# <code>\" header")]
    ExpectedHeader { line: usize },
    #[error("line {line}: {text:?} is not a valid message code")]
    BadCode { line: usize, text: String },
    #[error("line {line}: message for code {code} is missing")]
    MissingMessage { line: usize, code: u32 },
    #[error("line {line}: catalog is not valid UTF-8")]
    Encoding { line: usize },
}

#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct MessageCatalog {
    messages: BTreeMap<u32, String>,
}

impl MessageCatalog {
    pub fn builtin() -> Self {
        parse_msg_catalog(BUILTIN_CATALOG.as_bytes()).expect("shipped catalog parses")
    }

    pub fn get(&self, code: u32) -> Option<&str> {
        self.messages.get(&code).map(String::as_str)
    }

    pub fn message(&self, code: u32) -> String {
        self.get(code)
            .map(str::to_owned)
            .unwrap_or_else(|| format!("Unknown error {code}"))
    }

    pub fn insert(&mut self, code: u32, text: impl Into<String>) {
        self.messages.insert(code, text.into());
    }

    /// Entries of `other` win on conflict.
    pub fn merge(&mut self, other: &MessageCatalog) {
        for (code, text) in &other.messages {
            self.messages.insert(*code, text.clone());
        }
    }

    pub fn codes(&self) -> impl Iterator<Item = u32> + '_ {
        self.messages.keys().copied()
    }

    pub fn len(&self) -> usize {
        self.messages.len()
    }

    pub fn is_empty(&self) -> bool {
        self.messages.is_empty()
    }
}

pub fn parse_msg_catalog(data: &[u8]) -> Result<MessageCatalog, CatalogError> {
    let mut cat = MessageCatalog::default();
    let lines = lines(data);
    let mut i = 0;
    while i < lines.len() {
        let line = i + 1;
        let raw = lines[i];
        if raw.is_empty() {
            i += 1;
            continue;
        }
        let header = std::str::from_utf8(raw).map_err(|_| CatalogError::Encoding { line })?;
        let code_text = header
            .strip_prefix("# ")
            .ok_or(CatalogError::ExpectedHeader { line })?;
        let code = code_text
            .trim()
            .parse::<u32>()
            .ok()
            .filter(|&c| c > 0 && code_text.trim().bytes().all(|b| b.is_ascii_digit()))
            .ok_or_else(|| CatalogError::BadCode {
                line,
                text: code_text.to_owned(),
            })?;
        let msg = match lines.get(i + 1) {
            Some(m) if !m.is_empty() => {
                std::str::from_utf8(m).map_err(|_| CatalogError::Encoding { line: line + 1 })?
            }
            _ => return Err(CatalogError::MissingMessage { line: line + 1, code }),
        };
        cat.insert(code, msg);
        i += 2;
    }
    Ok(cat)
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct AnnotatedDiagnostic {
    #[serde(flatten)]
    pub diagnostic: Diagnostic,
    pub message: String,
}

pub fn annotate(errs: &ErrorList, cat: &MessageCatalog) -> Vec<AnnotatedDiagnostic> {
    errs.iter()
        .map(|d| AnnotatedDiagnostic {
            diagnostic: *d,
            message: cat.message(d.code),
        })
        .collect()
}
