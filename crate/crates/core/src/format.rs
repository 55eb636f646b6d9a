//! Indentation formatter and lint rules.
//!
//! Formatting only touches leading indentation, trailing whitespace, tabs
//! between tokens and blank lines at end of file; token text is never
//! rewritten.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::diag::{codes, Diagnostic, ErrorList};
use crate::lexis::{is_blank, tokenize, LineIndex, Token, TokenKind};

/// Maximum block nesting accepted by the linter.
pub const MAX_NESTING: usize = 8;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FormatConfig {
    pub indent_width: u32,
    pub max_line_length: u32,
}

impl Default for FormatConfig {
    fn default() -> Self {
        FormatConfig {
            indent_width: 2,
            max_line_length: 80,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum FormatConfigError {
    #[error("indent_width must be at least 1")]
    IndentWidth,
    #[error("max_line_length must be at least 20")]
    MaxLineLength,
}

impl FormatConfig {
    pub fn validate(&self) -> Result<(), FormatConfigError> {
        if self.indent_width < 1 {
            return Err(FormatConfigError::IndentWidth);
        }
        if self.max_line_length < 20 {
            return Err(FormatConfigError::MaxLineLength);
        }
        Ok(())
    }
}

/// Source lines without their `\n` terminator. The empty piece after a final
/// `\n` is not a line.
fn raw_lines(source: &str) -> Vec<(usize, &str)> {
    let mut out = Vec::new();
    let mut start = 0;
    for (i, b) in source.bytes().enumerate() {
        if b == b'\n' {
            out.push((start, &source[start..i]));
            start = i + 1;
        }
    }
    if start < source.len() {
        out.push((start, &source[start..]));
    }
    out
}

/// Tokens grouped by source line (newline tokens dropped).
fn tokens_by_line<'s>(source: &'s str, lines: &[(usize, &str)]) -> Vec<Vec<Token<'s>>> {
    let stream = tokenize(source);
    let mut grouped = vec![Vec::new(); lines.len()];
    let mut line = 0;
    for tok in stream.tokens {
        if tok.kind == TokenKind::Newline {
            line += 1;
            continue;
        }
        grouped[line].push(tok);
    }
    grouped
}

pub fn format(source: &str, cfg: &FormatConfig) -> String {
    let lines = raw_lines(source);
    let grouped = tokens_by_line(source, &lines);
    let unit = cfg.indent_width.max(1) as usize;

    let mut depth = 0usize;
    let mut out_lines: Vec<String> = Vec::with_capacity(lines.len());
    for toks in &grouped {
        let (Some(first), Some(last)) = (toks.first(), toks.last()) else {
            out_lines.push(String::new());
            continue;
        };
        let indent = if first.closes_block() {
            depth.saturating_sub(1)
        } else {
            depth
        };
        let mut line = " ".repeat(indent * unit);
        let mut cursor = first.span.start;
        for tok in toks {
            line.extend(source[cursor..tok.span.start].chars().map(|c| {
                if c == '\t' {
                    ' '
                } else {
                    c
                }
            }));
            line.push_str(tok.text);
            cursor = tok.span.end;
            if tok.opens_block() {
                depth += 1;
            } else if tok.closes_block() {
                depth = depth.saturating_sub(1);
            }
        }
        debug_assert_eq!(cursor, last.span.end);
        out_lines.push(line);
    }

    while out_lines.last().is_some_and(String::is_empty) {
        out_lines.pop();
    }
    let mut out = out_lines.join("\n");
    out.push('\n');
    out
}

pub fn lint(source: &str, cfg: &FormatConfig) -> ErrorList {
    let lines = raw_lines(source);
    let grouped = tokens_by_line(source, &lines);
    let index = LineIndex::new(source);
    let mut found = Vec::new();

    let mut blank_run = 0;
    for (i, ((start, raw), toks)) in lines.iter().zip(&grouped).enumerate() {
        let line_no = i as u32 + 1;
        let text = raw.strip_suffix('\r').unwrap_or(raw);
        let bytes = text.as_bytes();

        let content_len = bytes.iter().rposition(|&b| !is_blank(b)).map_or(0, |p| p + 1);
        if content_len < bytes.len() {
            found.push(Diagnostic::new(
                line_no,
                content_len as u32 + 1,
                codes::TRAILING_WHITESPACE,
            ));
        }

        // A comment owns the rest of its line, trailing blanks included.
        let code_end = toks
            .iter()
            .find(|t| t.kind == TokenKind::Comment)
            .map_or(bytes.len(), |t| t.span.start - start);
        if let Some(off) = bytes[..code_end.min(bytes.len())]
            .iter()
            .position(|&b| b == b'\t')
        {
            found.push(Diagnostic::new(
                line_no,
                off as u32 + 1,
                codes::TAB_CHARACTER,
            ));
        }

        if bytes.len() > cfg.max_line_length as usize {
            found.push(Diagnostic::new(
                line_no,
                cfg.max_line_length + 1,
                codes::LINE_TOO_LONG,
            ));
        }

        if content_len == 0 {
            blank_run += 1;
            if blank_run == 2 {
                found.push(Diagnostic::new(line_no, 1, codes::BLANK_LINES));
            }
        } else {
            blank_run = 0;
        }
    }

    let mut depth = 0usize;
    for tok in grouped.iter().flatten() {
        if tok.opens_block() {
            depth += 1;
            if depth > MAX_NESTING {
                let pos = index.position(tok.span.start);
                found.push(Diagnostic::new(pos.line, pos.column, codes::NESTING_TOO_DEEP));
            }
        } else if tok.closes_block() {
            depth = depth.saturating_sub(1);
        }
    }

    ErrorList::sorted(found)
}
