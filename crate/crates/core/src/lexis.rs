//! Tokenizer for the Mizar subset understood by the built-in toolchain,
//! plus the byte offset to line/column mapping every diagnostic goes through.
//!
//! Tokenization is total: every non-whitespace byte ends up in exactly one
//! token, and anything the lexer does not recognise becomes a `Symbol`.

use std::fmt;

use thiserror::Error;

/// Closed keyword set of the built-in lexer.
pub const KEYWORDS: &[&str] = &[
    "environ",
    "begin",
    "proof",
    "end",
    "now",
    "hereby",
    "case",
    "suppose",
    "per",
    "cases",
    "theorem",
    "definition",
    "registration",
    "notation",
    "scheme",
    "let",
    "assume",
    "thus",
    "hence",
    "for",
    "ex",
    "holds",
    "st",
    "be",
    "being",
    "by",
    "from",
    "reconsider",
    "consider",
    "take",
    "set",
    "such",
    "that",
    "then",
    "and",
    "or",
    "not",
    "implies",
    "iff",
    "means",
    "equals",
    "is",
    "of",
    "to",
];

/// Keywords that open a block closed by `end`.
pub const BLOCK_OPENERS: &[&str] = &[
    "proof",
    "now",
    "hereby",
    "case",
    "suppose",
    "definition",
    "registration",
    "notation",
    "scheme",
];

const MULTI_CHAR_SYMBOLS: &[&str] = &[".=", ":=", "->", "<>", "<=", ">="];

pub fn is_keyword(word: &str) -> bool {
    KEYWORDS.contains(&word)
}

pub fn is_block_opener(word: &str) -> bool {
    BLOCK_OPENERS.contains(&word)
}

/// Horizontal whitespace skipped between tokens. `\n` is a token of its own.
pub fn is_blank(b: u8) -> bool {
    matches!(b, b' ' | b'\t' | b'\r' | 0x0b | 0x0c)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum TokenKind {
    Keyword,
    Identifier,
    Symbol,
    NumberLiteral,
    Comment,
    Newline,
}

/// Half-open byte range into the source.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Span {
    pub start: usize,
    pub end: usize,
}

impl Span {
    pub fn len(&self) -> usize {
        self.end - self.start
    }

    pub fn is_empty(&self) -> bool {
        self.start == self.end
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Token<'src> {
    pub kind: TokenKind,
    pub text: &'src str,
    pub span: Span,
}

impl Token<'_> {
    pub fn is_keyword(&self, word: &str) -> bool {
        self.kind == TokenKind::Keyword && self.text == word
    }

    pub fn is_symbol(&self, sym: &str) -> bool {
        self.kind == TokenKind::Symbol && self.text == sym
    }

    /// Comments and newlines carry no meaning for the checkers.
    pub fn is_trivia(&self) -> bool {
        matches!(self.kind, TokenKind::Comment | TokenKind::Newline)
    }

    pub fn opens_block(&self) -> bool {
        self.kind == TokenKind::Keyword && is_block_opener(self.text)
    }

    pub fn closes_block(&self) -> bool {
        self.is_keyword("end")
    }
}

/// Streaming lexer; `tokenize` collects it.
pub struct Lexer<'src> {
    src: &'src str,
    pos: usize,
}

impl<'src> Lexer<'src> {
    pub fn new(src: &'src str) -> Self {
        Lexer { src, pos: 0 }
    }

    fn token(&mut self, kind: TokenKind, end: usize) -> Token<'src> {
        let span = Span {
            start: self.pos,
            end,
        };
        self.pos = end;
        Token {
            kind,
            text: &self.src[span.start..span.end],
            span,
        }
    }
}

impl<'src> Iterator for Lexer<'src> {
    type Item = Token<'src>;

    fn next(&mut self) -> Option<Token<'src>> {
        let bytes = self.src.as_bytes();
        while self.pos < bytes.len() && is_blank(bytes[self.pos]) {
            self.pos += 1;
        }
        if self.pos >= bytes.len() {
            return None;
        }
        let start = self.pos;
        let b = bytes[start];

        if b == b'\n' {
            return Some(self.token(TokenKind::Newline, start + 1));
        }

        if bytes[start..].starts_with(b"::") {
            let line_end = bytes[start..]
                .iter()
                .position(|&c| c == b'\n')
                .map_or(bytes.len(), |n| start + n);
            // trailing blanks belong to the gap, not the comment
            let mut end = line_end;
            while end > start + 2 && is_blank(bytes[end - 1]) {
                end -= 1;
            }
            return Some(self.token(TokenKind::Comment, end));
        }

        if b.is_ascii_alphabetic() || b == b'_' {
            let len = bytes[start..]
                .iter()
                .take_while(|&&c| c.is_ascii_alphanumeric() || c == b'_' || c == b'\'')
                .count();
            let word = &self.src[start..start + len];
            let kind = if is_keyword(word) {
                TokenKind::Keyword
            } else {
                TokenKind::Identifier
            };
            return Some(self.token(kind, start + len));
        }

        if b.is_ascii_digit() {
            let len = bytes[start..]
                .iter()
                .take_while(|c| c.is_ascii_digit())
                .count();
            return Some(self.token(TokenKind::NumberLiteral, start + len));
        }

        if let Some(sym) = MULTI_CHAR_SYMBOLS
            .iter()
            .find(|s| bytes[start..].starts_with(s.as_bytes()))
        {
            return Some(self.token(TokenKind::Symbol, start + sym.len()));
        }

        let ch_len = self.src[start..].chars().next().map_or(1, char::len_utf8);
        Some(self.token(TokenKind::Symbol, start + ch_len))
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct TokenStream<'src> {
    pub source: &'src str,
    pub tokens: Vec<Token<'src>>,
}

impl<'src> TokenStream<'src> {
    pub fn source_len(&self) -> usize {
        self.source.len()
    }

    pub fn iter(&self) -> std::slice::Iter<'_, Token<'src>> {
        self.tokens.iter()
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    /// Rebuilds the source from token texts and the whitespace gaps between them.
    pub fn detokenize(&self) -> String {
        let mut out = String::with_capacity(self.source.len());
        let mut cursor = 0;
        for tok in &self.tokens {
            out.push_str(&self.source[cursor..tok.span.start]);
            out.push_str(tok.text);
            cursor = tok.span.end;
        }
        out.push_str(&self.source[cursor..]);
        out
    }
}

pub fn tokenize(source: &str) -> TokenStream<'_> {
    TokenStream {
        source,
        tokens: Lexer::new(source).collect(),
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("offset {offset} is past the end of the source ({len} bytes)")]
pub struct OffsetOutOfRange {
    pub offset: usize,
    pub len: usize,
}

/// 1-based line and byte column.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Position {
    pub line: u32,
    pub column: u32,
}

impl fmt::Display for Position {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}:{}", self.line, self.column)
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct LineIndex {
    line_starts: Vec<usize>,
    source_len: usize,
    trailing_newline: bool,
}

impl LineIndex {
    pub fn new(source: &str) -> Self {
        let mut line_starts = vec![0];
        line_starts.extend(
            source
                .bytes()
                .enumerate()
                .filter(|&(_, b)| b == b'\n')
                .map(|(i, _)| i + 1),
        );
        LineIndex {
            line_starts,
            source_len: source.len(),
            trailing_newline: source.ends_with('\n'),
        }
    }

    pub fn line_starts(&self) -> &[usize] {
        &self.line_starts
    }

    /// Number of text lines. A final `\n` terminates the last line rather
    /// than starting a new one; the empty source has one (empty) line.
    pub fn line_count(&self) -> u32 {
        let n = self.line_starts.len() - usize::from(self.trailing_newline);
        n.max(1) as u32
    }

    pub fn lookup(&self, offset: usize) -> Result<Position, OffsetOutOfRange> {
        if offset > self.source_len {
            return Err(OffsetOutOfRange {
                offset,
                len: self.source_len,
            });
        }
        let line = self.line_starts.partition_point(|&s| s <= offset) - 1;
        Ok(Position {
            line: line as u32 + 1,
            column: (offset - self.line_starts[line]) as u32 + 1,
        })
    }

    /// Like `lookup` for offsets already known to be in range (token spans).
    pub fn position(&self, offset: usize) -> Position {
        self.lookup(offset.min(self.source_len))
            .expect("offset clamped to source length")
    }
}

pub fn line_index(source: &str) -> LineIndex {
    LineIndex::new(source)
}
