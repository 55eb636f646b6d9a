//! Built-in reference verifier.
//!
//! Three passes run in order over an article: Parser (tokenization),
//! Analyzer (block structure and article layout) and Checker (label
//! references). Each pass walks the article line by line so that progress
//! and cancellation are observed at line granularity.

use std::collections::HashSet;
use std::fmt;
use std::str::FromStr;
use std::thread;
use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};

use crate::cancel::{CancelToken, Canceled};
use crate::diag::{codes, Diagnostic, ErrorList};
use crate::lexis::{LineIndex, Lexer, Position, Token, TokenKind, TokenStream};

/// Progress callbacks fire at pass boundaries and at least every this many lines.
pub const PROGRESS_INTERVAL_LINES: u32 = 500;

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum PassName {
    Parser,
    Analyzer,
    Checker,
}

impl PassName {
    pub const ALL: [PassName; 3] = [PassName::Parser, PassName::Analyzer, PassName::Checker];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn as_str(self) -> &'static str {
        match self {
            PassName::Parser => "Parser",
            PassName::Analyzer => "Analyzer",
            PassName::Checker => "Checker",
        }
    }
}

impl fmt::Display for PassName {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for PassName {
    type Err = ();

    fn from_str(s: &str) -> Result<Self, ()> {
        PassName::ALL
            .into_iter()
            .find(|p| p.as_str() == s)
            .ok_or(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct PassProgress {
    pub pass: PassName,
    pub current: u32,
    pub total: u32,
}

fn diag_at(pos: Position, code: u32) -> Diagnostic {
    Diagnostic::new(pos.line, pos.column, code)
}

/// Incremental block-structure and layout checker (codes 1001-1005).
#[derive(Debug, Default)]
pub struct StructureChecker {
    first: Option<(Position, bool)>,
    environ: Option<Position>,
    begin_seen: bool,
    open: Vec<Position>,
    found: Vec<Diagnostic>,
}

impl StructureChecker {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn feed(&mut self, tok: &Token<'_>, index: &LineIndex) {
        if tok.is_trivia() {
            return;
        }
        let pos = index.position(tok.span.start);
        if self.first.is_none() {
            self.first = Some((pos, tok.is_keyword("environ")));
        }
        if tok.is_keyword("environ") && self.environ.is_none() {
            self.environ = Some(pos);
        } else if tok.is_keyword("begin") && self.environ.is_some() {
            self.begin_seen = true;
        }
        if tok.opens_block() {
            self.open.push(pos);
        } else if tok.closes_block() && self.open.pop().is_none() {
            self.found.push(diag_at(pos, codes::UNMATCHED_END));
        }
    }

    pub fn finish(mut self) -> ErrorList {
        for pos in self.open.drain(..) {
            self.found.push(diag_at(pos, codes::UNCLOSED_BLOCK));
        }
        match self.environ {
            None => self.found.push(Diagnostic::new(1, 1, codes::MISSING_ENVIRON)),
            Some(env) => {
                if !self.begin_seen {
                    self.found.push(diag_at(env, codes::MISSING_BEGIN));
                }
                if let Some((pos, false)) = self.first {
                    self.found.push(diag_at(pos, codes::TEXT_BEFORE_ENVIRON));
                }
            }
        }
        ErrorList::sorted(self.found)
    }
}

/// Keywords after which an `Ident :` pair is read as a label definition.
const LABEL_CONTEXT: &[&str] = &[
    "begin", "proof", "now", "hereby", "case", "suppose", "theorem", "then", "thus", "hence",
    "that", "assume", "and",
];

/// Labels visible at the current point, one set per open block.
#[derive(Debug)]
pub struct LabelTable {
    scopes: Vec<HashSet<String>>,
}

impl Default for LabelTable {
    fn default() -> Self {
        LabelTable {
            scopes: vec![HashSet::new()],
        }
    }
}

impl LabelTable {
    pub fn define(&mut self, name: &str) {
        self.scopes
            .last_mut()
            .expect("global scope always present")
            .insert(name.to_owned());
    }

    pub fn define_global(&mut self, name: &str) {
        self.scopes[0].insert(name.to_owned());
    }

    pub fn is_visible(&self, name: &str) -> bool {
        self.scopes.iter().any(|s| s.contains(name))
    }

    pub fn open_block(&mut self) {
        self.scopes.push(HashSet::new());
    }

    /// Drops labels of the innermost block; an unmatched `end` is a no-op.
    pub fn close_block(&mut self) {
        if self.scopes.len() > 1 {
            self.scopes.pop();
        }
    }

    pub fn depth(&self) -> usize {
        self.scopes.len() - 1
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
enum ListCtx {
    By,
    SchemeArgs,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
enum Mode {
    Normal,
    Item(ListCtx),
    AfterItem(ListCtx),
    Library(ListCtx),
    SchemeName,
    SchemeLibrary,
    SchemeOpen,
}

#[derive(Clone, Copy)]
struct Sig<'src> {
    kind: TokenKind,
    text: &'src str,
    start: usize,
}

impl Sig<'_> {
    fn is_symbol(&self, s: &str) -> bool {
        self.kind == TokenKind::Symbol && self.text == s
    }

    fn is_keyword(&self, s: &str) -> bool {
        self.kind == TokenKind::Keyword && self.text == s
    }
}

/// Incremental label-reference checker (code 1101).
///
/// Label definitions are `Ident :` at statement start, or `:Ident:` after
/// `means`/`equals` (definitional labels, exported past their block).
/// References are the local labels listed after `by`, and the arguments of
/// `from Scheme(...)`. Library references of the form
/// `ARTICLE:N`, `ARTICLE:def N` and `ARTICLE:sch N` are not checked.
pub struct ReferenceChecker<'src> {
    labels: LabelTable,
    mode: Mode,
    window: Vec<Sig<'src>>,
    prev: [Option<Sig<'src>>; 2],
    found: Vec<Diagnostic>,
}

impl Default for ReferenceChecker<'_> {
    fn default() -> Self {
        ReferenceChecker {
            labels: LabelTable::default(),
            mode: Mode::Normal,
            window: Vec::with_capacity(2),
            prev: [None, None],
            found: Vec::new(),
        }
    }
}

impl<'src> ReferenceChecker<'src> {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn feed(&mut self, tok: &Token<'src>, index: &LineIndex) {
        if tok.is_trivia() {
            return;
        }
        self.window.push(Sig {
            kind: tok.kind,
            text: tok.text,
            start: tok.span.start,
        });
        if self.window.len() == 2 {
            let cur = self.window.remove(0);
            let next = self.window[0];
            self.step(cur, Some(next), index);
        }
    }

    pub fn finish(mut self, index: &LineIndex) -> ErrorList {
        if let Some(cur) = self.window.pop() {
            self.step(cur, None, index);
        }
        ErrorList::sorted(self.found)
    }

    fn step(&mut self, cur: Sig<'src>, next: Option<Sig<'src>>, index: &LineIndex) {
        self.dispatch(cur, next, index);
        self.prev = [Some(cur), self.prev[0]];
    }

    fn check_ref(&mut self, cur: Sig<'src>, index: &LineIndex) {
        if !self.labels.is_visible(cur.text) {
            self.found
                .push(diag_at(index.position(cur.start), codes::UNKNOWN_LABEL));
        }
    }

    fn at_statement_start(&self) -> bool {
        match self.prev[0] {
            None => true,
            Some(p) => {
                p.is_symbol(";")
                    || (p.kind == TokenKind::Keyword && LABEL_CONTEXT.contains(&p.text))
            }
        }
    }

    fn dispatch(&mut self, cur: Sig<'src>, next: Option<Sig<'src>>, index: &LineIndex) {
        let next_is_colon = next.is_some_and(|n| n.is_symbol(":"));
        let is_ident = cur.kind == TokenKind::Identifier;
        match self.mode {
            Mode::Normal => {
                if cur.is_keyword("by") {
                    self.mode = Mode::Item(ListCtx::By);
                } else if cur.is_keyword("from") {
                    self.mode = Mode::SchemeName;
                } else if cur.kind == TokenKind::Keyword && crate::lexis::is_block_opener(cur.text)
                {
                    self.labels.open_block();
                } else if cur.is_keyword("end") {
                    self.labels.close_block();
                } else if is_ident && next_is_colon {
                    let definitional = matches!(
                        self.prev,
                        [Some(c), Some(k)] if c.is_symbol(":") && (k.is_keyword("means") || k.is_keyword("equals"))
                    );
                    if definitional {
                        self.labels.define_global(cur.text);
                    } else if self.at_statement_start() {
                        self.labels.define(cur.text);
                    }
                }
            }
            Mode::Item(ctx) => {
                if is_ident {
                    if next_is_colon {
                        self.mode = Mode::Library(ctx);
                    } else {
                        self.check_ref(cur, index);
                        self.mode = Mode::AfterItem(ctx);
                    }
                } else {
                    self.mode = Mode::Normal;
                    self.dispatch(cur, next, index);
                }
            }
            Mode::Library(ctx) => {
                let part = cur.is_symbol(":")
                    || cur.kind == TokenKind::NumberLiteral
                    || (is_ident && matches!(cur.text, "def" | "sch"));
                if !part {
                    self.mode = Mode::AfterItem(ctx);
                    self.dispatch(cur, next, index);
                }
            }
            Mode::AfterItem(ctx) => {
                if cur.is_symbol(",") {
                    self.mode = Mode::Item(ctx);
                } else if ctx == ListCtx::SchemeArgs && cur.is_symbol(")") {
                    self.mode = Mode::Normal;
                } else {
                    self.mode = Mode::Normal;
                    self.dispatch(cur, next, index);
                }
            }
            Mode::SchemeName => {
                if is_ident {
                    self.mode = if next_is_colon {
                        Mode::SchemeLibrary
                    } else {
                        Mode::SchemeOpen
                    };
                } else {
                    self.mode = Mode::Normal;
                    self.dispatch(cur, next, index);
                }
            }
            Mode::SchemeLibrary => {
                let part = cur.is_symbol(":")
                    || cur.kind == TokenKind::NumberLiteral
                    || (is_ident && cur.text == "sch");
                if !part {
                    self.mode = Mode::SchemeOpen;
                    self.dispatch(cur, next, index);
                }
            }
            Mode::SchemeOpen => {
                if cur.is_symbol("(") {
                    self.mode = Mode::Item(ListCtx::SchemeArgs);
                } else {
                    self.mode = Mode::Normal;
                    self.dispatch(cur, next, index);
                }
            }
        }
    }
}

pub fn check_structure(stream: &TokenStream<'_>, index: &LineIndex) -> ErrorList {
    let mut checker = StructureChecker::new();
    for tok in stream.iter() {
        checker.feed(tok, index);
    }
    checker.finish()
}

pub fn check_references(stream: &TokenStream<'_>, index: &LineIndex) -> ErrorList {
    let mut checker = ReferenceChecker::new();
    for tok in stream.iter() {
        checker.feed(tok, index);
    }
    checker.finish(index)
}

/// Spreads an artificial per-line delay evenly over a run, against a fixed
/// start instant so that sleep overshoot does not accumulate.
struct Pacer {
    start: Instant,
    line_delay: Duration,
    lines: u32,
}

impl Pacer {
    fn tick(&mut self) {
        self.lines += 1;
        if self.line_delay.is_zero() {
            return;
        }
        let target = self.start + self.line_delay * self.lines;
        let now = Instant::now();
        if target > now {
            thread::sleep(target - now);
        }
    }
}

struct PassTracker<'a> {
    pass: PassName,
    total: u32,
    done: u32,
    pacer: &'a mut Pacer,
    sink: &'a mut dyn FnMut(PassProgress),
    cancel: &'a CancelToken,
}

impl<'a> PassTracker<'a> {
    fn begin(
        pass: PassName,
        total: u32,
        pacer: &'a mut Pacer,
        sink: &'a mut dyn FnMut(PassProgress),
        cancel: &'a CancelToken,
    ) -> Result<Self, Canceled> {
        if cancel.is_canceled() {
            return Err(Canceled);
        }
        sink(PassProgress {
            pass,
            current: 1,
            total,
        });
        Ok(PassTracker {
            pass,
            total,
            done: 0,
            pacer,
            sink,
            cancel,
        })
    }

    fn line_done(&mut self) -> Result<(), Canceled> {
        if self.done >= self.total {
            return Ok(());
        }
        self.done += 1;
        self.pacer.tick();
        if self.cancel.is_canceled() {
            return Err(Canceled);
        }
        if self.done % PROGRESS_INTERVAL_LINES == 0 && self.done < self.total {
            (self.sink)(PassProgress {
                pass: self.pass,
                current: self.done,
                total: self.total,
            });
        }
        Ok(())
    }

    fn finish(mut self) -> Result<(), Canceled> {
        while self.done < self.total {
            self.line_done()?;
        }
        (self.sink)(PassProgress {
            pass: self.pass,
            current: self.total,
            total: self.total,
        });
        Ok(())
    }
}

/// Runs the three passes with optional pacing.
#[derive(Clone, Debug, Default)]
pub struct Verifier {
    line_delay: Duration,
}

impl Verifier {
    pub fn new() -> Self {
        Self::default()
    }

    /// Artificial delay per line per pass; a run over `n` lines takes about
    /// `3 * n * delay`.
    pub fn line_delay(mut self, delay: Duration) -> Self {
        self.line_delay = delay;
        self
    }

    /// Picks the per-line delay that makes a run over `lines` lines last `total`.
    pub fn paced_for(lines: u32, total: Duration) -> Self {
        let steps = 3 * lines.max(1);
        Verifier::new().line_delay(total / steps)
    }

    pub fn run(
        &self,
        source: &str,
        sink: &mut dyn FnMut(PassProgress),
        cancel: &CancelToken,
    ) -> Result<ErrorList, Canceled> {
        let index = LineIndex::new(source);
        let total = index.line_count();
        let mut pacer = Pacer {
            start: Instant::now(),
            line_delay: self.line_delay,
            lines: 0,
        };

        let mut pass = PassTracker::begin(PassName::Parser, total, &mut pacer, sink, cancel)?;
        let mut tokens = Vec::new();
        for tok in Lexer::new(source) {
            let newline = tok.kind == TokenKind::Newline;
            tokens.push(tok);
            if newline {
                pass.line_done()?;
            }
        }
        pass.finish()?;
        let stream = TokenStream { source, tokens };

        let mut pass = PassTracker::begin(PassName::Analyzer, total, &mut pacer, sink, cancel)?;
        let mut structure = StructureChecker::new();
        for tok in stream.iter() {
            structure.feed(tok, &index);
            if tok.kind == TokenKind::Newline {
                pass.line_done()?;
            }
        }
        pass.finish()?;
        let mut errors = structure.finish();

        let mut pass = PassTracker::begin(PassName::Checker, total, &mut pacer, sink, cancel)?;
        let mut references = ReferenceChecker::new();
        for tok in stream.iter() {
            references.feed(tok, &index);
            if tok.kind == TokenKind::Newline {
                pass.line_done()?;
            }
        }
        pass.finish()?;
        errors.extend(references.finish(&index));

        errors.sort();
        Ok(errors)
    }
}

pub fn verify_article(
    source: &str,
    sink: &mut dyn FnMut(PassProgress),
    cancel: &CancelToken,
) -> Result<ErrorList, Canceled> {
    Verifier::new().run(source, sink, cancel)
}
