//! Random generators and independent oracles shared by the property suites
//! and the acceptance target. Oracles here never call the code under test.
#![allow(dead_code)]

pub mod fixtures;

use std::collections::HashSet;

use mizsrv_core::Diagnostic;
use rand::rngs::StdRng;
use rand::seq::IndexedRandom;
use rand::{Rng, SeedableRng};

pub fn rng(seed: u64) -> StdRng {
    StdRng::seed_from_u64(seed)
}

const OPENERS: &[&str] = &[
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

const WORDS: &[&str] = &[
    "environ", "begin", "end", "thus", "hence", "by", "from", "per", "cases", "let", "be",
    "being", "for", "ex", "st", "holds", "then", "assume", "theorem", "means", "equals", "x",
    "y1", "A1", "x'", "_tmp", "thesis", "proofs", "ender", "Nat", "XBOOLE_0",
];

const SYMBOLS: &[&str] = &[
    ";", ":", ",", "(", ")", "[", "]", "{", "}", "=", ".=", ":=", "->", "<>", "<=", ">=", "+",
    "-", "*", "/", ".", "&", "|", "$", "#", "@", "!", "?", "'", "\"", "\\", "^", "~", "`",
];

const UNICODE: &[&str] = &["é", "∀", "λx", "→", "ℕ", "日本", "🙂"];

const BLANKS: &[&str] = &[" ", "  ", "\t", "\r", "\x0b", "\x0c"];

/// Arbitrary lexer input: keywords, identifiers, symbols, comments, odd
/// whitespace and multi-byte characters glued together with or without gaps.
pub fn random_source(r: &mut StdRng) -> String {
    let n = r.random_range(0..80);
    let mut s = String::new();
    for _ in 0..n {
        match r.random_range(0..10) {
            0 => s.push_str(OPENERS.choose(r).unwrap()),
            1 | 2 => s.push_str(WORDS.choose(r).unwrap()),
            3 => s.push_str(&r.random_range(0..100_000u32).to_string()),
            4 => s.push_str(SYMBOLS.choose(r).unwrap()),
            5 => s.push_str(UNICODE.choose(r).unwrap()),
            6 => {
                s.push_str("::");
                for _ in 0..r.random_range(0..6) {
                    s.push_str([" ", "\t", "x", "::", "é", "end"].choose(r).unwrap());
                }
            }
            7 => s.push_str(["\n", "\r\n", "\n\n"].choose(r).unwrap()),
            _ => s.push_str(BLANKS.choose(r).unwrap()),
        }
        if r.random_bool(0.6) {
            s.push(' ');
        }
    }
    s
}

/// Article-shaped text with random indentation, blocks, comments, blank
/// runs, trailing blanks and CRLF endings.
pub fn random_article(r: &mut StdRng) -> String {
    let mut s = String::from("environ\n");
    if r.random_bool(0.5) {
        s.push_str(" vocabularies XBOOLE_0;\n");
    }
    s.push_str("begin\n");
    let mut depth = 0usize;
    for _ in 0..r.random_range(0..60) {
        for _ in 0..r.random_range(0..4) {
            s.push_str([" ", "\t", "  "].choose(r).unwrap());
        }
        match r.random_range(0..9) {
            0 | 1 if depth < 10 => {
                s.push_str(OPENERS.choose(r).unwrap());
                depth += 1;
            }
            2 => {
                s.push_str(["end;", "end", "end ;"].choose(r).unwrap());
                depth = depth.saturating_sub(1);
            }
            3 => s.push_str(":: remark\twith tab"),
            4 => {}
            5 => s.push_str("A1: x\t= y by B2, XBOOLE_0:def 3;"),
            6 => s.push_str(&random_source(r).replace('\n', " ")),
            _ => s.push_str("thus thesis; :: trailing"),
        }
        for _ in 0..r.random_range(0..3) {
            s.push_str([" ", "\t"].choose(r).unwrap());
        }
        s.push_str(["\n", "\n", "\r\n", "\n\n"].choose(r).unwrap());
    }
    if r.random_bool(0.3) {
        s.push_str("end;");
    }
    s
}

// ---------------------------------------------------------------------------
// Block structure

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum BlockItem {
    Open(&'static str),
    Close,
}

/// A generated opener/closer sequence laid out after a fixed header, with
/// the position of every item recorded at generation time.
#[derive(Clone, Debug)]
pub struct BlockCase {
    pub source: String,
    pub items: Vec<(u32, u32, BlockItem)>,
}

/// Appends text to a source while tracking the 1-based line/column of the
/// write position (ASCII only).
struct Writer {
    src: String,
    line: u32,
    col: u32,
}

impl Writer {
    fn new() -> Self {
        Writer {
            src: String::new(),
            line: 1,
            col: 1,
        }
    }

    fn put(&mut self, s: &str) {
        for ch in s.chars() {
            assert!(ch.is_ascii());
            if ch == '\n' {
                self.line += 1;
                self.col = 1;
            } else {
                self.col += 1;
            }
        }
        self.src.push_str(s);
    }

    fn pos(&self) -> (u32, u32) {
        (self.line, self.col)
    }
}

/// Up to 200 openers/closers with nesting depth at most 8.
pub fn block_case(r: &mut StdRng) -> BlockCase {
    let mut w = Writer::new();
    w.put("environ\nbegin\n");
    let mut items = Vec::new();
    let mut depth = 0usize;
    let len = r.random_range(0..=200);
    let mut on_line = 0;
    for _ in 0..len {
        if on_line == 0 {
            for _ in 0..r.random_range(0..4) {
                w.put(" ");
            }
        } else {
            w.put([" ", "  "].choose(r).unwrap());
        }
        if r.random_bool(0.15) {
            w.put(["thus thesis; ", "per cases; ", "x := y; ", ":: end proof\n"].choose(r).unwrap());
            if w.col == 1 {
                on_line = 0;
                continue;
            }
        }
        let open = depth < 8 && (depth == 0 && r.random_bool(0.8) || r.random_bool(0.55));
        let (line, col) = w.pos();
        if open {
            let kw = *OPENERS.choose(r).unwrap();
            w.put(kw);
            items.push((line, col, BlockItem::Open(kw)));
            depth += 1;
        } else {
            w.put(["end;", "end"].choose(r).unwrap());
            items.push((line, col, BlockItem::Close));
            depth = depth.saturating_sub(1);
        }
        on_line += 1;
        if on_line >= 3 || r.random_bool(0.6) {
            w.put("\n");
            on_line = 0;
        }
    }
    BlockCase {
        source: w.src,
        items,
    }
}

/// Plain push/pop stack machine over the recorded items.
pub fn stack_oracle(case: &BlockCase) -> Vec<Diagnostic> {
    let mut stack: Vec<(u32, u32)> = Vec::new();
    let mut out = Vec::new();
    for &(line, col, item) in &case.items {
        match item {
            BlockItem::Open(_) => stack.push((line, col)),
            BlockItem::Close => {
                if stack.pop().is_none() {
                    out.push(Diagnostic::new(line, col, 1001));
                }
            }
        }
    }
    out.extend(stack.into_iter().map(|(l, c)| Diagnostic::new(l, c, 1002)));
    out.sort();
    out
}

// ---------------------------------------------------------------------------
// Label references

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum LabelEvent {
    Define(String),
    Reference { name: String, line: u32, col: u32 },
    Open,
    Close,
}

#[derive(Clone, Debug)]
pub struct LabelCase {
    pub source: String,
    pub events: Vec<LabelEvent>,
}

const LABELS: &[&str] = &["A1", "A2", "A3", "B1", "B2", "Lm1", "Z"];
const REF_OPENERS: &[&str] = &["proof", "now", "hereby", "case", "suppose"];
const DEF_PREFIX: &[&str] = &["", "then ", "thus ", "hence ", "assume "];

/// A program of label definitions, `by`/`from` references and blocks. With
/// `balanced`, blocks are closed properly and only visible labels are cited.
pub fn label_case(r: &mut StdRng, balanced: bool) -> LabelCase {
    let mut w = Writer::new();
    w.put("environ\nbegin\n");
    let mut events = Vec::new();
    let mut scopes: Vec<Vec<String>> = vec![Vec::new()];
    let visible = |scopes: &Vec<Vec<String>>| -> Vec<String> {
        scopes.iter().flatten().cloned().collect::<Vec<_>>()
    };

    for _ in 0..r.random_range(1..50) {
        w.put(&" ".repeat(r.random_range(0..3)));
        match r.random_range(0..10) {
            0..=2 => {
                let name = LABELS.choose(r).unwrap().to_string();
                w.put(DEF_PREFIX.choose(r).unwrap());
                w.put(&name);
                w.put([": thesis;", ": x = y;", ": not contradiction;"].choose(r).unwrap());
                scopes.last_mut().unwrap().push(name.clone());
                events.push(LabelEvent::Define(name));
            }
            3..=5 => {
                let pool: Vec<String> = if balanced {
                    visible(&scopes)
                } else {
                    LABELS.iter().map(|s| s.to_string()).collect()
                };
                if pool.is_empty() {
                    w.put("thus thesis;\n");
                    continue;
                }
                let n = r.random_range(1..4);
                let names: Vec<String> = (0..n).map(|_| pool.choose(r).unwrap().clone()).collect();
                let scheme = r.random_bool(0.3);
                w.put(["thus thesis ", "then x = y ", "hence thesis "].choose(r).unwrap());
                w.put(if scheme { "from Sch1(" } else { "by " });
                for (i, name) in names.iter().enumerate() {
                    if i > 0 {
                        w.put(", ");
                    }
                    if !scheme && r.random_bool(0.2) {
                        w.put(["XBOOLE_0:def 3, ", "ARYTM:5, "].choose(r).unwrap());
                    }
                    let (line, col) = w.pos();
                    w.put(name);
                    events.push(LabelEvent::Reference {
                        name: name.clone(),
                        line,
                        col,
                    });
                }
                w.put(if scheme { ");" } else { ";" });
            }
            6 | 7 => {
                w.put(REF_OPENERS.choose(r).unwrap());
                scopes.push(Vec::new());
                events.push(LabelEvent::Open);
            }
            _ => {
                if balanced && scopes.len() == 1 {
                    w.put("thus thesis;\n");
                    continue;
                }
                w.put("end;");
                if scopes.len() > 1 {
                    scopes.pop();
                }
                events.push(LabelEvent::Close);
            }
        }
        w.put("\n");
    }
    if balanced {
        while scopes.len() > 1 {
            w.put("end;\n");
            scopes.pop();
            events.push(LabelEvent::Close);
        }
    }
    LabelCase {
        source: w.src,
        events,
    }
}

/// Replays the events with an explicit stack of scopes.
pub fn scope_replay_oracle(case: &LabelCase) -> Vec<Diagnostic> {
    let mut scopes: Vec<HashSet<&str>> = vec![HashSet::new()];
    let mut out = Vec::new();
    for ev in &case.events {
        match ev {
            LabelEvent::Define(name) => {
                scopes.last_mut().unwrap().insert(name);
            }
            LabelEvent::Reference { name, line, col } => {
                if !scopes.iter().any(|s| s.contains(name.as_str())) {
                    out.push(Diagnostic::new(*line, *col, 1101));
                }
            }
            LabelEvent::Open => scopes.push(HashSet::new()),
            LabelEvent::Close => {
                if scopes.len() > 1 {
                    scopes.pop();
                }
            }
        }
    }
    out.sort();
    out
}

// ---------------------------------------------------------------------------
// Lint

/// Text exercising every lint rule: tabs inside and outside comments, long
/// lines, blank runs, trailing blanks, CRLF and deep nesting.
pub fn random_lint_text(r: &mut StdRng) -> String {
    let mut s = String::new();
    for _ in 0..r.random_range(0..40) {
        match r.random_range(0..12) {
            0 => {}
            1 => s.push_str([" ", "\t", " \t "].choose(r).unwrap()),
            2 => s.push_str(&"a".repeat(r.random_range(70..100))),
            3 => s.push_str("x\t:= y;"),
            4 => s.push_str(":: note\there\t"),
            5 => s.push_str("thus x; :: c\t"),
            6 => {
                for _ in 0..r.random_range(1..5) {
                    s.push_str(OPENERS.choose(r).unwrap());
                    s.push(' ');
                }
            }
            7 => s.push_str("end; end;"),
            8 => s.push_str("1proof x'proof éproof _now"),
            9 => s.push_str(&random_source(r).replace('\n', " ")),
            _ => s.push_str("thus thesis;"),
        }
        if r.random_bool(0.3) {
            s.push_str([" ", "\t", "\x0c"].choose(r).unwrap());
        }
        s.push_str(["\n", "\n", "\r\n", "\n\n", "\n\n\n"].choose(r).unwrap());
    }
    if r.random_bool(0.5) {
        s.push_str("tail");
    }
    s
}

/// Lines without terminator and without one trailing CR; the empty piece
/// after a final `\n` is not a line.
fn lines(src: &str) -> Vec<&str> {
    let mut v: Vec<&str> = src.split('\n').collect();
    if v.last() == Some(&"") {
        v.pop();
    }
    v.into_iter()
        .map(|l| l.strip_suffix('\r').unwrap_or(l))
        .collect()
}

fn blank(c: char) -> bool {
    matches!(c, ' ' | '\t' | '\r' | '\x0b' | '\x0c')
}

pub fn scan_trailing_whitespace(src: &str) -> Vec<Diagnostic> {
    let mut out = Vec::new();
    for (i, l) in lines(src).iter().enumerate() {
        let kept = l.trim_end_matches(blank);
        if kept.len() < l.len() {
            out.push(Diagnostic::new(i as u32 + 1, kept.len() as u32 + 1, 1201));
        }
    }
    out
}

pub fn scan_tabs(src: &str) -> Vec<Diagnostic> {
    let mut out = Vec::new();
    for (i, l) in lines(src).iter().enumerate() {
        let code = &l[..l.find("::").unwrap_or(l.len())];
        if let Some(p) = code.find('\t') {
            out.push(Diagnostic::new(i as u32 + 1, p as u32 + 1, 1202));
        }
    }
    out
}

pub fn scan_long_lines(src: &str, max: u32) -> Vec<Diagnostic> {
    let mut out = Vec::new();
    for (i, l) in lines(src).iter().enumerate() {
        if l.len() > max as usize {
            out.push(Diagnostic::new(i as u32 + 1, max + 1, 1203));
        }
    }
    out
}

pub fn scan_blank_runs(src: &str) -> Vec<Diagnostic> {
    let mut out = Vec::new();
    let mut run = 0;
    for (i, l) in lines(src).iter().enumerate() {
        if l.chars().all(blank) {
            run += 1;
            if run == 2 {
                out.push(Diagnostic::new(i as u32 + 1, 1, 1204));
            }
        } else {
            run = 0;
        }
    }
    out
}

pub fn scan_nesting(src: &str) -> Vec<Diagnostic> {
    let mut out = Vec::new();
    let mut depth = 0usize;
    for (i, l) in lines(src).iter().enumerate() {
        let code = &l[..l.find("::").unwrap_or(l.len())];
        let b = code.as_bytes();
        let mut p = 0;
        while p < b.len() {
            if b[p].is_ascii_alphabetic() || b[p] == b'_' {
                let start = p;
                while p < b.len() && (b[p].is_ascii_alphanumeric() || b[p] == b'_' || b[p] == b'\'') {
                    p += 1;
                }
                let word = &code[start..p];
                if OPENERS.contains(&word) {
                    depth += 1;
                    if depth > 8 {
                        out.push(Diagnostic::new(i as u32 + 1, start as u32 + 1, 1205));
                    }
                } else if word == "end" {
                    depth = depth.saturating_sub(1);
                }
            } else if b[p].is_ascii_digit() {
                while p < b.len() && b[p].is_ascii_digit() {
                    p += 1;
                }
            } else {
                p += 1;
            }
        }
    }
    out
}

/// Union of the five single-rule scanners, sorted.
pub fn lint_oracle(src: &str, max_line_length: u32) -> Vec<Diagnostic> {
    let mut all = scan_trailing_whitespace(src);
    all.extend(scan_tabs(src));
    all.extend(scan_long_lines(src, max_line_length));
    all.extend(scan_blank_runs(src));
    all.extend(scan_nesting(src));
    all.sort();
    all
}

// ---------------------------------------------------------------------------
// Tokens and diagnostics

/// Non-newline token texts, the formatter's preservation target.
pub fn significant_tokens(src: &str) -> Vec<(mizsrv_core::TokenKind, String)> {
    mizsrv_core::tokenize(src)
        .iter()
        .filter(|t| t.kind != mizsrv_core::TokenKind::Newline)
        .map(|t| (t.kind, t.text.to_owned()))
        .collect()
}

pub fn random_error_list(r: &mut StdRng) -> Vec<Diagnostic> {
    let field = |r: &mut StdRng| -> u32 {
        match r.random_range(0..4) {
            0 => r.random_range(1..10),
            1 => r.random_range(1..10_000),
            2 => r.random_range(1..=u32::MAX),
            _ => u32::MAX,
        }
    };
    let n = r.random_range(0..40);
    let mut v: Vec<Diagnostic> = (0..n)
        .map(|_| Diagnostic::new(field(r), field(r), field(r)))
        .collect();
    v.sort();
    v
}

/// Arbitrary bytes, or a valid `.err` image with a few byte-level mutations.
pub fn fuzz_err_input(r: &mut StdRng) -> Vec<u8> {
    if r.random_bool(0.4) {
        let n = r.random_range(0..64);
        return (0..n).map(|_| r.random()).collect();
    }
    let mut data = Vec::new();
    for d in random_error_list(r) {
        data.extend_from_slice(format!("{} {} {}\n", d.line, d.column, d.code).as_bytes());
    }
    for _ in 0..r.random_range(0..4) {
        let pos = if data.is_empty() { 0 } else { r.random_range(0..=data.len()) };
        let noise: &[u8] = [
            &b" "[..],
            b"\n",
            b"\r\n",
            b"-",
            b"0",
            b"x",
            b"99999999999",
            b"\xff",
            b"\t",
            b"+1",
        ]
        .choose(r)
        .unwrap();
        match r.random_range(0..3) {
            0 => data.splice(pos..pos, noise.iter().copied()).for_each(drop),
            1 if pos < data.len() => {
                data.remove(pos);
            }
            _ if pos < data.len() => data[pos] = r.random(),
            _ => {}
        }
    }
    data
}
