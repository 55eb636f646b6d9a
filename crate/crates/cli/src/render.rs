//! Terminal rendering of progress and diagnostics.

use mizsrv_core::AnnotatedDiagnostic;

pub const BAR_WIDTH: usize = 20;

/// `[Analyzer] #########··········· 49%`
pub fn progress_line(pass: Option<&str>, percent: u8) -> String {
    let pct = usize::from(percent.min(100));
    let filled = pct * BAR_WIDTH / 100;
    format!(
        "[{}] {}{} {pct:>3}%",
        pass.unwrap_or("queued"),
        "#".repeat(filled),
        "·".repeat(BAR_WIDTH - filled)
    )
}

/// `<file>:<line>:<col>: error <code>: <message>`, one per line.
pub fn diagnostic_line(file: &str, d: &AnnotatedDiagnostic) -> String {
    let message = d.message.replace(['\n', '\r'], " ");
    format!(
        "{file}:{}:{}: error {}: {message}",
        d.diagnostic.line, d.diagnostic.column, d.diagnostic.code
    )
}

/// Emits a progress line only when it changes; percent never goes backwards.
#[derive(Debug, Default)]
pub struct ProgressView {
    shown: Option<(Option<String>, u8)>,
    high_water: u8,
}

impl ProgressView {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn update(&mut self, pass: Option<&str>, percent: u8) -> Option<String> {
        self.high_water = self.high_water.max(percent.min(100));
        let key = (pass.map(str::to_owned), self.high_water);
        if self.shown.as_ref() == Some(&key) {
            return None;
        }
        self.shown = Some(key);
        Some(progress_line(pass, self.high_water))
    }

    pub fn percent(&self) -> u8 {
        self.high_water
    }
}
