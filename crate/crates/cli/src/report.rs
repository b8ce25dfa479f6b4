//! Line-oriented report rendering: `[section]` headers, one `key = value`
//! pair per line, comma-separated tables with a header row. Floats always
//! print in full-precision scientific notation so equal runs emit equal
//! bytes.

use std::fmt::Write as _;

pub fn float(value: f64) -> String {
    format!("{value:.16e}")
}

#[derive(Default)]
pub struct Report {
    out: String,
}

impl Report {
    pub fn new() -> Report {
        Report::default()
    }

    pub fn section(&mut self, name: &str) {
        if !self.out.is_empty() {
            self.out.push('\n');
        }
        let _ = writeln!(self.out, "[{name}]");
    }

    pub fn table(&mut self, name: &str, columns: &[&str]) {
        if !self.out.is_empty() {
            self.out.push('\n');
        }
        let _ = writeln!(self.out, "[table {name}]");
        let _ = writeln!(self.out, "{}", columns.join(","));
    }

    pub fn kv(&mut self, key: &str, value: impl std::fmt::Display) {
        let _ = writeln!(self.out, "{key} = {value}");
    }

    pub fn kv_float(&mut self, key: &str, value: f64) {
        let _ = writeln!(self.out, "{key} = {}", float(value));
    }

    pub fn row(&mut self, cells: &[String]) {
        let _ = writeln!(self.out, "{}", cells.join(","));
    }

    pub fn render(self) -> String {
        self.out
    }
}

/// The deterministic run description every report opens with. Wall-clock
/// time deliberately stays out: it goes to stderr so equal inputs produce
/// equal reports.
pub struct Manifest {
    pub command: &'static str,
    pub seed: u64,
    /// (slot, path as given on the command line).
    pub inputs: Vec<(String, String)>,
    /// Resolved option values, in declaration order.
    pub options: Vec<(String, String)>,
}

impl Manifest {
    pub fn new(command: &'static str, seed: u64) -> Manifest {
        Manifest {
            command,
            seed,
            inputs: Vec::new(),
            options: Vec::new(),
        }
    }

    pub fn input(&mut self, slot: &str, path: &std::path::Path) {
        self.inputs.push((slot.to_string(), path.display().to_string()));
    }

    pub fn option(&mut self, key: &str, value: impl std::fmt::Display) {
        self.options.push((key.to_string(), value.to_string()));
    }

    pub fn option_float(&mut self, key: &str, value: f64) {
        self.options.push((key.to_string(), float(value)));
    }

    pub fn emit(&self, report: &mut Report) {
        report.section("manifest");
        report.kv("command", self.command);
        report.kv("version", env!("CARGO_PKG_VERSION"));
        report.kv("seed", self.seed);
        for (slot, path) in &self.inputs {
            report.kv(&format!("input.{slot}"), path);
        }
        for (key, value) in &self.options {
            report.kv(&format!("option.{key}"), value);
        }
    }
}
