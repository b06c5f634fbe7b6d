//! Results directory layout.
//!
//! ```text
//! <out>/<experiment>/
//!     config.toml      resolved configuration, including the seed actually used
//!     replicates.csv   one row per replicate (absent for purely analytic runs)
//!     aggregate.csv    one row per estimated quantity
//!     <table>.csv      extra tables some experiments emit
//!     <plot>.dat       two whitespace-separated columns, `#` header lines
//!     summary.json     metadata and pass/fail per acceptance criterion
//! ```
//!
//! Everything except `summary.json` is a pure function of the resolved config.

use std::fs;
use std::io::{self, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::config::RunConfig;

/// Version of the `summary.json` layout.
pub const SUMMARY_SCHEMA_VERSION: u32 = 1;

/// Build version, `git describe` style when built from a checkout.
pub const VERSION: &str = env!("CATALYTIC_BBM_VERSION");

pub const TOLERANCE_NOTE: &str =
    "The targets are long-time limits; all finite-time tolerances are engineering choices.";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Criterion {
    /// Acceptance criterion identifier, e.g. `A1`.
    pub id: String,
    pub description: String,
    pub passed: bool,
    pub detail: String,
}

impl Criterion {
    pub fn new(id: &str, description: impl Into<String>, passed: bool, detail: impl Into<String>) -> Self {
        Self {
            id: id.into(),
            description: description.into(),
            passed,
            detail: detail.into(),
        }
    }

    pub fn line(&self) -> String {
        format!(
            "{} {:<4} {} | {}",
            if self.passed { "PASS" } else { "FAIL" },
            self.id,
            self.description,
            self.detail
        )
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct Table {
    pub header: Vec<String>,
    pub rows: Vec<Vec<String>>,
}

impl Table {
    pub fn new(header: &[&str]) -> Self {
        Self {
            header: header.iter().map(|h| h.to_string()).collect(),
            rows: Vec::new(),
        }
    }

    pub fn push<I: IntoIterator<Item = String>>(&mut self, row: I) {
        let row: Vec<String> = row.into_iter().collect();
        debug_assert_eq!(row.len(), self.header.len());
        self.rows.push(row);
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn write_csv(&self, path: &Path) -> io::Result<()> {
        let mut w = csv::Writer::from_path(path)?;
        w.write_record(&self.header)?;
        for r in &self.rows {
            w.write_record(r)?;
        }
        w.flush()
    }

    /// Fixed-width rendering for the terminal.
    pub fn render(&self) -> String {
        let widths: Vec<usize> = (0..self.header.len())
            .map(|c| {
                self.rows
                    .iter()
                    .map(|r| r[c].len())
                    .chain([self.header[c].len()])
                    .max()
                    .unwrap_or(0)
            })
            .collect();
        let line = |cells: &[String]| {
            cells
                .iter()
                .zip(&widths)
                .map(|(c, w)| format!("{c:>w$}"))
                .collect::<Vec<_>>()
                .join("  ")
        };
        let mut s = line(&self.header);
        for r in &self.rows {
            s.push('\n');
            s.push_str(&line(r));
        }
        s
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Plot {
    pub name: String,
    pub x_label: String,
    pub y_label: String,
    pub points: Vec<(f64, f64)>,
}

impl Plot {
    pub fn new(name: &str, x_label: &str, y_label: &str, points: Vec<(f64, f64)>) -> Self {
        Self {
            name: name.into(),
            x_label: x_label.into(),
            y_label: y_label.into(),
            points,
        }
    }

    fn write(&self, path: &Path) -> io::Result<()> {
        let mut f = io::BufWriter::new(fs::File::create(path)?);
        writeln!(f, "# {}", self.name)?;
        writeln!(f, "# {} {}", self.x_label, self.y_label)?;
        for (x, y) in &self.points {
            writeln!(f, "{x} {y}")?;
        }
        f.flush()
    }
}

/// What an experiment produced, before anything is written.
#[derive(Debug, Clone, Default)]
pub struct Outcome {
    pub claim: String,
    pub criteria: Vec<Criterion>,
    pub replicates: Table,
    pub aggregate: Table,
    pub tables: Vec<(String, Table)>,
    pub plots: Vec<Plot>,
    /// Human-readable report printed to stdout.
    pub text: String,
}

impl Outcome {
    pub fn passed(&self) -> bool {
        self.criteria.iter().all(|c| c.passed)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub schema_version: u32,
    pub version: String,
    pub experiment: String,
    pub claim: String,
    pub config: RunConfig,
    pub seed: u64,
    pub rng: String,
    pub threads: usize,
    pub wall_clock_seconds: f64,
    pub tolerance_note: String,
    pub passed: bool,
    pub criteria: Vec<Criterion>,
}

/// Write every artifact of `outcome` and return the results directory.
pub fn write_results(
    config: &RunConfig,
    outcome: &Outcome,
    threads: usize,
    wall_clock_seconds: f64,
) -> io::Result<PathBuf> {
    let dir = config.results_dir();
    fs::create_dir_all(&dir)?;
    fs::write(dir.join("config.toml"), config.to_toml())?;
    if !outcome.replicates.is_empty() {
        outcome.replicates.write_csv(&dir.join("replicates.csv"))?;
    }
    outcome.aggregate.write_csv(&dir.join("aggregate.csv"))?;
    for (name, t) in &outcome.tables {
        t.write_csv(&dir.join(format!("{name}.csv")))?;
    }
    for p in &outcome.plots {
        p.write(&dir.join(format!("{}.dat", p.name)))?;
    }
    let summary = Summary {
        schema_version: SUMMARY_SCHEMA_VERSION,
        version: VERSION.into(),
        experiment: config.experiment.name().into(),
        claim: outcome.claim.clone(),
        config: config.clone(),
        seed: config.seed,
        rng: catalytic_bbm::rng::GENERATOR.into(),
        threads,
        wall_clock_seconds,
        tolerance_note: TOLERANCE_NOTE.into(),
        passed: outcome.passed(),
        criteria: outcome.criteria.clone(),
    };
    let json = serde_json::to_string_pretty(&summary).map_err(io::Error::other)?;
    fs::write(dir.join("summary.json"), json + "\n")?;
    Ok(dir)
}

/// Shortest round-trip decimal form.
pub fn num(x: f64) -> String {
    x.to_string()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn table_renders_aligned() {
        let mut t = Table::new(&["a", "long"]);
        t.push(["1".to_string(), "2".to_string()]);
        let s = t.render();
        assert_eq!(s.lines().count(), 2);
        assert!(s.lines().all(|l| l.len() == "a  long".len()));
    }

    #[test]
    fn criterion_line_has_verdict_and_id() {
        let c = Criterion::new("A7", "ratio", false, "off by 0.2");
        assert!(c.line().starts_with("FAIL A7"));
    }
}
