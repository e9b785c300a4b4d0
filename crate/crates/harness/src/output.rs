//! Run artifacts: CSV tables, invariant checks and the manifest.
//!
//! `manifest.txt` holds `key=value` lines: run parameters under `param.`,
//! check verdicts under `check.`, and the SHA-256 of every other file under
//! `file.`, so `verify` can detect tampering.

use std::collections::BTreeMap;
use std::fmt::Display;
use std::fs;
use std::path::Path;

use anyhow::{Context, Result};
use sha2::{Digest, Sha256};

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Table {
    pub header: Vec<String>,
    pub rows: Vec<Vec<String>>,
}

impl Table {
    pub fn new(header: &[&str]) -> Self {
        Table {
            header: header.iter().map(|s| s.to_string()).collect(),
            rows: Vec::new(),
        }
    }

    pub fn push(&mut self, row: Vec<String>) {
        debug_assert_eq!(row.len(), self.header.len());
        self.rows.push(row);
    }

    pub fn to_csv(&self) -> Vec<u8> {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(&self.header).expect("in-memory write");
        for r in &self.rows {
            w.write_record(r).expect("in-memory write");
        }
        w.into_inner().expect("in-memory flush")
    }

    pub fn from_csv(bytes: &[u8]) -> Result<Table> {
        let mut r = csv::Reader::from_reader(bytes);
        let header = r.headers()?.iter().map(str::to_string).collect();
        let rows = r
            .records()
            .map(|rec| rec.map(|r| r.iter().map(str::to_string).collect()))
            .collect::<Result<_, _>>()?;
        Ok(Table { header, rows })
    }

    pub fn column(&self, name: &str) -> Option<usize> {
        self.header.iter().position(|h| h == name)
    }
}

/// Builds a row from displayable cells.
#[macro_export]
macro_rules! row {
    ($($cell:expr),* $(,)?) => {
        vec![$($cell.to_string()),*]
    };
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Check {
    pub name: String,
    pub pass: bool,
    pub detail: String,
}

#[derive(Debug, Clone, Default)]
pub struct RunOutput {
    pub experiment: String,
    pub params: BTreeMap<String, String>,
    pub metrics: Table,
    /// Additional files by name.
    pub files: BTreeMap<String, Vec<u8>>,
    pub checks: Vec<Check>,
    /// Human-readable summary lines.
    pub notes: Vec<String>,
}

impl RunOutput {
    pub fn new(experiment: &str) -> Self {
        RunOutput {
            experiment: experiment.to_string(),
            ..RunOutput::default()
        }
    }

    pub fn param(&mut self, key: &str, value: impl Display) {
        self.params.insert(key.to_string(), value.to_string());
    }

    pub fn check(&mut self, name: &str, pass: bool, detail: impl Into<String>) {
        self.checks.push(Check {
            name: name.to_string(),
            pass,
            detail: detail.into(),
        });
    }

    pub fn note(&mut self, line: impl Into<String>) {
        self.notes.push(line.into());
    }

    pub fn file(&mut self, name: &str, bytes: Vec<u8>) {
        self.files.insert(name.to_string(), bytes);
    }

    pub fn passed(&self) -> bool {
        self.checks.iter().all(|c| c.pass)
    }

    pub fn check_named(&self, name: &str) -> Option<&Check> {
        self.checks.iter().find(|c| c.name == name)
    }

    pub fn manifest(&self) -> String {
        let mut lines = vec![format!("experiment={}", self.experiment)];
        for (k, v) in &self.params {
            lines.push(format!("param.{k}={v}"));
        }
        lines.push(format!("file.metrics.csv={}", sha256_hex(&self.metrics.to_csv())));
        for (name, bytes) in &self.files {
            lines.push(format!("file.{name}={}", sha256_hex(bytes)));
        }
        for c in &self.checks {
            lines.push(format!("check.{}={}", c.name, if c.pass { "pass" } else { "fail" }));
        }
        lines.join("\n") + "\n"
    }

    pub fn write(&self, dir: &Path) -> Result<()> {
        fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
        fs::write(dir.join("metrics.csv"), self.metrics.to_csv())?;
        for (name, bytes) in &self.files {
            fs::write(dir.join(name), bytes)?;
        }
        fs::write(dir.join("manifest.txt"), self.manifest())?;
        Ok(())
    }

    pub fn summary(&self) -> String {
        let mut s = format!("{}\n", self.experiment);
        for n in &self.notes {
            s.push_str(&format!("  {n}\n"));
        }
        for c in &self.checks {
            s.push_str(&format!("  [{}] {}: {}\n", if c.pass { "pass" } else { "FAIL" }, c.name, c.detail));
        }
        s
    }
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

pub fn parse_manifest(text: &str) -> BTreeMap<String, String> {
    text.lines()
        .filter_map(|l| l.split_once('='))
        .map(|(k, v)| (k.trim().to_string(), v.trim().to_string()))
        .collect()
}
