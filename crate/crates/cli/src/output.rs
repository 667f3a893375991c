//! CSV and JSON artifacts.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use serde::Serialize;

pub const CSV_SCHEMA: u32 = 1;

pub enum Cell {
    Num(f64),
    Text(String),
    Empty,
}

impl From<f64> for Cell {
    fn from(x: f64) -> Self {
        Cell::Num(x)
    }
}

impl From<Option<f64>> for Cell {
    fn from(x: Option<f64>) -> Self {
        x.map_or(Cell::Empty, Cell::Num)
    }
}

impl From<&str> for Cell {
    fn from(s: &str) -> Self {
        Cell::Text(s.to_string())
    }
}

impl From<String> for Cell {
    fn from(s: String) -> Self {
        Cell::Text(s)
    }
}

/// Scientific notation with 9 significant digits; non-finite values are left empty.
pub fn fmt_num(x: f64) -> String {
    if x.is_finite() {
        format!("{x:.8e}")
    } else {
        String::new()
    }
}

pub struct Csv {
    header: Vec<&'static str>,
    rows: Vec<Vec<Cell>>,
}

impl Csv {
    pub fn new(header: &[&'static str]) -> Self {
        Self {
            header: header.to_vec(),
            rows: Vec::new(),
        }
    }

    pub fn row(&mut self, cells: Vec<Cell>) {
        assert_eq!(cells.len(), self.header.len());
        self.rows.push(cells);
    }

    pub fn render(&self, command: &str, scenario: &str) -> String {
        let mut s = format!("# storagelab csv schema {CSV_SCHEMA}; command {command}; scenario {scenario}\n");
        s.push_str(&self.header.join(","));
        s.push('\n');
        for row in &self.rows {
            let cells: Vec<String> = row
                .iter()
                .map(|c| match c {
                    Cell::Num(x) => fmt_num(*x),
                    Cell::Text(t) => t.replace(',', ";"),
                    Cell::Empty => String::new(),
                })
                .collect();
            let _ = writeln!(s, "{}", cells.join(","));
        }
        s
    }
}

/// Artifact directory of one command run.
pub struct OutDir {
    pub dir: PathBuf,
    pub scenario: String,
    pub command: &'static str,
}

impl OutDir {
    pub fn new(root: &Path, scenario: &str, command: &'static str) -> Result<Self> {
        let dir = root.join(scenario).join(command);
        fs::create_dir_all(&dir).with_context(|| format!("creating {}", dir.display()))?;
        Ok(Self {
            dir,
            scenario: scenario.to_string(),
            command,
        })
    }

    pub fn csv(&self, file: &str, csv: &Csv) -> Result<()> {
        let path = self.dir.join(file);
        fs::write(&path, csv.render(self.command, &self.scenario)).with_context(|| format!("writing {}", path.display()))
    }

    pub fn json<T: Serialize>(&self, file: &str, value: &T) -> Result<()> {
        let path = self.dir.join(file);
        let mut text = serde_json::to_string_pretty(value)?;
        text.push('\n');
        fs::write(&path, text).with_context(|| format!("writing {}", path.display()))
    }
}
