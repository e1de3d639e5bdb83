//! Experiment reports: raw values, their aggregates, paired comparisons,
//! JSON persistence and an aligned text table that parses back exactly.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::metrics::MeanStd;
use crate::stats::SignedRankResult;
use crate::EvalError;

/// One measured quantity of one variant.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Column {
    pub name: String,
    /// Raw values the aggregate is computed from: one per fold for
    /// accuracies and timings, one per held-out chunk for structure error.
    pub values: Vec<f64>,
    pub mean: f64,
    pub std: f64,
}

impl Column {
    pub fn new(name: impl Into<String>, values: Vec<f64>) -> Self {
        let MeanStd { mean, std } = MeanStd::of(&values);
        Self { name: name.into(), values, mean, std }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Row {
    pub variant: String,
    pub columns: Vec<Column>,
}

impl Row {
    pub fn column(&self, name: &str) -> Option<&Column> {
        self.columns.iter().find(|c| c.name == name)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Comparison {
    pub a: String,
    pub b: String,
    pub column: String,
    pub test: String,
    pub result: SignedRankResult,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentReport {
    pub experiment: String,
    pub seed: u64,
    pub folds: usize,
    pub stratified: bool,
    pub rows: Vec<Row>,
    #[serde(default)]
    pub comparisons: Vec<Comparison>,
    /// Scalar facts about the run, e.g. hand-label counts.
    #[serde(default)]
    pub facts: BTreeMap<String, f64>,
    #[serde(default)]
    pub warnings: Vec<String>,
    pub seconds: f64,
}

/// Cells as parsed back from a text table: `(variant, [(mean, std)])`.
pub type ParsedTable = Vec<(String, Vec<(f64, f64)>)>;

impl ExperimentReport {
    pub fn row(&self, variant: &str) -> Option<&Row> {
        self.rows.iter().find(|r| r.variant == variant)
    }

    pub fn mean(&self, variant: &str, column: &str) -> Option<f64> {
        self.row(variant)?.column(column).map(|c| c.mean)
    }

    pub fn comparison(&self, a: &str, b: &str) -> Option<&Comparison> {
        self.comparisons.iter().find(|c| c.a == a && c.b == b)
    }

    /// Largest gap between a stored aggregate and the one recomputed from
    /// its raw values.
    pub fn recompute_error(&self) -> f64 {
        let mut worst = 0.0f64;
        for col in self.rows.iter().flat_map(|r| &r.columns) {
            let fresh = MeanStd::of(&col.values);
            for (a, b) in [(col.mean, fresh.mean), (col.std, fresh.std)] {
                worst = worst.max(if a.is_nan() && b.is_nan() { 0.0 } else { (a - b).abs() });
            }
        }
        worst
    }

    fn column_names(&self) -> Vec<&str> {
        let mut names: Vec<&str> = Vec::new();
        for c in self.rows.iter().flat_map(|r| &r.columns) {
            if !names.contains(&c.name.as_str()) {
                names.push(&c.name);
            }
        }
        names
    }

    /// Rows are variants, cells `mean±std`. Numbers use the shortest text
    /// that reads back to the same `f64`; a missing column prints as `-`.
    pub fn to_table(&self) -> String {
        let names = self.column_names();
        let mut grid: Vec<Vec<String>> = vec![std::iter::once("variant").chain(names.iter().copied()).map(String::from).collect()];
        for row in &self.rows {
            let mut line = vec![row.variant.clone()];
            for name in &names {
                line.push(match row.column(name) {
                    Some(c) => format!("{}±{}", c.mean, c.std),
                    None => "-".into(),
                });
            }
            grid.push(line);
        }
        let widths: Vec<usize> =
            (0..=names.len()).map(|i| grid.iter().map(|l| l[i].chars().count()).max().unwrap_or(0)).collect();
        let mut out = String::new();
        for line in &grid {
            let mut text = String::new();
            for (i, cell) in line.iter().enumerate() {
                if i > 0 {
                    text.push_str("  ");
                }
                let _ = write!(text, "{cell:<w$}", w = widths[i]);
            }
            out.push_str(text.trim_end());
            out.push('\n');
        }
        out
    }

    pub fn parse_table(text: &str) -> Result<ParsedTable, EvalError> {
        let mut lines = text.lines().filter(|l| !l.trim().is_empty());
        let header: Vec<&str> = lines.next().ok_or_else(|| EvalError::Table("empty table".into()))?.split_whitespace().collect();
        if header.first() != Some(&"variant") {
            return Err(EvalError::Table("first column must be 'variant'".into()));
        }
        let mut rows = Vec::new();
        for line in lines {
            let cells: Vec<&str> = line.split_whitespace().collect();
            if cells.len() != header.len() {
                return Err(EvalError::Table(format!("row {line:?} has {} cells, header {}", cells.len(), header.len())));
            }
            let mut parsed = Vec::new();
            for cell in &cells[1..] {
                if *cell == "-" {
                    parsed.push((f64::NAN, f64::NAN));
                    continue;
                }
                let (m, s) = cell.split_once('±').ok_or_else(|| EvalError::Table(format!("cell {cell:?}")))?;
                let num = |t: &str| t.parse::<f64>().map_err(|_| EvalError::Table(format!("number {t:?}")));
                parsed.push((num(m)?, num(s)?));
            }
            rows.push((cells[0].to_string(), parsed));
        }
        Ok(rows)
    }

    /// Whether `to_table` parses back to exactly the stored aggregates.
    pub fn table_round_trips(&self) -> bool {
        let Ok(parsed) = Self::parse_table(&self.to_table()) else { return false };
        let names = self.column_names();
        parsed.len() == self.rows.len()
            && parsed.iter().zip(&self.rows).all(|((variant, cells), row)| {
                variant == &row.variant
                    && cells.iter().zip(&names).all(|((m, s), name)| match row.column(name) {
                        Some(c) => m.to_bits() == c.mean.to_bits() && s.to_bits() == c.std.to_bits(),
                        None => m.is_nan() && s.is_nan(),
                    })
            })
    }

    /// Copy with wall-clock columns removed and `seconds` zeroed; what is
    /// left is a function of the config and seed alone.
    pub fn without_timings(&self) -> Self {
        let mut out = self.clone();
        for row in &mut out.rows {
            row.columns.retain(|c| c.name != crate::experiments::SECONDS);
        }
        out.seconds = 0.0;
        out
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("reports serialize")
    }

    pub fn from_json(text: &str) -> Result<Self, EvalError> {
        Ok(serde_json::from_str(text)?)
    }

    /// Writes `<stem>.json` and `<stem>.txt` under `dir`.
    pub fn write(&self, dir: &Path, stem: &str) -> Result<(), EvalError> {
        std::fs::create_dir_all(dir)?;
        std::fs::write(dir.join(format!("{stem}.json")), self.to_json())?;
        std::fs::write(dir.join(format!("{stem}.txt")), self.to_table())?;
        Ok(())
    }
}
