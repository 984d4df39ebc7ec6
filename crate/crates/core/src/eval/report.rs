//! Structured evaluation records and their plain-text tables.
//!
//! Records carry the table they belong to plus a row and column label, so a
//! set of runs can be rendered as a grid: retrieval tables are languages by
//! reranker, threshold tables languages by provider with the chosen
//! threshold under each cell, classifier tables providers by metric.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::io::{self, BufRead, Write};

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TableKind {
    Retrieval,
    Threshold,
    Classifier,
}

impl TableKind {
    pub const ALL: [TableKind; 3] = [TableKind::Retrieval, TableKind::Threshold, TableKind::Classifier];

    fn title(self) -> &'static str {
        match self {
            TableKind::Retrieval => "Retrieval (MRR)",
            TableKind::Threshold => "Cosine threshold classifier (max mean F1, threshold)",
            TableKind::Classifier => "AdaBoost pair classifier",
        }
    }

    fn corner(self) -> &'static str {
        match self {
            TableKind::Classifier => "Model",
            _ => "Language",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalRecord {
    pub table: TableKind,
    pub row: String,
    pub column: String,
    pub metric: String,
    pub value: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub std: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub threshold: Option<f64>,
    /// Resolved configuration of the run that produced the value.
    #[serde(default)]
    pub config: BTreeMap<String, String>,
}

impl EvalRecord {
    pub fn new(table: TableKind, row: impl Into<String>, column: impl Into<String>, metric: impl Into<String>, value: f64) -> Self {
        EvalRecord {
            table,
            row: row.into(),
            column: column.into(),
            metric: metric.into(),
            value,
            std: None,
            threshold: None,
            config: BTreeMap::new(),
        }
    }

    pub fn with_std(mut self, std: f64) -> Self {
        self.std = Some(std);
        self
    }

    pub fn with_threshold(mut self, threshold: f64) -> Self {
        self.threshold = Some(threshold);
        self
    }

    pub fn with_config(mut self, key: impl Into<String>, value: impl ToString) -> Self {
        self.config.insert(key.into(), value.to_string());
        self
    }

    fn cell(&self) -> String {
        match (self.table, self.std) {
            (TableKind::Retrieval, None) => format!("{:.4}", self.value),
            (TableKind::Classifier, Some(s)) => format!("{:.3}±{:.3}", self.value, s),
            (_, Some(s)) => format!("{:.2}±{:.2}", self.value, s),
            (_, None) => format!("{:.3}", self.value),
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub records: Vec<EvalRecord>,
}

impl EvalReport {
    pub fn push(&mut self, record: EvalRecord) {
        self.records.push(record);
    }

    pub fn extend(&mut self, other: EvalReport) {
        self.records.extend(other.records);
    }

    /// One JSON record per line.
    pub fn write_jsonl<W: Write>(&self, mut w: W) -> io::Result<()> {
        for r in &self.records {
            serde_json::to_writer(&mut w, r)?;
            w.write_all(b"\n")?;
        }
        w.flush()
    }

    pub fn read_jsonl<R: BufRead>(r: R) -> io::Result<Self> {
        let mut records = Vec::new();
        for (i, line) in r.lines().enumerate() {
            let line = line?;
            if line.trim().is_empty() {
                continue;
            }
            let rec = serde_json::from_str(&line)
                .map_err(|e| io::Error::new(io::ErrorKind::InvalidData, format!("line {}: {e}", i + 1)))?;
            records.push(rec);
        }
        Ok(EvalReport { records })
    }

    /// Renders every table that has at least one record. Rows and columns
    /// keep their order of first appearance; later records overwrite
    /// earlier ones for the same cell.
    pub fn render(&self) -> String {
        let mut out = String::new();
        for kind in TableKind::ALL {
            if let Some(t) = self.render_table(kind) {
                if !out.is_empty() {
                    out.push('\n');
                }
                out.push_str(&t);
            }
        }
        out
    }

    pub fn render_table(&self, kind: TableKind) -> Option<String> {
        let records: Vec<&EvalRecord> = self.records.iter().filter(|r| r.table == kind).collect();
        if records.is_empty() {
            return None;
        }
        let mut rows: Vec<&str> = Vec::new();
        let mut cols: Vec<&str> = Vec::new();
        let mut cells: BTreeMap<(usize, usize), &EvalRecord> = BTreeMap::new();
        for r in &records {
            let ri = index_of(&mut rows, &r.row);
            let ci = index_of(&mut cols, &r.column);
            cells.insert((ri, ci), r);
        }

        let mut grid: Vec<Vec<String>> = vec![std::iter::once(kind.corner().to_string()).chain(cols.iter().map(|c| c.to_string())).collect()];
        for (ri, row) in rows.iter().enumerate() {
            let line = (0..cols.len()).map(|ci| cells.get(&(ri, ci)).map_or("-".to_string(), |r| r.cell()));
            grid.push(std::iter::once(row.to_string()).chain(line).collect());
            if kind == TableKind::Threshold {
                let thresholds = (0..cols.len()).map(|ci| {
                    cells.get(&(ri, ci)).and_then(|r| r.threshold).map_or(String::new(), |t| format!("({t:.2})"))
                });
                grid.push(std::iter::once(String::new()).chain(thresholds).collect());
            }
        }

        let widths: Vec<usize> =
            (0..=cols.len()).map(|c| grid.iter().map(|row| row[c].chars().count()).max().unwrap_or(0)).collect();
        let mut out = format!("{}\n", kind.title());
        for (i, row) in grid.iter().enumerate() {
            let mut line = String::new();
            for (c, cell) in row.iter().enumerate() {
                let pad = widths[c] - cell.chars().count();
                if c == 0 {
                    let _ = write!(line, "{cell}{}", " ".repeat(pad));
                } else {
                    let _ = write!(line, "  {}{cell}", " ".repeat(pad));
                }
            }
            out.push_str(line.trim_end());
            out.push('\n');
            if i == 0 {
                let total = widths.iter().sum::<usize>() + 2 * cols.len();
                out.push_str(&"-".repeat(total));
                out.push('\n');
            }
        }
        Some(out)
    }
}

fn index_of<'a>(list: &mut Vec<&'a str>, item: &'a str) -> usize {
    match list.iter().position(|&x| x == item) {
        Some(i) => i,
        None => {
            list.push(item);
            list.len() - 1
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample() -> EvalReport {
        let mut r = EvalReport::default();
        r.push(EvalRecord::new(TableKind::Retrieval, "bn", "bm25", "mrr", 0.4247).with_config("depth", 50));
        r.push(EvalRecord::new(TableKind::Retrieval, "bn", "xlmr", "mrr", 0.5281));
        r.push(EvalRecord::new(TableKind::Retrieval, "en", "bm25", "mrr", 0.4286));
        r.push(EvalRecord::new(TableKind::Threshold, "all", "xlmr", "f1", 0.73).with_std(0.07).with_threshold(0.9));
        r.push(EvalRecord::new(TableKind::Classifier, "xlmr", "accuracy", "accuracy", 0.883).with_std(0.036));
        r
    }

    #[test]
    fn jsonl_round_trip() {
        let r = sample();
        let mut buf = Vec::new();
        r.write_jsonl(&mut buf).unwrap();
        assert_eq!(EvalReport::read_jsonl(buf.as_slice()).unwrap(), r);
    }

    #[test]
    fn renders_grids() {
        let text = sample().render();
        assert!(text.contains("Language    bm25    xlmr"), "{text}");
        assert!(text.contains("bn        0.4247  0.5281"), "{text}");
        assert!(text.contains("en        0.4286       -"), "{text}");
        assert!(text.contains("0.73±0.07"));
        assert!(text.contains("(0.90)"));
        assert!(text.contains("0.883±0.036"));
        assert!(EvalReport::default().render_table(TableKind::Retrieval).is_none());
    }
}
