//! Percentiles and result emission.

use std::fmt::Write as _;

use crate::config::ConfigTree;
use crate::error::{Result, SimError};
use crate::sim::LatencyStats;

/// Nearest-rank percentile of an ascending slice: the `ceil(p/100 * n)`-th
/// order statistic (1-based), with `p = 0` mapping to the minimum.
pub fn nearest_rank_sorted(sorted: &[u64], p: f64) -> u64 {
    debug_assert!(!sorted.is_empty());
    let n = sorted.len();
    let rank = ((p / 100.0) * n as f64).ceil() as usize;
    sorted[rank.clamp(1, n) - 1]
}

pub fn percentile(samples: &[u64], p: f64) -> Result<u64> {
    if samples.is_empty() {
        return Err(SimError::Precondition(
            "percentile of an empty sample set".into(),
        ));
    }
    if !(0.0..=100.0).contains(&p) {
        return Err(SimError::Precondition(format!(
            "percentile {p} outside [0, 100]"
        )));
    }
    let mut sorted = samples.to_vec();
    sorted.sort_unstable();
    Ok(nearest_rank_sorted(&sorted, p))
}

/// Formats a float for CSV output: shortest round-trip form, always with a
/// decimal point, never with grouping.
pub fn num(x: f64) -> String {
    if x.is_finite() && x == x.trunc() && x.abs() < 1e15 {
        format!("{x:.1}")
    } else {
        format!("{x}")
    }
}

/// Column values for a latency sample set, matching [`LATENCY_COLUMNS`].
pub fn latency_cells(samples: &[u64]) -> Vec<String> {
    match LatencyStats::from_samples(samples) {
        Some(s) => vec![
            s.count.to_string(),
            num(s.mean),
            num(s.variance),
            s.p50.to_string(),
            s.p95.to_string(),
            s.p99.to_string(),
            s.min.to_string(),
            s.max.to_string(),
        ],
        None => {
            let mut cells = vec!["0".to_string()];
            cells.extend(std::iter::repeat_n(
                String::new(),
                LATENCY_COLUMNS.len() - 1,
            ));
            cells
        }
    }
}

pub const LATENCY_COLUMNS: &[&str] = &[
    "count",
    "mean_ns",
    "variance_ns2",
    "p50_ns",
    "p95_ns",
    "p99_ns",
    "min_ns",
    "max_ns",
];

/// A result table: one CSV file and one block of the stdout summary.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Table {
    pub header: Vec<String>,
    pub rows: Vec<Vec<String>>,
}

impl Table {
    pub fn new<S: AsRef<str>>(header: &[S]) -> Self {
        Table {
            header: header.iter().map(|h| h.as_ref().to_string()).collect(),
            rows: Vec::new(),
        }
    }

    pub fn push(&mut self, row: Vec<String>) {
        debug_assert_eq!(row.len(), self.header.len(), "row width");
        self.rows.push(row);
    }

    pub fn column(&self, name: &str) -> Option<usize> {
        self.header.iter().position(|h| h == name)
    }

    /// Cell by row index and column name.
    pub fn cell(&self, row: usize, name: &str) -> Option<&str> {
        self.rows
            .get(row)?
            .get(self.column(name)?)
            .map(String::as_str)
    }

    /// Rows whose `name` column equals `value`.
    pub fn rows_where<'a>(
        &'a self,
        name: &str,
        value: &'a str,
    ) -> impl Iterator<Item = &'a Vec<String>> + 'a {
        let col = self.column(name);
        self.rows
            .iter()
            .filter(move |r| col.is_some_and(|c| r[c] == value))
    }

    pub fn to_csv(&self) -> Result<String> {
        let io = |e: csv::Error| SimError::Io(e.to_string());
        let mut w = csv::WriterBuilder::new()
            .terminator(csv::Terminator::Any(b'\n'))
            .from_writer(Vec::new());
        w.write_record(&self.header).map_err(io)?;
        for r in &self.rows {
            w.write_record(r).map_err(io)?;
        }
        let bytes = w.into_inner().map_err(|e| SimError::Io(e.to_string()))?;
        String::from_utf8(bytes).map_err(|e| SimError::Io(e.to_string()))
    }

    /// Fixed-width text rendering for the terminal.
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
            let parts: Vec<String> = cells
                .iter()
                .zip(&widths)
                .map(|(c, w)| format!("{c:>w$}"))
                .collect();
            parts.join("  ").trim_end().to_string() + "\n"
        };
        let mut out = line(&self.header);
        for r in &self.rows {
            out += &line(r);
        }
        out
    }
}

/// Manifest text: the resolved configuration plus a `[run]` table. Feeding
/// it back through `--config` reproduces the run.
pub fn manifest(tree: &ConfigTree, scenario: &str, seed: u64, outputs: &[String]) -> String {
    let mut run = toml::Table::new();
    run.insert("scenario".into(), scenario.into());
    run.insert("seed".into(), toml::Value::Integer(seed as i64));
    run.insert("version".into(), env!("CARGO_PKG_VERSION").into());
    run.insert(
        "outputs".into(),
        toml::Value::Array(outputs.iter().map(|o| o.as_str().into()).collect()),
    );
    let mut out = String::from("[run]\n");
    for (k, v) in &run {
        let _ = writeln!(out, "{k} = {v}");
    }
    out.push('\n');
    out + &tree.serialize()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::config::parse_config;

    #[test]
    fn single_sample() {
        assert_eq!(percentile(&[5], 99.0).unwrap(), 5);
    }

    #[test]
    fn nearest_rank_median() {
        let xs: Vec<u64> = (1..=100).collect();
        assert_eq!(percentile(&xs, 50.0).unwrap(), 50);
        assert_eq!(percentile(&xs, 0.0).unwrap(), 1);
        assert_eq!(percentile(&xs, 100.0).unwrap(), 100);
    }

    #[test]
    fn percentile_errors() {
        assert_eq!(
            percentile(&[], 50.0).unwrap_err().category(),
            "precondition"
        );
        assert!(percentile(&[1], 101.0).is_err());
    }

    #[test]
    fn csv_numbers_plain() {
        assert_eq!(num(1234567.0), "1234567.0");
        assert_eq!(num(0.25), "0.25");
        let mut t = Table::new(&["a", "b"]);
        t.push(vec!["x,y".into(), num(1.5)]);
        assert_eq!(t.to_csv().unwrap(), "a,b\n\"x,y\",1.5\n");
    }

    #[test]
    fn manifest_reparses_to_same_tree() {
        let mut tree = ConfigTree::defaults();
        tree.set("inaggr.mode", "cpu").unwrap();
        let m = manifest(&tree, "inaggr", 7, &["inaggr.csv".into()]);
        assert!(m.starts_with("[run]\n"));
        assert_eq!(parse_config(&m).unwrap(), tree);
    }
}
