//! Result tables: rounded for reading, full precision for machines.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use crate::error::Result;

/// Values below this magnitude are shown as `0` in rounded output.
pub const DISPLAY_ZERO: f64 = 1e-3;
const SIGNIFICANT: i32 = 6;

#[derive(Debug, Clone, PartialEq)]
pub enum Cell {
    Text(String),
    Number(f64),
    /// Shown as `-` (table diagonal, not applicable).
    Missing,
}

impl From<f64> for Cell {
    fn from(v: f64) -> Self {
        Cell::Number(v)
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

impl From<Option<f64>> for Cell {
    fn from(v: Option<f64>) -> Self {
        v.map_or(Cell::Missing, Cell::Number)
    }
}

impl From<bool> for Cell {
    fn from(b: bool) -> Self {
        Cell::Text(b.to_string())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Precision {
    Display,
    Full,
}

/// Six significant digits, with magnitudes below [`DISPLAY_ZERO`] shown as `0`.
pub fn display_number(v: f64) -> String {
    if !v.is_finite() {
        return v.to_string();
    }
    if v.abs() < DISPLAY_ZERO {
        return "0".into();
    }
    let decimals = (SIGNIFICANT - 1 - v.abs().log10().floor() as i32).max(0) as usize;
    let s = format!("{v:.decimals$}");
    if s.contains('.') {
        s.trim_end_matches('0').trim_end_matches('.').to_string()
    } else {
        s
    }
}

/// Shortest representation that parses back to the same `f64`.
pub fn full_number(v: f64) -> String {
    format!("{v:?}")
}

impl Cell {
    pub fn render(&self, precision: Precision) -> String {
        match (self, precision) {
            (Cell::Text(s), _) => s.clone(),
            (Cell::Missing, _) => "-".into(),
            (Cell::Number(v), Precision::Display) => display_number(*v),
            (Cell::Number(v), Precision::Full) => full_number(*v),
        }
    }
}

#[derive(Debug, Clone, Default)]
pub struct Table {
    pub header: Vec<String>,
    pub rows: Vec<Vec<Cell>>,
}

impl Table {
    pub fn new<S: AsRef<str>>(header: &[S]) -> Self {
        Table {
            header: header.iter().map(|s| s.as_ref().to_string()).collect(),
            rows: Vec::new(),
        }
    }

    pub fn push(&mut self, row: Vec<Cell>) {
        debug_assert_eq!(row.len(), self.header.len());
        self.rows.push(row);
    }

    pub fn to_csv(&self, precision: Precision) -> Result<String> {
        let mut w = csv::WriterBuilder::new()
            .terminator(csv::Terminator::Any(b'\n'))
            .from_writer(Vec::new());
        w.write_record(&self.header)?;
        for row in &self.rows {
            w.write_record(row.iter().map(|c| c.render(precision)))?;
        }
        let bytes = w.into_inner().map_err(|e| e.into_error())?;
        Ok(String::from_utf8(bytes).expect("csv output is utf-8"))
    }

    /// Column-aligned text for a terminal.
    pub fn render(&self) -> String {
        let cells: Vec<Vec<String>> = std::iter::once(self.header.clone())
            .chain(self.rows.iter().map(|r| r.iter().map(|c| c.render(Precision::Display)).collect()))
            .collect();
        let widths: Vec<usize> = (0..self.header.len())
            .map(|j| cells.iter().map(|r| r[j].chars().count()).max().unwrap_or(0))
            .collect();
        let mut out = String::new();
        for row in &cells {
            let line: Vec<String> = row.iter().zip(&widths).map(|(c, w)| format!("{c:>w$}")).collect();
            out.push_str(line.join("  ").trim_end());
            out.push('\n');
        }
        out
    }
}

/// Writes `contents` next to `path` and renames it into place.
pub fn write_atomic(path: &Path, contents: &str) -> Result<()> {
    let dir = path.parent().filter(|d| !d.as_os_str().is_empty()).unwrap_or(Path::new("."));
    fs::create_dir_all(dir)?;
    let name = path.file_name().map(|n| n.to_string_lossy().into_owned()).unwrap_or_default();
    let tmp = dir.join(format!(".{name}.{}.tmp", std::process::id()));
    {
        let mut f = fs::File::create(&tmp)?;
        f.write_all(contents.as_bytes())?;
        f.sync_all()?;
    }
    fs::rename(&tmp, path)?;
    Ok(())
}

/// Writes `<stem>.csv` (rounded) and `<stem>_full.csv` (full precision).
pub fn write_table(dir: &Path, stem: &str, table: &Table) -> Result<Vec<PathBuf>> {
    let display = dir.join(format!("{stem}.csv"));
    let full = dir.join(format!("{stem}_full.csv"));
    write_atomic(&display, &table.to_csv(Precision::Display)?)?;
    write_atomic(&full, &table.to_csv(Precision::Full)?)?;
    Ok(vec![display, full])
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn display_rounding() {
        assert_eq!(display_number(10.115337040001), "10.1153");
        assert_eq!(display_number(0.2949219), "0.294922");
        assert_eq!(display_number(-7.0e-4), "0");
        assert_eq!(display_number(185.5714016), "185.571");
        assert_eq!(display_number(2.0), "2");
        assert_eq!(display_number(-1.25), "-1.25");
    }

    #[test]
    fn full_precision_round_trips() {
        for v in [0.1, 1.0 / 3.0, 9.115337040001, -2.5e-12, 1e300] {
            assert_eq!(full_number(v).parse::<f64>().unwrap(), v);
        }
    }

    #[test]
    fn csv_layout() {
        let mut t = Table::new(&["name", "value"]);
        t.push(vec!["a,b".into(), 1.5.into()]);
        t.push(vec!["c".into(), Cell::Missing]);
        assert_eq!(t.to_csv(Precision::Full).unwrap(), "name,value\n\"a,b\",1.5\nc,-\n");
    }

    #[test]
    fn atomic_write_replaces() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("x.csv");
        write_atomic(&p, "one\n").unwrap();
        write_atomic(&p, "two\n").unwrap();
        assert_eq!(fs::read_to_string(&p).unwrap(), "two\n");
        assert_eq!(fs::read_dir(dir.path()).unwrap().count(), 1);
    }
}
