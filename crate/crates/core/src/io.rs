//! Minimal CSV emitter: `#`-prefixed comment lines, one header row, comma
//! separated values with `.` decimals. Floats use Rust's shortest round-trip
//! formatting, so no precision is lost.

use std::fmt::Write as _;
use std::io::Write;

/// Shortest round-trip decimal, switching to exponent form for very small or
/// large magnitudes.
pub fn fmt_float(v: f64) -> String {
    let a = v.abs();
    if a == 0.0 || !a.is_finite() || (1e-5..1e16).contains(&a) {
        v.to_string()
    } else {
        format!("{v:e}")
    }
}

#[derive(Clone, Debug, Default)]
pub struct CsvTable {
    comments: Vec<String>,
    columns: Vec<String>,
    rows: Vec<Vec<String>>,
}

impl CsvTable {
    pub fn new(columns: &[&str]) -> Self {
        CsvTable {
            comments: Vec::new(),
            columns: columns.iter().map(|c| c.to_string()).collect(),
            rows: Vec::new(),
        }
    }

    pub fn comment(&mut self, line: impl Into<String>) -> &mut Self {
        self.comments.push(line.into());
        self
    }

    /// Inserts comment lines before the existing ones.
    pub fn prepend_comments(&mut self, lines: &[String]) -> &mut Self {
        self.comments.splice(0..0, lines.iter().cloned());
        self
    }

    pub fn row(&mut self, values: Vec<String>) -> &mut Self {
        debug_assert_eq!(values.len(), self.columns.len());
        self.rows.push(values);
        self
    }

    pub fn float_row(&mut self, values: &[f64]) -> &mut Self {
        self.row(values.iter().map(|v| fmt_float(*v)).collect())
    }

    /// Appends a column; `values` must have one entry per existing row.
    pub fn push_column(&mut self, name: &str, values: &[f64]) -> &mut Self {
        assert_eq!(values.len(), self.rows.len(), "column length mismatch");
        self.columns.push(name.to_string());
        for (row, v) in self.rows.iter_mut().zip(values) {
            row.push(fmt_float(*v));
        }
        self
    }

    pub fn columns(&self) -> &[String] {
        &self.columns
    }

    pub fn rows(&self) -> &[Vec<String>] {
        &self.rows
    }

    pub fn comments(&self) -> &[String] {
        &self.comments
    }

    pub fn write<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        out.write_all(self.to_string().as_bytes())
    }
}

impl std::fmt::Display for CsvTable {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let mut s = String::new();
        for c in &self.comments {
            writeln!(s, "# {c}")?;
        }
        writeln!(s, "{}", self.columns.join(","))?;
        for r in &self.rows {
            writeln!(s, "{}", r.join(","))?;
        }
        f.write_str(&s)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn layout() {
        let mut t = CsvTable::new(&["a", "b"]);
        t.comment("x=1").float_row(&[0.1, 2.0]);
        t.push_column("c", &[1e-300]);
        assert_eq!(t.to_string(), "# x=1\na,b,c\n0.1,2,1e-300\n");
    }

    #[test]
    fn floats_round_trip() {
        let v = 0.1 + 0.2;
        let mut t = CsvTable::new(&["v"]);
        t.float_row(&[v]);
        let parsed: f64 = t.rows()[0][0].parse().unwrap();
        assert_eq!(parsed, v);
    }
}
