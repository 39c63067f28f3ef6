//! Tabular results rendered as CSV or JSON.
//!
//! Floats are printed with exactly 9 significant digits (fixed notation for
//! exponents in `-5..9`, scientific otherwise) so reruns diff cleanly. CSV
//! and JSON share the same cell formatter, so their numeric content is
//! identical. JSON output can optionally carry each float's IEEE-754 bits.

use std::fmt::Write as _;

#[derive(Clone, Debug, PartialEq)]
pub enum Cell {
    Int(i64),
    Float(f64),
    Bool(bool),
    Str(String),
    Null,
}

impl From<f64> for Cell {
    fn from(x: f64) -> Self {
        Cell::Float(x)
    }
}

impl From<Option<f64>> for Cell {
    fn from(x: Option<f64>) -> Self {
        x.map_or(Cell::Null, Cell::Float)
    }
}

impl From<u64> for Cell {
    fn from(x: u64) -> Self {
        Cell::Int(x as i64)
    }
}

impl From<usize> for Cell {
    fn from(x: usize) -> Self {
        Cell::Int(x as i64)
    }
}

impl From<bool> for Cell {
    fn from(x: bool) -> Self {
        Cell::Bool(x)
    }
}

impl From<&str> for Cell {
    fn from(x: &str) -> Self {
        Cell::Str(x.to_string())
    }
}

impl From<String> for Cell {
    fn from(x: String) -> Self {
        Cell::Str(x)
    }
}

/// `x` with 9 significant digits.
pub fn format_float(x: f64) -> String {
    if !x.is_finite() {
        return if x.is_nan() { "nan".into() } else if x > 0.0 { "inf".into() } else { "-inf".into() };
    }
    let sci = format!("{x:.8e}");
    let exponent: i32 = sci[sci.find('e').expect("exponent") + 1..].parse().expect("integer exponent");
    if (-5..9).contains(&exponent) {
        format!("{:.*}", (8 - exponent) as usize, x)
    } else {
        sci
    }
}

/// A header of key/value metadata plus a table of rows.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct Document {
    pub header: Vec<(String, Cell)>,
    pub columns: Vec<String>,
    pub rows: Vec<Vec<Cell>>,
}

impl Document {
    pub fn new<S: Into<String>>(columns: impl IntoIterator<Item = S>) -> Self {
        Document {
            header: Vec::new(),
            columns: columns.into_iter().map(Into::into).collect(),
            rows: Vec::new(),
        }
    }

    pub fn meta(mut self, key: &str, value: impl Into<Cell>) -> Self {
        self.header.push((key.to_string(), value.into()));
        self
    }

    pub fn push_row(&mut self, row: Vec<Cell>) {
        assert_eq!(row.len(), self.columns.len(), "row width must match the columns");
        self.rows.push(row);
    }

    /// Columns and rows only; header metadata is JSON-only.
    pub fn to_csv(&self) -> String {
        let mut out = String::new();
        out.push_str(&self.columns.iter().map(|c| csv_field(c)).collect::<Vec<_>>().join(","));
        out.push('\n');
        for row in &self.rows {
            let fields: Vec<String> = row.iter().map(csv_cell).collect();
            out.push_str(&fields.join(","));
            out.push('\n');
        }
        out
    }

    pub fn to_json(&self, raw_bits: bool) -> String {
        let mut out = String::from("{\n  \"header\": {");
        for (pos, (key, cell)) in self.header.iter().enumerate() {
            let sep = if pos == 0 { "\n" } else { ",\n" };
            let _ = write!(out, "{sep}    {}: {}", json_string(key), json_cell(cell));
        }
        out.push_str(if self.header.is_empty() { "},\n" } else { "\n  },\n" });
        out.push_str("  \"columns\": [");
        out.push_str(&self.columns.iter().map(|c| json_string(c)).collect::<Vec<_>>().join(", "));
        out.push_str("],\n  \"rows\": [");
        for (pos, row) in self.rows.iter().enumerate() {
            out.push_str(if pos == 0 { "\n    {" } else { ",\n    {" });
            let fields: Vec<String> = self
                .columns
                .iter()
                .zip(row)
                .map(|(c, cell)| format!("{}: {}", json_string(c), json_cell(cell)))
                .collect();
            out.push_str(&fields.join(", "));
            if raw_bits {
                let bits: Vec<String> = self
                    .columns
                    .iter()
                    .zip(row)
                    .filter_map(|(c, cell)| match cell {
                        Cell::Float(x) => Some(format!("{}: \"{:#018x}\"", json_string(c), x.to_bits())),
                        _ => None,
                    })
                    .collect();
                let _ = write!(out, ", \"raw_bits\": {{{}}}", bits.join(", "));
            }
            out.push('}');
        }
        out.push_str(if self.rows.is_empty() { "]\n}\n" } else { "\n  ]\n}\n" });
        out
    }
}

fn json_string(s: &str) -> String {
    serde_json::to_string(s).expect("strings always serialize")
}

fn json_cell(cell: &Cell) -> String {
    match cell {
        Cell::Int(i) => i.to_string(),
        Cell::Float(x) if x.is_finite() => format_float(*x),
        Cell::Float(_) | Cell::Null => "null".into(),
        Cell::Bool(b) => b.to_string(),
        Cell::Str(s) => json_string(s),
    }
}

fn csv_field(s: &str) -> String {
    if s.contains([',', '"', '\n']) {
        format!("\"{}\"", s.replace('"', "\"\""))
    } else {
        s.to_string()
    }
}

fn csv_cell(cell: &Cell) -> String {
    match cell {
        Cell::Int(i) => i.to_string(),
        Cell::Float(x) => format_float(*x),
        Cell::Bool(b) => b.to_string(),
        Cell::Str(s) => csv_field(s),
        Cell::Null => String::new(),
    }
}
