//! CSV reports: optional `#` comment preamble, a header row, LF endings,
//! floats at 6 significant digits.

use std::path::Path;

use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq)]
pub enum Cell {
    Text(String),
    Num(f64),
    Int(usize),
}

impl Cell {
    fn render(&self) -> String {
        match self {
            Cell::Text(s) => s.clone(),
            Cell::Num(v) => format_sig6(*v),
            Cell::Int(n) => n.to_string(),
        }
    }
}

impl From<&str> for Cell {
    fn from(s: &str) -> Self {
        Cell::Text(s.to_owned())
    }
}

impl From<String> for Cell {
    fn from(s: String) -> Self {
        Cell::Text(s)
    }
}

impl From<f64> for Cell {
    fn from(v: f64) -> Self {
        Cell::Num(v)
    }
}

impl From<usize> for Cell {
    fn from(n: usize) -> Self {
        Cell::Int(n)
    }
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct Report {
    /// Written as `# line` before the header.
    pub comments: Vec<String>,
    pub header: Vec<String>,
    pub rows: Vec<Vec<Cell>>,
}

impl Report {
    pub fn new<S: Into<String>>(header: impl IntoIterator<Item = S>) -> Self {
        Self {
            comments: Vec::new(),
            header: header.into_iter().map(Into::into).collect(),
            rows: Vec::new(),
        }
    }

    pub fn comment(&mut self, line: impl Into<String>) -> &mut Self {
        self.comments.push(line.into());
        self
    }

    pub fn push(&mut self, row: Vec<Cell>) -> &mut Self {
        self.rows.push(row);
        self
    }

    pub fn to_bytes(&self) -> Result<Vec<u8>> {
        let mut out = Vec::new();
        for c in &self.comments {
            out.extend_from_slice(format!("# {c}\n").as_bytes());
        }
        let mut w = csv::WriterBuilder::new()
            .terminator(csv::Terminator::Any(b'\n'))
            .from_writer(&mut out);
        let csv_err = |e: csv::Error| Error::InvalidParameter(format!("report row: {e}"));
        w.write_record(&self.header).map_err(csv_err)?;
        for row in &self.rows {
            if row.len() != self.header.len() {
                return Err(Error::ShapeMismatch(format!(
                    "report row has {} cells, header has {}",
                    row.len(),
                    self.header.len()
                )));
            }
            w.write_record(row.iter().map(Cell::render)).map_err(csv_err)?;
        }
        w.flush().map_err(|e| Error::InvalidParameter(e.to_string()))?;
        drop(w);
        Ok(out)
    }
}

pub fn write_report(report: &Report, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    std::fs::write(path, report.to_bytes()?).map_err(|source| Error::Io {
        path: path.to_owned(),
        source,
    })
}

fn trim_fraction(s: &str) -> &str {
    if s.contains('.') {
        s.trim_end_matches('0').trim_end_matches('.')
    } else {
        s
    }
}

/// Renders like C's `%.6g`.
pub fn format_sig6(v: f64) -> String {
    const P: i32 = 6;
    if v.is_nan() {
        return "nan".into();
    }
    if v.is_infinite() {
        return if v > 0.0 { "inf" } else { "-inf" }.into();
    }
    if v == 0.0 {
        return if v.is_sign_negative() { "-0" } else { "0" }.into();
    }
    // exponent after rounding to P significant digits
    let sci = format!("{:.*e}", (P - 1) as usize, v);
    let (mantissa, exp) = sci.split_once('e').expect("exponent form");
    let exp: i32 = exp.parse().expect("integer exponent");
    if !(-4..P).contains(&exp) {
        let sign = if exp < 0 { '-' } else { '+' };
        format!("{}e{sign}{:02}", trim_fraction(mantissa), exp.abs())
    } else {
        let decimals = (P - 1 - exp) as usize;
        trim_fraction(&format!("{v:.decimals$}")).to_owned()
    }
}
