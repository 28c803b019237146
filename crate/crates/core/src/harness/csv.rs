//! Minimal CSV I/O for the artifacts: header row, comma separators, LF line
//! endings, shortest round-trip float formatting (so write-then-read is
//! bit-exact).

use std::path::Path;

use crate::error::{Error, Result};

#[derive(Clone, Debug)]
pub struct Table {
    pub headers: Vec<String>,
    pub columns: Vec<Vec<f64>>,
}

impl Table {
    pub fn column(&self, name: &str) -> Result<&[f64]> {
        match self.headers.iter().position(|h| h == name) {
            Some(i) => Ok(&self.columns[i]),
            None => Err(Error::Parse {
                context: format!("column `{name}`"),
                message: format!("not found; available: {}", self.headers.join(", ")),
            }),
        }
    }

    pub fn n_rows(&self) -> usize {
        self.columns.first().map_or(0, Vec::len)
    }
}

pub fn format_csv(headers: &[&str], columns: &[&[f64]]) -> String {
    assert_eq!(headers.len(), columns.len());
    let n = columns.first().map_or(0, |c| c.len());
    assert!(columns.iter().all(|c| c.len() == n), "ragged columns");
    let mut out = String::new();
    out.push_str(&headers.join(","));
    out.push('\n');
    for i in 0..n {
        for (j, col) in columns.iter().enumerate() {
            if j > 0 {
                out.push(',');
            }
            // `{}` on f64 is the shortest representation that round-trips
            out.push_str(&format!("{}", col[i]));
        }
        out.push('\n');
    }
    out
}

pub fn write_csv(path: &Path, headers: &[&str], columns: &[&[f64]]) -> Result<()> {
    std::fs::write(path, format_csv(headers, columns)).map_err(|source| Error::Io {
        path: path.display().to_string(),
        source,
    })
}

pub fn read_csv(path: &Path) -> Result<Table> {
    let text = std::fs::read_to_string(path).map_err(|source| Error::Io {
        path: path.display().to_string(),
        source,
    })?;
    parse_csv(&text, &path.display().to_string())
}

pub fn parse_csv(text: &str, context: &str) -> Result<Table> {
    let mut lines = text.lines();
    let header_line = lines.next().ok_or_else(|| Error::Parse {
        context: context.to_string(),
        message: "empty file (missing header row)".into(),
    })?;
    let headers: Vec<String> = header_line.split(',').map(|s| s.trim().to_string()).collect();
    let mut columns: Vec<Vec<f64>> = vec![Vec::new(); headers.len()];
    for (lineno, line) in lines.enumerate() {
        if line.is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != headers.len() {
            return Err(Error::Parse {
                context: context.to_string(),
                message: format!(
                    "line {}: expected {} fields, got {}",
                    lineno + 2,
                    headers.len(),
                    fields.len()
                ),
            });
        }
        for (j, f) in fields.iter().enumerate() {
            let v: f64 = f.trim().parse().map_err(|_| Error::Parse {
                context: context.to_string(),
                message: format!("line {}: `{}` is not a number", lineno + 2, f),
            })?;
            columns[j].push(v);
        }
    }
    Ok(Table { headers, columns })
}
