//! Header-addressed TSV reading and number formatting for table output.

use std::io::Read;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use crate::error::{Error, IoContext, Result};

pub(crate) struct Table {
    path: PathBuf,
    headers: Vec<String>,
    rows: Vec<(usize, csv::StringRecord)>,
}

impl Table {
    pub fn read<R: Read>(input: R, path: &Path) -> Result<Self> {
        let mut rdr = csv::ReaderBuilder::new()
            .delimiter(b'\t')
            .quoting(false)
            .comment(Some(b'#'))
            .from_reader(input);
        let parse_err = |line: usize, e: csv::Error| Error::Parse {
            path: path.to_path_buf(),
            line,
            message: e.to_string(),
        };
        let headers = rdr
            .headers()
            .map_err(|e| parse_err(1, e))?
            .iter()
            .map(|h| h.trim().to_string())
            .collect();
        let mut rows = Vec::new();
        for rec in rdr.records() {
            let rec = rec.map_err(|e| {
                let line = e.position().map_or(0, |p| p.line() as usize);
                parse_err(line, e)
            })?;
            let line = rec.position().map_or(0, |p| p.line() as usize);
            rows.push((line, rec));
        }
        Ok(Self {
            path: path.to_path_buf(),
            headers,
            rows,
        })
    }

    pub fn open(path: &Path) -> Result<Self> {
        let f = std::fs::File::open(path).with_path(path)?;
        Self::read(std::io::BufReader::new(f), path)
    }

    pub fn column(&self, name: &str) -> Result<usize> {
        self.headers
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| Error::Parse {
                path: self.path.clone(),
                line: 1,
                message: format!("missing column {name:?}"),
            })
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn str(&self, row: usize, col: usize) -> Result<&str> {
        self.rows[row].1.get(col).map(str::trim).ok_or_else(|| Error::Parse {
            path: self.path.clone(),
            line: self.rows[row].0,
            message: format!("missing field {}", self.headers[col]),
        })
    }

    pub fn get<T: FromStr>(&self, row: usize, col: usize) -> Result<T> {
        let s = self.str(row, col)?;
        s.parse().map_err(|_| Error::Parse {
            path: self.path.clone(),
            line: self.rows[row].0,
            message: format!("cannot parse {:?} in column {}", s, self.headers[col]),
        })
    }

    /// Float field where `NA` (or an empty field) reads as NaN.
    pub fn float(&self, row: usize, col: usize) -> Result<f64> {
        match self.str(row, col)? {
            "NA" | "" => Ok(f64::NAN),
            _ => self.get(row, col),
        }
    }

    pub fn error(&self, row: usize, message: String) -> Error {
        Error::Parse {
            path: self.path.clone(),
            line: self.rows[row].0,
            message,
        }
    }
}

/// Shortest round-trip representation; NaN prints as `NA`.
pub fn fmt_num(x: f64) -> String {
    if x.is_nan() {
        "NA".to_string()
    } else {
        format!("{x}")
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn reads_by_header() {
        let t = Table::read(&b"b\ta\n1\tx\n# note\n2\ty\n"[..], Path::new("t.tsv")).unwrap();
        assert_eq!(t.len(), 2);
        let a = t.column("a").unwrap();
        let b = t.column("b").unwrap();
        assert_eq!(t.str(1, a).unwrap(), "y");
        assert_eq!(t.get::<u32>(0, b).unwrap(), 1);
        assert!(t.get::<u32>(0, a).is_err());
        assert!(t.column("c").is_err());
    }

    #[test]
    fn number_formats() {
        assert_eq!(fmt_num(f64::NAN), "NA");
        assert_eq!(fmt_num(0.25), "0.25");
    }
}
