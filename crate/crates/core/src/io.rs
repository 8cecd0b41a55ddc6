//! Curve files and CSV tables.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use crate::curve::CurveSpec;
use crate::error::{Error, Result};

/// Fixed 15-significant-digit formatting used for all numeric output.
pub fn num(v: f64) -> String {
    format!("{v:.14e}")
}

pub fn read_curve_spec(path: &Path) -> Result<CurveSpec> {
    let text = fs::read_to_string(path)
        .map_err(|e| Error::InvalidInput(format!("cannot read {}: {e}", path.display())))?;
    serde_json::from_str(&text)
        .map_err(|e| Error::InvalidInput(format!("bad curve file {}: {e}", path.display())))
}

/// A named CSV table with a header row.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct Table {
    pub name: String,
    pub header: Vec<String>,
    pub rows: Vec<Vec<String>>,
}

impl Table {
    pub fn new(name: &str, header: &[&str]) -> Self {
        Self {
            name: name.to_string(),
            header: header.iter().map(|s| s.to_string()).collect(),
            rows: Vec::new(),
        }
    }

    pub fn push(&mut self, row: Vec<String>) {
        debug_assert_eq!(row.len(), self.header.len());
        self.rows.push(row);
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "{}", self.header.join(","));
        for row in &self.rows {
            let _ = writeln!(out, "{}", row.join(","));
        }
        out
    }

    pub fn write_to(&self, dir: &Path) -> Result<()> {
        fs::create_dir_all(dir)
            .map_err(|e| Error::InvalidInput(format!("cannot create {}: {e}", dir.display())))?;
        let path = dir.join(format!("{}.csv", self.name));
        fs::write(&path, self.to_csv())
            .map_err(|e| Error::InvalidInput(format!("cannot write {}: {e}", path.display())))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn number_format_round_trips() {
        for v in [0.0, -1.0, std::f64::consts::PI, 1e-300, -6.02214076e23] {
            let s = num(v);
            let back: f64 = s.parse().unwrap();
            assert!((back - v).abs() <= 1e-14 * v.abs());
        }
        assert_eq!(num(1.0), "1.00000000000000e0");
    }

    #[test]
    fn csv_layout() {
        let mut t = Table::new("x", &["a", "b"]);
        t.push(vec!["1".into(), "2".into()]);
        assert_eq!(t.to_csv(), "a,b\n1,2\n");
    }

    #[test]
    fn curve_file_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("c.json");
        fs::write(&p, r#"{"kind":"circle","radius":1.5}"#).unwrap();
        assert_eq!(
            read_curve_spec(&p).unwrap(),
            CurveSpec::Circle { radius: 1.5 }
        );
        assert!(read_curve_spec(&dir.path().join("missing.json")).is_err());
        fs::write(&p, "{").unwrap();
        assert!(read_curve_spec(&p).is_err());
    }
}
