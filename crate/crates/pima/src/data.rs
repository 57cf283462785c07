//! Immutable observation tables and CSV ingestion.
//!
//! A [`Dataset`] holds named columns over a fixed set of observations.
//! Observation IDs are stable (row order, 1-based) and are the anchor for
//! aligning sign flips across model specifications that drop rows.

use std::collections::HashSet;
use std::path::Path;

use crate::error::{Error, Result};

/// A single named column: numeric or categorical, with per-cell missingness.
#[derive(Debug, Clone)]
pub enum Column {
    Numeric(Vec<Option<f64>>),
    Categorical {
        levels: Vec<String>,
        /// Index into `levels` per observation, `None` when missing.
        codes: Vec<Option<usize>>,
    },
}

impl Column {
    pub fn len(&self) -> usize {
        match self {
            Column::Numeric(v) => v.len(),
            Column::Categorical { codes, .. } => codes.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn is_missing(&self, i: usize) -> bool {
        match self {
            Column::Numeric(v) => v[i].is_none(),
            Column::Categorical { codes, .. } => codes[i].is_none(),
        }
    }

    /// Level name at row `i`, for categorical columns.
    pub fn level_at(&self, i: usize) -> Option<&str> {
        match self {
            Column::Categorical { levels, codes } => codes[i].map(|c| levels[c].as_str()),
            Column::Numeric(_) => None,
        }
    }
}

/// Immutable observation table with stable 1-based observation IDs.
#[derive(Debug, Clone)]
pub struct Dataset {
    names: Vec<String>,
    columns: Vec<Column>,
    ids: Vec<u64>,
}

impl Dataset {
    /// Builds a dataset from named columns; IDs are assigned as row order 1..n.
    pub fn new(columns: Vec<(String, Column)>) -> Result<Self> {
        if columns.is_empty() {
            return Err(Error::Data("dataset has no columns".into()));
        }
        let n = columns[0].1.len();
        if n == 0 {
            return Err(Error::Data("dataset has zero rows".into()));
        }
        let mut seen = HashSet::new();
        for (name, col) in &columns {
            if !seen.insert(name.clone()) {
                return Err(Error::Data(format!("duplicate column name `{name}`")));
            }
            if col.len() != n {
                return Err(Error::Data(format!(
                    "column `{name}` has {} rows, expected {n}",
                    col.len()
                )));
            }
        }
        let (names, cols) = columns.into_iter().unzip();
        Ok(Dataset {
            names,
            columns: cols,
            ids: (1..=n as u64).collect(),
        })
    }

    pub fn n_obs(&self) -> usize {
        self.ids.len()
    }

    pub fn ids(&self) -> &[u64] {
        &self.ids
    }

    pub fn column_names(&self) -> &[String] {
        &self.names
    }

    pub fn column(&self, name: &str) -> Result<&Column> {
        self.names
            .iter()
            .position(|n| n == name)
            .map(|i| &self.columns[i])
            .ok_or_else(|| Error::Data(format!("unknown column `{name}`")))
    }

    /// Reads a UTF-8 CSV with a header row. Columns whose non-empty cells all
    /// parse as decimals become numeric; everything else becomes categorical
    /// with levels in order of first appearance. Empty cells and `NA`/`NaN`
    /// markers are recorded as missing.
    pub fn from_csv_path(path: &Path) -> Result<Self> {
        let mut reader = csv::ReaderBuilder::new().has_headers(true).from_path(path)?;
        let headers: Vec<String> = reader.headers()?.iter().map(|h| h.to_string()).collect();
        let mut cells: Vec<Vec<String>> = vec![Vec::new(); headers.len()];
        for record in reader.records() {
            let record = record?;
            if record.len() != headers.len() {
                return Err(Error::Data(format!(
                    "row has {} fields, expected {}",
                    record.len(),
                    headers.len()
                )));
            }
            for (j, field) in record.iter().enumerate() {
                cells[j].push(field.trim().to_string());
            }
        }
        let columns = headers
            .into_iter()
            .zip(cells)
            .map(|(name, raw)| (name, infer_column(&raw)))
            .collect();
        Dataset::new(columns)
    }
}

fn is_missing_marker(s: &str) -> bool {
    s.is_empty() || s.eq_ignore_ascii_case("na") || s.eq_ignore_ascii_case("nan")
}

fn infer_column(raw: &[String]) -> Column {
    let mut numeric = Vec::with_capacity(raw.len());
    let mut all_numeric = true;
    for s in raw {
        if is_missing_marker(s) {
            numeric.push(None);
        } else if let Ok(v) = s.parse::<f64>() {
            numeric.push(Some(v));
        } else {
            all_numeric = false;
            break;
        }
    }
    if all_numeric {
        return Column::Numeric(numeric);
    }
    let mut levels: Vec<String> = Vec::new();
    let codes = raw
        .iter()
        .map(|s| {
            if is_missing_marker(s) {
                None
            } else {
                Some(match levels.iter().position(|l| l == s) {
                    Some(i) => i,
                    None => {
                        levels.push(s.clone());
                        levels.len() - 1
                    }
                })
            }
        })
        .collect();
    Column::Categorical { levels, codes }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::io::Write;

    fn write_csv(contents: &str) -> tempfile::NamedTempFile {
        let mut f = tempfile::NamedTempFile::new().unwrap();
        f.write_all(contents.as_bytes()).unwrap();
        f
    }

    #[test]
    fn numeric_csv_has_row_order_ids() {
        let f = write_csv("y,x\n1.0,2.0\n2.0,3.0\n3.0,4.0\n");
        let d = Dataset::from_csv_path(f.path()).unwrap();
        assert_eq!(d.n_obs(), 3);
        assert_eq!(d.ids(), &[1, 2, 3]);
        match d.column("y").unwrap() {
            Column::Numeric(v) => assert_eq!(v[2], Some(3.0)),
            _ => panic!("expected numeric"),
        }
    }

    #[test]
    fn string_column_becomes_categorical() {
        let f = write_csv("period\nPre\nLockdown\nPost\nPre\n");
        let d = Dataset::from_csv_path(f.path()).unwrap();
        match d.column("period").unwrap() {
            Column::Categorical { levels, codes } => {
                assert_eq!(levels, &["Pre", "Lockdown", "Post"]);
                assert_eq!(codes, &[Some(0), Some(1), Some(2), Some(0)]);
            }
            _ => panic!("expected categorical"),
        }
    }

    #[test]
    fn missing_cells_are_recorded() {
        let f = write_csv("y,x\n1.0,2.0\n,3.0\nNA,4.0\n");
        let d = Dataset::from_csv_path(f.path()).unwrap();
        let y = d.column("y").unwrap();
        assert!(!y.is_missing(0));
        assert!(y.is_missing(1));
        assert!(y.is_missing(2));
    }

    #[test]
    fn duplicate_headers_rejected() {
        let f = write_csv("x,x\n1,2\n");
        assert!(Dataset::from_csv_path(f.path()).is_err());
    }

    #[test]
    fn zero_rows_rejected() {
        let f = write_csv("x,y\n");
        assert!(Dataset::from_csv_path(f.path()).is_err());
    }
}
