//! Header-addressed reader for the delimited government data files.

use std::fs::File;
use std::io::Read;
use std::path::{Path, PathBuf};

use thiserror::Error;

#[derive(Debug, Error)]
pub enum TableError {
    #[error("missing input file {}", .0.display())]
    MissingFile(PathBuf),
    #[error("failed to read {}: {source}", path.display())]
    Read {
        path: PathBuf,
        #[source]
        source: csv::Error,
    },
    #[error("{}: no column matching any of {candidates:?}", path.display())]
    MissingColumn {
        path: PathBuf,
        candidates: Vec<String>,
    },
}

/// A fully read delimited file with its header row.
#[derive(Debug)]
pub struct DelimitedTable {
    path: PathBuf,
    headers: Vec<String>,
    rows: Vec<csv::StringRecord>,
}

impl DelimitedTable {
    /// Reads a tab-separated O*NET file. O*NET files are unquoted, so quote
    /// characters inside task statements are kept literally.
    pub fn read_tsv(path: &Path) -> Result<Self, TableError> {
        Self::read(path, b'\t', false)
    }

    pub fn read_csv(path: &Path) -> Result<Self, TableError> {
        Self::read(path, b',', true)
    }

    fn read(path: &Path, delimiter: u8, quoting: bool) -> Result<Self, TableError> {
        if !path.is_file() {
            return Err(TableError::MissingFile(path.to_path_buf()));
        }
        let file = File::open(path).map_err(|e| TableError::Read {
            path: path.to_path_buf(),
            source: e.into(),
        })?;
        Self::from_reader(path, file, delimiter, quoting)
    }

    pub fn from_reader<R: Read>(
        path: &Path,
        reader: R,
        delimiter: u8,
        quoting: bool,
    ) -> Result<Self, TableError> {
        let mut rdr = csv::ReaderBuilder::new()
            .delimiter(delimiter)
            .quoting(quoting)
            .flexible(true)
            .trim(csv::Trim::All)
            .from_reader(reader);
        let wrap = |source: csv::Error| TableError::Read {
            path: path.to_path_buf(),
            source,
        };
        let headers = rdr
            .headers()
            .map_err(wrap)?
            .iter()
            .map(|h| h.trim_start_matches('\u{feff}').to_string())
            .collect();
        let rows = rdr
            .records()
            .collect::<Result<Vec<_>, _>>()
            .map_err(wrap)?;
        Ok(Self {
            path: path.to_path_buf(),
            headers,
            rows,
        })
    }

    pub fn path(&self) -> &Path {
        &self.path
    }

    pub fn rows(&self) -> &[csv::StringRecord] {
        &self.rows
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    /// Finds a column by name. Exact case-insensitive matches win over
    /// substring matches, and earlier candidates win over later ones.
    pub fn column(&self, candidates: &[&str]) -> Option<usize> {
        let lower: Vec<String> = self.headers.iter().map(|h| h.to_lowercase()).collect();
        for cand in candidates {
            let cand = cand.to_lowercase();
            if let Some(i) = lower.iter().position(|h| *h == cand) {
                return Some(i);
            }
        }
        for cand in candidates {
            let cand = cand.to_lowercase();
            if let Some(i) = lower.iter().position(|h| h.contains(&cand)) {
                return Some(i);
            }
        }
        None
    }

    pub fn require(&self, candidates: &[&str]) -> Result<usize, TableError> {
        self.column(candidates)
            .ok_or_else(|| TableError::MissingColumn {
                path: self.path.clone(),
                candidates: candidates.iter().map(|c| c.to_string()).collect(),
            })
    }
}

/// Returns the trimmed cell, or an empty string for short rows.
pub fn cell(row: &csv::StringRecord, idx: usize) -> &str {
    row.get(idx).map(str::trim).unwrap_or("")
}

/// Parses a numeric cell written with thousands separators. BLS suppression
/// markers (`*`, `**`, `#`, `~`) and empty cells parse as `None`.
pub fn parse_number(raw: &str) -> Option<f64> {
    let cleaned: String = raw.trim().chars().filter(|c| *c != ',').collect();
    if cleaned.is_empty() || cleaned.chars().all(|c| matches!(c, '*' | '#' | '~')) {
        return None;
    }
    cleaned.parse::<f64>().ok().filter(|v| v.is_finite())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn column_lookup_prefers_exact_match() {
        let data = "O*NET-SOC Code\tTask ID\tTask\n11-1011.00\t8823\tDirect things\n";
        let t = DelimitedTable::from_reader(Path::new("t.txt"), data.as_bytes(), b'\t', false)
            .unwrap();
        assert_eq!(t.column(&["Task"]), Some(2));
        assert_eq!(t.column(&["task id"]), Some(1));
        assert_eq!(t.column(&["O*NET-SOC"]), Some(0));
        assert!(t.require(&["Scale ID"]).is_err());
    }

    #[test]
    fn bls_number_cells() {
        assert_eq!(parse_number("51,560"), Some(51560.0));
        assert_eq!(parse_number(" 940 "), Some(940.0));
        assert_eq!(parse_number("*"), None);
        assert_eq!(parse_number("**"), None);
        assert_eq!(parse_number("#"), None);
        assert_eq!(parse_number(""), None);
        assert_eq!(parse_number("n/a"), None);
    }

    #[test]
    fn unquoted_tsv_keeps_quote_characters() {
        let data = "Task ID\tTask\n1\tWrite \"press\" releases\n";
        let t = DelimitedTable::from_reader(Path::new("t.txt"), data.as_bytes(), b'\t', false)
            .unwrap();
        assert_eq!(cell(&t.rows()[0], 1), "Write \"press\" releases");
    }
}
