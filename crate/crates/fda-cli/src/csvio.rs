//! Versioned CSV files. Every file starts with `#fda-csv v<N> <schema>`,
//! then a column-name row; readers reject unknown versions and schemas.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use thiserror::Error;

pub const CSV_VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum CsvError {
    #[error("failed to access {path}: {source}")]
    Io {
        path: String,
        source: std::io::Error,
    },
    #[error("{path}: missing or malformed version line")]
    MissingVersion { path: String },
    #[error("{path}: unsupported csv version {got} (reader supports v{supported})")]
    UnsupportedVersion {
        path: String,
        got: String,
        supported: u32,
    },
    #[error("{path}: schema is '{got}', expected '{expected}'")]
    WrongSchema {
        path: String,
        got: String,
        expected: String,
    },
    #[error("{path}: row {row} has {got} fields, header has {expected}")]
    RaggedRow {
        path: String,
        row: usize,
        got: usize,
        expected: usize,
    },
}

pub struct CsvWriter {
    columns: usize,
    buffer: String,
}

impl CsvWriter {
    pub fn new(schema: &str, columns: &[&str]) -> Self {
        let mut buffer = String::new();
        writeln!(buffer, "#fda-csv v{CSV_VERSION} {schema}").unwrap();
        writeln!(buffer, "{}", columns.join(",")).unwrap();
        CsvWriter {
            columns: columns.len(),
            buffer,
        }
    }

    pub fn row(&mut self, fields: &[String]) {
        assert_eq!(fields.len(), self.columns, "ragged csv row");
        writeln!(self.buffer, "{}", fields.join(",")).unwrap();
    }

    pub fn finish(self) -> String {
        self.buffer
    }

    pub fn write_to(self, path: &Path) -> Result<(), CsvError> {
        fs::write(path, self.buffer).map_err(|source| CsvError::Io {
            path: path.display().to_string(),
            source,
        })
    }
}

pub struct CsvTable {
    pub columns: Vec<String>,
    pub rows: Vec<Vec<String>>,
}

impl CsvTable {
    pub fn column_index(&self, name: &str) -> Option<usize> {
        self.columns.iter().position(|c| c == name)
    }
}

pub fn read(path: &Path, expected_schema: &str) -> Result<CsvTable, CsvError> {
    let text = fs::read_to_string(path).map_err(|source| CsvError::Io {
        path: path.display().to_string(),
        source,
    })?;
    let name = || path.display().to_string();
    let mut lines = text.lines();
    let version_line = lines.next().ok_or_else(|| CsvError::MissingVersion { path: name() })?;
    let rest = version_line
        .strip_prefix("#fda-csv v")
        .ok_or_else(|| CsvError::MissingVersion { path: name() })?;
    let (version, schema) = rest
        .split_once(' ')
        .ok_or_else(|| CsvError::MissingVersion { path: name() })?;
    if version != CSV_VERSION.to_string() {
        return Err(CsvError::UnsupportedVersion {
            path: name(),
            got: version.to_string(),
            supported: CSV_VERSION,
        });
    }
    if schema != expected_schema {
        return Err(CsvError::WrongSchema {
            path: name(),
            got: schema.to_string(),
            expected: expected_schema.to_string(),
        });
    }
    let columns: Vec<String> = lines
        .next()
        .unwrap_or("")
        .split(',')
        .map(str::to_string)
        .collect();
    let mut rows = Vec::new();
    for (i, line) in lines.enumerate() {
        if line.is_empty() {
            continue;
        }
        let fields: Vec<String> = line.split(',').map(str::to_string).collect();
        if fields.len() != columns.len() {
            return Err(CsvError::RaggedRow {
                path: name(),
                row: i,
                got: fields.len(),
                expected: columns.len(),
            });
        }
        rows.push(fields);
    }
    Ok(CsvTable { columns, rows })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn roundtrip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("t.csv");
        let mut w = CsvWriter::new("demo", &["a", "b"]);
        w.row(&["1".into(), "2.5".into()]);
        w.row(&["3".into(), String::new()]);
        w.write_to(&path).unwrap();

        let table = read(&path, "demo").unwrap();
        assert_eq!(table.columns, vec!["a", "b"]);
        assert_eq!(table.rows.len(), 2);
        assert_eq!(table.rows[1][1], "");
        assert_eq!(table.column_index("b"), Some(1));
    }

    #[test]
    fn unknown_version_is_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("t.csv");
        fs::write(&path, "#fda-csv v9 demo\na,b\n1,2\n").unwrap();
        assert!(matches!(
            read(&path, "demo"),
            Err(CsvError::UnsupportedVersion { .. })
        ));
    }

    #[test]
    fn wrong_schema_is_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("t.csv");
        CsvWriter::new("demo", &["a"]).write_to(&path).unwrap();
        assert!(matches!(
            read(&path, "other"),
            Err(CsvError::WrongSchema { .. })
        ));
    }
}
