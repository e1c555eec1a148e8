//! Tab-separated input tables and output helpers.
//!
//! Inputs have a mandatory header line; blank lines and lines starting with
//! `#` are skipped. Diagnostics carry the 1-based line number of the file.

use std::fs::File;
use std::io::{self, Read, Write};
use std::path::{Path, PathBuf};

use crate::error::{usage, CliError, Result};

pub struct Table {
    path: PathBuf,
    header: Vec<String>,
    rows: Vec<Row>,
}

pub struct Row {
    pub line: u64,
    fields: Vec<String>,
}

impl Table {
    /// Reads `path`, or standard input when it is `-`.
    pub fn read(path: &Path) -> Result<Self> {
        let source: Box<dyn Read> = if path == Path::new("-") {
            Box::new(io::stdin())
        } else {
            Box::new(File::open(path).map_err(|e| CliError::io(path, e))?)
        };
        let mut reader = csv::ReaderBuilder::new()
            .delimiter(b'\t')
            .comment(Some(b'#'))
            .trim(csv::Trim::All)
            .from_reader(source);
        let name = path.display().to_string();
        let header: Vec<String> = reader
            .headers()
            .map_err(|e| usage(format!("{name}: {e}")))?
            .iter()
            .map(str::to_string)
            .collect();
        if header.iter().all(String::is_empty) {
            return Err(usage(format!("{name}: missing header line")));
        }
        let mut rows = Vec::new();
        for record in reader.records() {
            let record = record.map_err(|e| match e.position() {
                Some(pos) => usage(format!("{name}:{}: {e}", pos.line())),
                None => usage(format!("{name}: {e}")),
            })?;
            rows.push(Row {
                line: record.position().map_or(0, |p| p.line()),
                fields: record.iter().map(str::to_string).collect(),
            });
        }
        if rows.is_empty() {
            return Err(usage(format!("{name}: no tests")));
        }
        Ok(Self {
            path: path.to_path_buf(),
            header,
            rows,
        })
    }

    pub fn rows(&self) -> &[Row] {
        &self.rows
    }

    pub fn header(&self) -> &[String] {
        &self.header
    }

    pub fn column(&self, name: &str) -> Option<usize> {
        self.header.iter().position(|h| h == name)
    }

    pub fn has(&self, name: &str) -> bool {
        self.column(name).is_some()
    }

    pub fn require(&self, name: &str) -> Result<usize> {
        self.column(name).ok_or_else(|| {
            usage(format!(
                "{}: missing column '{name}' (header: {})",
                self.path.display(),
                self.header.join(", ")
            ))
        })
    }

    pub fn text<'a>(&self, row: &'a Row, col: usize) -> &'a str {
        &row.fields[col]
    }

    pub fn number(&self, row: &Row, col: usize) -> Result<f64> {
        let raw = &row.fields[col];
        raw.parse::<f64>()
            .ok()
            .filter(|x| !x.is_nan())
            .ok_or_else(|| {
                self.error(
                    row,
                    format!("column '{}': invalid number '{raw}'", self.header[col]),
                )
            })
    }

    pub fn error(&self, row: &Row, msg: impl std::fmt::Display) -> CliError {
        usage(format!("{}:{}: {msg}", self.path.display(), row.line))
    }

    /// Directory that relative file references in the table resolve against.
    pub fn base_dir(&self) -> PathBuf {
        match self.path.parent() {
            Some(p) if self.path != Path::new("-") => p.to_path_buf(),
            _ => PathBuf::from("."),
        }
    }
}

/// Whitespace-separated numbers; rows are individuals.
pub fn read_matrix(path: &Path) -> Result<Vec<Vec<f64>>> {
    let text = std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
    let mut rows = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let row = line
            .split_whitespace()
            .map(|tok| {
                tok.parse::<f64>()
                    .ok()
                    .filter(|x| x.is_finite())
                    .ok_or_else(|| {
                        usage(format!(
                            "{}:{}: invalid number '{tok}'",
                            path.display(),
                            i + 1
                        ))
                    })
            })
            .collect::<Result<Vec<_>>>()?;
        rows.push(row);
    }
    if rows.is_empty() {
        return Err(usage(format!("{}: empty matrix", path.display())));
    }
    Ok(rows)
}

/// Full-precision, round-trippable number.
pub fn machine(x: f64) -> String {
    format!("{x:?}")
}

/// Six significant digits for human-facing tables.
pub fn human(x: f64) -> String {
    if x == 0.0 || !x.is_finite() {
        return format!("{x}");
    }
    let exp = x.abs().log10().floor() as i32;
    if (-4..6).contains(&exp) {
        let s = format!("{:.*}", (5 - exp).max(0) as usize, x);
        if s.contains('.') {
            s.trim_end_matches('0').trim_end_matches('.').to_string()
        } else {
            s
        }
    } else {
        format!("{x:.5e}")
    }
}

/// Writes `contents` to `path` through a temporary file in the same
/// directory, so a failed run never leaves a partial file behind.
pub fn write_atomic(path: &Path, contents: &str) -> Result<()> {
    let dir = match path.parent() {
        Some(p) if !p.as_os_str().is_empty() => p,
        _ => Path::new("."),
    };
    let mut tmp = tempfile::NamedTempFile::new_in(dir).map_err(|e| CliError::io(dir, e))?;
    tmp.write_all(contents.as_bytes())
        .map_err(|e| CliError::io(tmp.path(), e))?;
    tmp.persist(path).map_err(|e| CliError::io(path, e.error))?;
    Ok(())
}

/// Sends `contents` to `path`, or to standard output.
pub fn emit(path: Option<&Path>, contents: &str) -> Result<()> {
    match path {
        Some(p) => write_atomic(p, contents),
        None => io::stdout()
            .write_all(contents.as_bytes())
            .map_err(|e| CliError::io("<stdout>", e)),
    }
}
