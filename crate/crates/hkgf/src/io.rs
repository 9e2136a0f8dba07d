//! CSV matrices and atomic file output.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use hkgf_core::Matrix;

use crate::error::{CliError, Result};

/// Parses a headerless, comma-separated, row-major matrix. Blank lines are
/// ignored; NaN and infinities are rejected.
pub fn parse_matrix(text: &str, path: &Path) -> Result<Matrix> {
    let mut data = Vec::new();
    let mut cols = None;
    let mut rows = 0;
    for (ln, line) in text.lines().enumerate() {
        let line = line.trim_end_matches('\r');
        if line.trim().is_empty() {
            continue;
        }
        let err = |column: usize, message: String| CliError::Parse {
            path: path.to_path_buf(),
            line: ln + 1,
            column,
            message,
        };
        let mut n = 0;
        for (k, field) in line.split(',').enumerate() {
            let v: f64 = field
                .trim()
                .parse()
                .map_err(|_| err(k + 1, format!("not a number: `{}`", field.trim())))?;
            if !v.is_finite() {
                return Err(err(k + 1, "non-finite value".into()));
            }
            data.push(v);
            n += 1;
        }
        match cols {
            None => cols = Some(n),
            Some(c) if c != n => {
                return Err(err(n.min(c) + 1, format!("expected {c} fields, found {n}")));
            }
            _ => {}
        }
        rows += 1;
    }
    let cols = cols.ok_or_else(|| CliError::Format {
        path: path.to_path_buf(),
        message: "empty matrix".into(),
    })?;
    Ok(Matrix::from_vec(rows, cols, data)?)
}

pub fn read_matrix(path: &Path) -> Result<Matrix> {
    let text = fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
    parse_matrix(&text, path)
}

/// Shortest round-trip decimal representation, one row per line.
pub fn format_matrix(m: &Matrix) -> String {
    let mut out = String::with_capacity(m.len() * 20);
    for row in m.row_iter() {
        let line: Vec<String> = row.iter().map(|v| format!("{v:?}")).collect();
        out.push_str(&line.join(","));
        out.push('\n');
    }
    out
}

/// Refuses to clobber an existing file unless `force` is set.
pub fn check_writable(path: &Path, force: bool) -> Result<()> {
    if !force && path.exists() {
        return Err(CliError::Exists(path.to_path_buf()));
    }
    Ok(())
}

/// Writes through a sibling temporary file and renames it into place.
pub fn write_atomic(path: &Path, bytes: &[u8], force: bool) -> Result<()> {
    check_writable(path, force)?;
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(|e| CliError::io(dir, e))?;
    }
    let mut tmp = path.as_os_str().to_owned();
    tmp.push(format!(".tmp{}", std::process::id()));
    let tmp = PathBuf::from(tmp);
    let result = (|| {
        let mut f = fs::File::create(&tmp)?;
        f.write_all(bytes)?;
        f.sync_all()?;
        fs::rename(&tmp, path)
    })();
    if let Err(e) = result {
        let _ = fs::remove_file(&tmp);
        return Err(CliError::io(path, e));
    }
    Ok(())
}

pub fn write_matrix(path: &Path, m: &Matrix, force: bool) -> Result<()> {
    write_atomic(path, format_matrix(m).as_bytes(), force)
}

pub fn write_json<T: serde::Serialize>(path: &Path, value: &T, force: bool) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value).map_err(|e| CliError::Format {
        path: path.to_path_buf(),
        message: e.to_string(),
    })?;
    text.push('\n');
    write_atomic(path, text.as_bytes(), force)
}

pub fn read_json<T: serde::de::DeserializeOwned>(path: &Path) -> Result<T> {
    let text = fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
    serde_json::from_str(&text).map_err(|e| CliError::Parse {
        path: path.to_path_buf(),
        line: e.line(),
        column: e.column(),
        message: e.to_string(),
    })
}
