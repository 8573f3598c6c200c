//! Plain-text dataset files.
//!
//! Matrices hold one sample per line with comma, tab, or whitespace
//! separated numbers; blank lines and lines starting with `#` are skipped.
//! Labels are one non-negative integer per line, assets one path per line.

use std::fs;
use std::io::{BufWriter, Write};
use std::path::Path;

use crate::error::{Error, Result};
use crate::model::{Dataset, Matrix};

fn read(path: &Path) -> Result<String> {
    fs::read_to_string(path).map_err(|e| Error::io(path, e))
}

fn content_lines(text: &str) -> impl Iterator<Item = (usize, &str)> {
    text.lines()
        .enumerate()
        .map(|(i, l)| (i + 1, l.trim()))
        .filter(|(_, l)| !l.is_empty() && !l.starts_with('#'))
}

pub fn parse_matrix(text: &str, path: &Path) -> Result<Matrix> {
    let parse_err = |line: usize, message: String| Error::Parse {
        path: path.to_path_buf(),
        line,
        message,
    };
    let mut rows: Vec<Vec<f64>> = Vec::new();
    for (line, content) in content_lines(text) {
        let row = content
            .split(|c: char| c == ',' || c == ';' || c.is_whitespace())
            .filter(|s| !s.is_empty())
            .map(|s| {
                s.parse::<f64>()
                    .map_err(|e| parse_err(line, format!("'{s}': {e}")))
            })
            .collect::<Result<Vec<f64>>>()?;
        if let Some(first) = rows.first() {
            if first.len() != row.len() {
                return Err(parse_err(line, format!("expected {} columns, found {}", first.len(), row.len())));
            }
        }
        rows.push(row);
    }
    if rows.is_empty() {
        return Err(parse_err(0, "no data rows".into()));
    }
    Matrix::from_rows(&rows)
}

pub fn read_matrix(path: &Path) -> Result<Matrix> {
    parse_matrix(&read(path)?, path)
}

pub fn read_labels(path: &Path) -> Result<Vec<usize>> {
    let text = read(path)?;
    content_lines(&text)
        .map(|(line, l)| {
            l.parse::<usize>().map_err(|e| Error::Parse {
                path: path.to_path_buf(),
                line,
                message: format!("label '{l}': {e}"),
            })
        })
        .collect()
}

pub fn read_assets(path: &Path) -> Result<Vec<String>> {
    let text = read(path)?;
    Ok(text
        .lines()
        .map(str::trim)
        .filter(|l| !l.is_empty())
        .map(String::from)
        .collect())
}

/// Loads features plus optional labels and assets into a dataset.
pub fn load_dataset(data: &Path, labels: Option<&Path>, assets: Option<&Path>) -> Result<Dataset> {
    let mut ds = Dataset::new(read_matrix(data)?)?;
    if let Some(p) = labels {
        ds = ds.with_labels(read_labels(p)?)?;
    }
    if let Some(p) = assets {
        ds = ds.with_assets(read_assets(p)?)?;
    }
    Ok(ds)
}

pub fn write_matrix(path: &Path, matrix: &Matrix) -> Result<()> {
    let file = fs::File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    (0..matrix.rows())
        .try_for_each(|i| {
            let row: Vec<String> = matrix.row(i).iter().map(f64::to_string).collect();
            writeln!(w, "{}", row.join(","))
        })
        .and_then(|_| w.flush())
        .map_err(|e| Error::io(path, e))
}

pub fn write_labels(path: &Path, labels: &[usize]) -> Result<()> {
    let mut text = String::with_capacity(labels.len() * 3);
    for l in labels {
        text.push_str(&l.to_string());
        text.push('\n');
    }
    fs::write(path, text).map_err(|e| Error::io(path, e))
}
