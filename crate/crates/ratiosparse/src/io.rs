//! Text instance format, dataset CSV ingestion and small file helpers.
//!
//! Instance files are whitespace separated with `#` comments:
//!
//! ```text
//! m 2
//! n 3
//! A
//! 1 0 1
//! 0 1 1
//! b
//! 1 1
//! x          # optional ground truth
//! 1 0 0
//! noise_db 50  # optional
//! ```

use std::fs;
use std::path::{Path, PathBuf};

use ratiosparse_core::rvfl::Dataset;
use ratiosparse_core::{Matrix, ProblemInstance, Vector};

use crate::error::{AppError, AppResult};

pub fn read_text(path: &Path) -> AppResult<String> {
    fs::read_to_string(path).map_err(|e| AppError::MissingFile {
        path: path.to_path_buf(),
        reason: e.to_string(),
    })
}

pub fn write_text(path: &Path, text: &str) -> AppResult<()> {
    fs::write(path, text).map_err(|e| AppError::Runtime(format!("cannot write `{}`: {e}", path.display())))
}

pub fn ensure_dir(dir: &Path) -> AppResult<PathBuf> {
    fs::create_dir_all(dir)
        .map_err(|e| AppError::Runtime(format!("cannot create `{}`: {e}", dir.display())))?;
    Ok(dir.to_path_buf())
}

fn parse_err(line: usize, msg: impl std::fmt::Display) -> AppError {
    AppError::Usage(format!("instance line {line}: {msg}"))
}

fn numbers(line: usize, text: &str) -> AppResult<Vec<f64>> {
    text.split_whitespace()
        .map(|t| t.parse::<f64>().map_err(|_| parse_err(line, format!("`{t}` is not a number"))))
        .collect()
}

/// Parses the text instance format.
pub fn parse_instance(text: &str) -> AppResult<ProblemInstance> {
    let lines: Vec<(usize, &str)> = text
        .lines()
        .enumerate()
        .map(|(i, l)| (i + 1, l.split('#').next().unwrap_or("").trim()))
        .filter(|(_, l)| !l.is_empty())
        .collect();
    let (mut m, mut n) = (None, None);
    let (mut a, mut b, mut x, mut noise) = (None, None, None, None);
    let mut k = 0;
    while k < lines.len() {
        let (no, line) = lines[k];
        let mut parts = line.split_whitespace();
        let key = parts.next().unwrap_or_default();
        let rest: Vec<&str> = parts.collect();
        let scalar = |what: &str| -> AppResult<&str> {
            match rest.as_slice() {
                [v] => Ok(*v),
                _ => Err(parse_err(no, format!("`{what}` takes one value"))),
            }
        };
        match key {
            "m" | "n" => {
                let v: usize = scalar(key)?.parse().map_err(|_| parse_err(no, "bad dimension"))?;
                if key == "m" { m = Some(v) } else { n = Some(v) }
                k += 1;
            }
            "noise_db" => {
                noise = Some(scalar(key)?.parse::<f64>().map_err(|_| parse_err(no, "bad noise_db"))?);
                k += 1;
            }
            "A" => {
                let (rows, cols) = match (m, n) {
                    (Some(r), Some(c)) => (r, c),
                    _ => return Err(parse_err(no, "`m` and `n` must precede `A`")),
                };
                let mut data = Vec::with_capacity(rows * cols);
                for r in 0..rows {
                    let (rn, rl) = *lines.get(k + 1 + r).ok_or_else(|| parse_err(no, "truncated matrix"))?;
                    let vals = numbers(rn, rl)?;
                    if vals.len() != cols {
                        return Err(parse_err(rn, format!("expected {cols} entries, found {}", vals.len())));
                    }
                    data.extend(vals);
                }
                a = Some(Matrix::from_row_slice(rows, cols, &data));
                k += 1 + rows;
            }
            "b" | "x" => {
                let (vn, vl) = *lines.get(k + 1).ok_or_else(|| parse_err(no, "missing vector"))?;
                let v = Vector::from_vec(numbers(vn, vl)?);
                if key == "b" { b = Some(v) } else { x = Some(v) }
                k += 2;
            }
            other => return Err(parse_err(no, format!("unknown key `{other}`"))),
        }
    }
    let a = a.ok_or_else(|| AppError::Usage("instance has no `A` section".into()))?;
    let b = b.ok_or_else(|| AppError::Usage("instance has no `b` section".into()))?;
    let mut inst = ProblemInstance::new(a, b).map_err(|e| AppError::Usage(format!("invalid instance: {e}")))?;
    if let Some(x) = x {
        inst = inst
            .with_ground_truth(x)
            .map_err(|e| AppError::Usage(format!("invalid ground truth: {e}")))?;
    }
    Ok(inst.with_noise_db(noise))
}

fn join(v: impl Iterator<Item = f64>) -> String {
    v.map(|x| x.to_string()).collect::<Vec<_>>().join(" ")
}

/// Inverse of [`parse_instance`]; values use shortest round-trip formatting.
pub fn format_instance(inst: &ProblemInstance) -> String {
    let mut out = format!("m {}\nn {}\nA\n", inst.m(), inst.n());
    for row in inst.a().row_iter() {
        out.push_str(&join(row.iter().copied()));
        out.push('\n');
    }
    out.push_str("b\n");
    out.push_str(&join(inst.b().iter().copied()));
    out.push('\n');
    if let Some(x) = inst.ground_truth() {
        out.push_str("x\n");
        out.push_str(&join(x.iter().copied()));
        out.push('\n');
    }
    if let Some(db) = inst.noise_db() {
        out.push_str(&format!("noise_db {db}\n"));
    }
    out
}

/// Reads a matrix given either as an instance file or as bare rows.
pub fn parse_matrix(text: &str) -> AppResult<Matrix> {
    if text.lines().any(|l| l.trim() == "A") {
        return Ok(parse_instance(text)?.a().clone());
    }
    let mut rows = Vec::new();
    for (i, l) in text.lines().enumerate() {
        let l = l.split('#').next().unwrap_or("").trim();
        if !l.is_empty() {
            rows.push(numbers(i + 1, &l.replace(',', " "))?);
        }
    }
    let cols = rows.first().map_or(0, Vec::len);
    if rows.is_empty() || cols == 0 || rows.iter().any(|r| r.len() != cols) {
        return Err(AppError::Usage("matrix rows must be nonempty and of equal length".into()));
    }
    Ok(Matrix::from_row_slice(rows.len(), cols, &rows.concat()))
}

/// CSV with a header row; the last `targets` columns are targets. Cells
/// that are not numbers are rejected with their line number.
pub fn parse_dataset(text: &str, targets: usize) -> AppResult<Dataset> {
    let mut reader = csv::ReaderBuilder::new().has_headers(true).trim(csv::Trim::All).from_reader(text.as_bytes());
    let width = reader
        .headers()
        .map_err(|e| AppError::Usage(format!("dataset header: {e}")))?
        .len();
    if targets == 0 || targets >= width {
        return Err(AppError::Usage(format!(
            "dataset has {width} columns; need more than {targets} target column(s)"
        )));
    }
    let mut x = Vec::new();
    let mut y = Vec::new();
    let mut rows = 0;
    for rec in reader.records() {
        let rec = rec.map_err(|e| AppError::Usage(format!("dataset: {e}")))?;
        let line = rec.position().map_or(0, |p| p.line());
        if rec.len() != width {
            return Err(AppError::Usage(format!("dataset line {line}: expected {width} cells, found {}", rec.len())));
        }
        for (j, cell) in rec.iter().enumerate() {
            let v: f64 = cell
                .parse()
                .ok()
                .filter(|v: &f64| v.is_finite())
                .ok_or_else(|| AppError::Usage(format!("dataset line {line}: non-numeric cell `{cell}`")))?;
            if j < width - targets { x.push(v) } else { y.push(v) }
        }
        rows += 1;
    }
    if rows == 0 {
        return Err(AppError::Usage("dataset has no rows".into()));
    }
    let d = width - targets;
    Dataset::new(Matrix::from_row_slice(rows, d, &x), Matrix::from_row_slice(rows, targets, &y))
        .map_err(|e| AppError::Usage(format!("dataset: {e}")))
}

/// `key=value` lines.
pub fn key_values(pairs: &[(&str, String)]) -> String {
    pairs.iter().map(|(k, v)| format!("{k}={v}\n")).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    const SAMPLE: &str = "# toy\nm 2\nn 3\nA\n1 0 1\n0 1 1\nb\n1 1\nx\n1 0 0\nnoise_db 50\n";

    #[test]
    fn instance_round_trip() {
        let inst = parse_instance(SAMPLE).unwrap();
        assert_eq!(inst.m(), 2);
        assert_eq!(inst.a()[(1, 2)], 1.0);
        assert_eq!(inst.noise_db(), Some(50.0));
        assert_eq!(parse_instance(&format_instance(&inst)).unwrap(), inst);
    }

    #[test]
    fn instance_errors_name_lines() {
        let err = parse_instance("m 2\nn 2\nA\n1 0\n0 x\nb\n1 1\n").unwrap_err();
        assert!(err.to_string().contains("line 5"), "{err}");
        assert!(parse_instance("m 2\nn 2\nA\n1 0\n").is_err());
        assert!(parse_instance("m 1\nn 1\nA\n1\n").unwrap_err().to_string().contains("`b`"));
    }

    #[test]
    fn bare_matrix() {
        let a = parse_matrix("1 1\n").unwrap();
        assert_eq!(a.shape(), (1, 2));
        assert_eq!(parse_matrix(SAMPLE).unwrap().shape(), (2, 3));
        assert!(parse_matrix("1 2\n3\n").is_err());
    }

    #[test]
    fn dataset_parsing() {
        let d = parse_dataset("a,b,y\n1,2,3\n4,5,6\n", 1).unwrap();
        assert_eq!(d.x.shape(), (2, 2));
        assert_eq!(d.y[(1, 0)], 6.0);
        let err = parse_dataset("a,b,y\n1,2,3\n4,oops,6\n", 1).unwrap_err();
        assert!(err.to_string().contains("line 3"), "{err}");
        assert!(parse_dataset("a,y\n1,2\n", 2).is_err());
    }
}
