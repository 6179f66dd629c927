//! Matrix Market files for matrices and masks, TOML experiment configs and
//! CSV reports. Every writer is a deterministic function of its input:
//! numbers use `{:.16e}` (17 significant digits, exact round trip), line
//! endings are LF.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use nalgebra::{DMatrix, DVector};
use serde::Serialize;

use crate::error::{Error, Result};
use crate::experiments::ExperimentConfig;
use crate::mask::Mask;

pub fn format_f64(x: f64) -> String {
    format!("{x:.16e}")
}

fn io_err(path: &Path, source: std::io::Error) -> Error {
    Error::Io {
        path: path.to_path_buf(),
        source,
    }
}

fn read_text(path: &Path) -> Result<String> {
    fs::read_to_string(path).map_err(|e| io_err(path, e))
}

fn write_text(path: &Path, text: &str) -> Result<()> {
    fs::write(path, text).map_err(|e| io_err(path, e))
}

fn parse_err(path: &Path, line: usize, msg: impl Into<String>) -> Error {
    Error::Parse {
        path: path.to_path_buf(),
        line,
        msg: msg.into(),
    }
}

const ARRAY_HEADER: &str = "%%MatrixMarket matrix array real general";
const PATTERN_HEADER: &str = "%%MatrixMarket matrix coordinate pattern general";

/// Dense array format, column-major.
pub fn matrix_to_string(m: &DMatrix<f64>) -> String {
    let mut out = String::with_capacity(24 * m.len() + 64);
    out.push_str(ARRAY_HEADER);
    out.push('\n');
    let _ = writeln!(out, "{} {}", m.nrows(), m.ncols());
    for x in m.iter() {
        out.push_str(&format_f64(*x));
        out.push('\n');
    }
    out
}

pub fn mask_to_string(mask: &Mask) -> String {
    let (rows, cols) = mask.shape();
    let mut out = String::new();
    out.push_str(PATTERN_HEADER);
    out.push('\n');
    let _ = writeln!(out, "{rows} {cols} {}", mask.len());
    for (i, j) in mask.iter() {
        let _ = writeln!(out, "{} {}", i + 1, j + 1);
    }
    out
}

/// Non-comment, non-blank lines with their 1-based line numbers.
fn content_lines(text: &str) -> impl Iterator<Item = (usize, &str)> {
    text.lines()
        .enumerate()
        .map(|(k, l)| (k + 1, l.trim()))
        .filter(|(_, l)| !l.is_empty() && !l.starts_with('%'))
}

fn check_header(text: &str, expected: &str, path: &Path) -> Result<()> {
    let first = text.lines().next().unwrap_or("");
    let words: Vec<String> = first.split_whitespace().map(str::to_ascii_lowercase).collect();
    let want: Vec<String> = expected.split_whitespace().map(str::to_ascii_lowercase).collect();
    if words != want {
        return Err(parse_err(path, 1, format!("expected header `{expected}`, found `{first}`")));
    }
    Ok(())
}

fn parse_usizes(line: &str, count: usize, lineno: usize, path: &Path) -> Result<Vec<usize>> {
    let parts: Vec<&str> = line.split_whitespace().collect();
    if parts.len() != count {
        return Err(parse_err(path, lineno, format!("expected {count} integers, found `{line}`")));
    }
    parts
        .iter()
        .map(|p| p.parse().map_err(|_| parse_err(path, lineno, format!("invalid integer `{p}`"))))
        .collect()
}

pub fn parse_matrix(text: &str, path: &Path) -> Result<DMatrix<f64>> {
    check_header(text, ARRAY_HEADER, path)?;
    let mut lines = content_lines(text);
    let (lineno, size) = lines.next().ok_or_else(|| parse_err(path, 1, "missing size line"))?;
    let dims = parse_usizes(size, 2, lineno, path)?;
    let (rows, cols) = (dims[0], dims[1]);
    let mut data = Vec::with_capacity(rows * cols);
    let mut last = lineno;
    for (lineno, line) in lines {
        last = lineno;
        if data.len() == rows * cols {
            return Err(parse_err(path, lineno, "more entries than the declared size"));
        }
        let value: f64 = line
            .parse()
            .map_err(|_| parse_err(path, lineno, format!("invalid number `{line}`")))?;
        data.push(value);
    }
    if data.len() != rows * cols {
        return Err(parse_err(path, last, format!("expected {} entries, found {}", rows * cols, data.len())));
    }
    Ok(DMatrix::from_vec(rows, cols, data))
}

pub fn parse_mask(text: &str, path: &Path) -> Result<Mask> {
    check_header(text, PATTERN_HEADER, path)?;
    let mut lines = content_lines(text);
    let (lineno, size) = lines.next().ok_or_else(|| parse_err(path, 1, "missing size line"))?;
    let dims = parse_usizes(size, 3, lineno, path)?;
    let (rows, cols, nnz) = (dims[0], dims[1], dims[2]);
    let mut mask = Mask::empty(rows, cols);
    let mut seen = 0;
    let mut last = lineno;
    for (lineno, line) in lines {
        last = lineno;
        let ij = parse_usizes(line, 2, lineno, path)?;
        let (i, j) = (ij[0], ij[1]);
        if i == 0 || j == 0 || i > rows || j > cols {
            return Err(parse_err(path, lineno, format!("entry ({i}, {j}) outside {rows}x{cols}")));
        }
        mask.insert(i - 1, j - 1);
        seen += 1;
    }
    if seen != nnz {
        return Err(parse_err(path, last, format!("expected {nnz} entries, found {seen}")));
    }
    Ok(mask)
}

pub fn write_matrix(path: &Path, m: &DMatrix<f64>) -> Result<()> {
    write_text(path, &matrix_to_string(m))
}

pub fn read_matrix(path: &Path) -> Result<DMatrix<f64>> {
    parse_matrix(&read_text(path)?, path)
}

/// Column vector as an `n × 1` array.
pub fn write_vector(path: &Path, v: &DVector<f64>) -> Result<()> {
    write_matrix(path, &DMatrix::from_column_slice(v.len(), 1, v.as_slice()))
}

pub fn read_vector(path: &Path) -> Result<DVector<f64>> {
    let m = read_matrix(path)?;
    if m.ncols() != 1 {
        return Err(parse_err(path, 2, format!("expected a column vector, found {} columns", m.ncols())));
    }
    Ok(m.column(0).into_owned())
}

pub fn write_mask(path: &Path, mask: &Mask) -> Result<()> {
    write_text(path, &mask_to_string(mask))
}

pub fn read_mask(path: &Path) -> Result<Mask> {
    parse_mask(&read_text(path)?, path)
}

pub fn parse_config(text: &str, path: &Path) -> Result<ExperimentConfig> {
    let cfg: ExperimentConfig =
        toml::from_str(text).map_err(|e| Error::Config(format!("{}: {}", path.display(), e.message())))?;
    cfg.validate()?;
    Ok(cfg)
}

pub fn read_config(path: &Path) -> Result<ExperimentConfig> {
    parse_config(&read_text(path)?, path)
}

/// One Monte-Carlo trial.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ReportRow {
    pub experiment: String,
    pub cell: usize,
    /// `name=value` pairs joined by `;`.
    pub coords: String,
    pub trial: usize,
    pub seed: u64,
    pub success: bool,
    pub rel_error: Option<f64>,
    pub iterations: Option<usize>,
    pub runtime_ms: Option<f64>,
    pub errata: String,
}

pub const REPORT_HEADER: [&str; 10] = [
    "experiment",
    "cell",
    "coords",
    "trial",
    "seed",
    "success",
    "rel_error",
    "iterations",
    "runtime_ms",
    "errata",
];

fn csv_field(field: &str) -> String {
    if field.contains([',', '"', '\n', '\r']) {
        format!("\"{}\"", field.replace('"', "\"\""))
    } else {
        field.to_string()
    }
}

fn opt<T>(v: Option<T>, f: impl Fn(T) -> String) -> String {
    v.map(f).unwrap_or_default()
}

/// CSV with a header row and one line per record.
pub fn table_to_string<S: AsRef<str>>(header: &[S], rows: &[Vec<String>]) -> String {
    let mut out = String::new();
    let line = |fields: Vec<String>| fields.join(",") + "\n";
    out.push_str(&line(header.iter().map(|h| csv_field(h.as_ref())).collect()));
    for row in rows {
        out.push_str(&line(row.iter().map(|f| csv_field(f)).collect()));
    }
    out
}

pub fn report_to_string(rows: &[ReportRow]) -> String {
    let records: Vec<Vec<String>> = rows
        .iter()
        .map(|r| {
            vec![
                r.experiment.clone(),
                r.cell.to_string(),
                r.coords.clone(),
                r.trial.to_string(),
                r.seed.to_string(),
                u8::from(r.success).to_string(),
                opt(r.rel_error, format_f64),
                opt(r.iterations, |k| k.to_string()),
                opt(r.runtime_ms, |t| format!("{t:.3}")),
                r.errata.clone(),
            ]
        })
        .collect();
    table_to_string(&REPORT_HEADER, &records)
}

pub fn write_report(path: &Path, rows: &[ReportRow]) -> Result<()> {
    write_text(path, &report_to_string(rows))
}

pub fn write_table<S: AsRef<str>>(path: &Path, header: &[S], rows: &[Vec<String>]) -> Result<()> {
    write_text(path, &table_to_string(header, rows))
}

/// `path` with `suffix` inserted before the extension (`grid.csv` →
/// `grid.summary.csv`).
pub fn sibling_path(path: &Path, suffix: &str) -> PathBuf {
    let stem = path.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
    let name = match path.extension() {
        Some(ext) => format!("{stem}.{suffix}.{}", ext.to_string_lossy()),
        None => format!("{stem}.{suffix}"),
    };
    path.with_file_name(name)
}
