use std::fmt::Display;
use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use corrgraph::nalgebra::DMatrix;
use corrgraph::{Error, SampleMatrix};

/// A command failure with its process exit code.
#[derive(Debug)]
pub struct Failure {
    pub code: u8,
    pub message: String,
}

pub const EXIT_USAGE: u8 = 1;
pub const EXIT_MALFORMED: u8 = 2;
pub const EXIT_DEGENERATE: u8 = 3;
pub const EXIT_NOT_PD: u8 = 4;
pub const EXIT_NOT_PSD: u8 = 5;

impl Failure {
    pub fn new(code: u8, message: impl Display) -> Self {
        Failure {
            code,
            message: message.to_string(),
        }
    }

    pub fn usage(message: impl Display) -> Self {
        Failure::new(EXIT_USAGE, message)
    }
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        let code = match e {
            Error::DegenerateColumn { .. } | Error::Degenerate(_) => EXIT_DEGENERATE,
            Error::NotPositiveDefinite { .. } => EXIT_NOT_PD,
            Error::NotPsd(_) | Error::Singular(_) => EXIT_NOT_PSD,
            Error::Index(_) | Error::InvalidInput(_) | Error::Config(_) => EXIT_USAGE,
        };
        Failure::new(code, e)
    }
}

pub type CliResult<T> = std::result::Result<T, Failure>;

pub fn io_failure(path: &Path, e: impl Display) -> Failure {
    Failure::usage(format!("{}: {e}", path.display()))
}

fn parse_field(field: &str, line: u64, column: usize, path: &Path) -> CliResult<f64> {
    match field.trim().parse::<f64>() {
        Ok(v) if v.is_finite() => Ok(v),
        _ => Err(Failure::new(
            EXIT_MALFORMED,
            format!(
                "{}: line {line}, column {}: `{field}` is not a finite number",
                path.display(),
                column + 1
            ),
        )),
    }
}

fn csv_failure(path: &Path, e: csv::Error) -> Failure {
    let line = e.position().map(|p| p.line());
    match (e.kind(), line) {
        (csv::ErrorKind::Io(_), _) => io_failure(path, e),
        (_, Some(line)) => Failure::new(EXIT_MALFORMED, format!("{}: line {line}: {e}", path.display())),
        (_, None) => Failure::new(EXIT_MALFORMED, format!("{}: {e}", path.display())),
    }
}

/// Observations with their variable names.
pub struct Dataset {
    pub names: Vec<String>,
    pub samples: SampleMatrix,
}

/// Reads a comma-separated table with a header row of variable names and
/// one observation per line.
pub fn read_dataset(path: &Path) -> CliResult<Dataset> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .from_path(path)
        .map_err(|e| csv_failure(path, e))?;
    let names: Vec<String> = reader
        .headers()
        .map_err(|e| csv_failure(path, e))?
        .iter()
        .map(|h| h.trim().to_string())
        .collect();
    let p = names.len();
    if p < 2 {
        return Err(Failure::new(
            EXIT_MALFORMED,
            format!("{}: line 1: need at least two columns, found {p}", path.display()),
        ));
    }
    let mut values = Vec::new();
    let mut n = 0;
    for record in reader.records() {
        let record = record.map_err(|e| csv_failure(path, e))?;
        let line = record.position().map_or(0, |p| p.line());
        for (c, field) in record.iter().enumerate() {
            values.push(parse_field(field, line, c, path)?);
        }
        n += 1;
    }
    if n < corrgraph::sample::MIN_OBSERVATIONS {
        return Err(Failure::new(
            EXIT_MALFORMED,
            format!(
                "{}: {n} observations, at least {} are needed",
                path.display(),
                corrgraph::sample::MIN_OBSERVATIONS
            ),
        ));
    }
    match SampleMatrix::from_rows(n, p, &values) {
        Ok(samples) => Ok(Dataset { names, samples }),
        Err(Error::DegenerateColumn { column }) => Err(Failure::new(
            EXIT_DEGENERATE,
            format!("column `{}` ({}) is constant", names[column], column + 1),
        )),
        Err(e) => Err(e.into()),
    }
}

/// Reads a header-less numeric matrix.
pub fn read_matrix(path: &Path) -> CliResult<DMatrix<f64>> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(false)
        .flexible(false)
        .from_path(path)
        .map_err(|e| csv_failure(path, e))?;
    let mut values = Vec::new();
    let mut rows = 0;
    let mut cols = 0;
    for record in reader.records() {
        let record = record.map_err(|e| csv_failure(path, e))?;
        let line = record.position().map_or(0, |p| p.line());
        cols = record.len();
        for (c, field) in record.iter().enumerate() {
            values.push(parse_field(field, line, c, path)?);
        }
        rows += 1;
    }
    if rows == 0 {
        return Err(Failure::new(EXIT_MALFORMED, format!("{}: empty matrix", path.display())));
    }
    Ok(DMatrix::from_row_slice(rows, cols, &values))
}

pub fn create(path: &Path) -> CliResult<BufWriter<File>> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir).map_err(|e| io_failure(dir, e))?;
    }
    File::create(path).map(BufWriter::new).map_err(|e| io_failure(path, e))
}

pub fn write_matrix(path: &Path, m: &DMatrix<f64>) -> CliResult<()> {
    let mut w = csv::Writer::from_writer(create(path)?);
    for i in 0..m.nrows() {
        w.write_record((0..m.ncols()).map(|j| m[(i, j)].to_string()))
            .map_err(|e| io_failure(path, e))?;
    }
    w.flush().map_err(|e| io_failure(path, e))
}

pub fn write_dataset(path: &Path, names: &[String], samples: &SampleMatrix) -> CliResult<()> {
    let mut w = csv::Writer::from_writer(create(path)?);
    w.write_record(names).map_err(|e| io_failure(path, e))?;
    let data = samples.data();
    for r in 0..samples.n() {
        w.write_record((0..samples.p()).map(|c| data[(r, c)].to_string()))
            .map_err(|e| io_failure(path, e))?;
    }
    w.flush().map_err(|e| io_failure(path, e))
}

pub fn finish<W: Write>(mut w: W, path: &Path) -> CliResult<()> {
    w.flush().map_err(|e| io_failure(path, e))
}
