//! Matrix interchange: headerless CSV (one row per line) or JSON
//! `{"S": n, "rows": [[...], ...]}`. Values are written with the shortest
//! round-trip representation, so reading back yields identical entries.

use std::io::{Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{validate, TransitionMatrix};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MatrixFormat {
    Csv,
    Json,
}

impl MatrixFormat {
    /// Picks the format from a file extension, defaulting to CSV.
    pub fn from_path(path: &Path) -> Self {
        match path.extension().and_then(|e| e.to_str()) {
            Some(e) if e.eq_ignore_ascii_case("json") => MatrixFormat::Json,
            _ => MatrixFormat::Csv,
        }
    }
}

#[derive(Serialize, Deserialize)]
struct MatrixDoc {
    #[serde(rename = "S")]
    states: usize,
    rows: Vec<Vec<f64>>,
}

pub fn write_matrix<W: Write>(
    t: &TransitionMatrix,
    format: MatrixFormat,
    mut out: W,
) -> Result<()> {
    match format {
        MatrixFormat::Csv => {
            let mut w = csv::WriterBuilder::new()
                .has_headers(false)
                .from_writer(out);
            for row in t.rows() {
                w.write_record(row.iter().map(|v| v.to_string()))
                    .map_err(csv_err)?;
            }
            w.flush()?;
        }
        MatrixFormat::Json => {
            let doc = MatrixDoc {
                states: t.states(),
                rows: t.to_rows(),
            };
            serde_json::to_writer(&mut out, &doc).map_err(|e| Error::Parse(e.to_string()))?;
            writeln!(out)?;
        }
    }
    Ok(())
}

pub fn read_matrix<R: Read>(format: MatrixFormat, input: R) -> Result<TransitionMatrix> {
    let rows = match format {
        MatrixFormat::Csv => {
            let mut r = csv::ReaderBuilder::new()
                .has_headers(false)
                .flexible(true)
                .trim(csv::Trim::All)
                .from_reader(input);
            let mut rows = Vec::new();
            for record in r.records() {
                let record = record.map_err(csv_err)?;
                let row = record
                    .iter()
                    .map(|f| {
                        f.parse::<f64>()
                            .map_err(|_| Error::Parse(format!("bad matrix entry {f:?}")))
                    })
                    .collect::<Result<Vec<_>>>()?;
                rows.push(row);
            }
            rows
        }
        MatrixFormat::Json => {
            let doc: MatrixDoc =
                serde_json::from_reader(input).map_err(|e| Error::Parse(e.to_string()))?;
            if doc.states != doc.rows.len() {
                return Err(Error::DimensionMismatch {
                    expected: doc.states,
                    got: doc.rows.len(),
                });
            }
            doc.rows
        }
    };
    validate(&rows)
}

pub fn load_matrix(path: &Path) -> Result<TransitionMatrix> {
    let file = std::fs::File::open(path)?;
    read_matrix(MatrixFormat::from_path(path), std::io::BufReader::new(file))
}

pub fn save_matrix(t: &TransitionMatrix, path: &Path) -> Result<()> {
    let file = std::fs::File::create(path)?;
    write_matrix(
        t,
        MatrixFormat::from_path(path),
        std::io::BufWriter::new(file),
    )
}

fn csv_err(e: csv::Error) -> Error {
    Error::Parse(e.to_string())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::markov::{generate, ChainFamily};

    #[test]
    fn round_trip_is_exact() {
        let t = generate(ChainFamily::UniformSpectrum { gamma_star: 0.2 }, 12, 3).unwrap();
        for format in [MatrixFormat::Csv, MatrixFormat::Json] {
            let mut buf = Vec::new();
            write_matrix(&t, format, &mut buf).unwrap();
            let back = read_matrix(format, buf.as_slice()).unwrap();
            assert_eq!(back, t);
        }
    }

    #[test]
    fn reads_plain_csv() {
        let t = read_matrix(MatrixFormat::Csv, "0.5, 0.5\n1,0\n".as_bytes()).unwrap();
        assert_eq!(t.get(1, 0), 1.0);
        assert!(matches!(
            read_matrix(MatrixFormat::Csv, "0.5,0.5\n1\n".as_bytes()),
            Err(Error::NotSquare { .. })
        ));
    }
}
