//! The long CSV format shared by every command: `value,class,score,stderr,error`.

use std::io::{Read, Write};

use serde::{Deserialize, Serialize};

use crate::error::CliError;

pub const COLUMNS: [&str; 4] = ["value", "class", "score", "stderr"];

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Row {
    pub value: f64,
    pub class: String,
    pub score: Option<f64>,
    pub stderr: Option<f64>,
    #[serde(default)]
    pub error: Option<String>,
}

impl Row {
    pub fn ok(value: f64, class: impl Into<String>, score: f64, stderr: f64) -> Self {
        Self { value, class: class.into(), score: Some(score), stderr: Some(stderr), error: None }
    }

    pub fn failed(value: f64, class: impl Into<String>, error: impl ToString) -> Self {
        Self { value, class: class.into(), score: None, stderr: None, error: Some(error.to_string()) }
    }
}

pub fn write_rows(out: &mut dyn Write, rows: &[Row]) -> Result<(), CliError> {
    let mut w = csv::WriterBuilder::new().has_headers(false).from_writer(out);
    w.write_record(["value", "class", "score", "stderr", "error"]).map_err(csv_err)?;
    for r in rows {
        w.serialize(r).map_err(csv_err)?;
    }
    w.flush()?;
    Ok(())
}

/// Reads a long CSV; the four data columns must be present, `error` may not be.
pub fn read_rows(input: impl Read, source: &str) -> Result<Vec<Row>, CliError> {
    let mut r = csv::Reader::from_reader(input);
    let headers = r.headers().map_err(|e| CliError::Input(format!("{source}: {e}")))?.clone();
    let missing: Vec<_> = COLUMNS.iter().filter(|c| !headers.iter().any(|h| h == **c)).collect();
    if !missing.is_empty() {
        let names: Vec<&str> = missing.iter().map(|c| **c).collect();
        return Err(CliError::Input(format!("{source}: missing column(s) {}", names.join(", "))));
    }
    r.deserialize()
        .enumerate()
        .map(|(i, row)| row.map_err(|e| CliError::Input(format!("{source}: row {}: {e}", i + 1))))
        .collect()
}

fn csv_err(e: csv::Error) -> CliError {
    CliError::Io(e.to_string())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rows_round_trip() {
        let rows = vec![Row::ok(0.25, "parallel", 0.6, 0.0), Row::failed(0.5, "general", "solver failure: a, b")];
        let mut buf = Vec::new();
        write_rows(&mut buf, &rows).unwrap();
        assert_eq!(read_rows(buf.as_slice(), "t").unwrap(), rows);
    }

    #[test]
    fn missing_columns_are_named() {
        let err = read_rows("value,class\n1,a\n".as_bytes(), "t").unwrap_err();
        assert!(err.to_string().contains("score, stderr"), "{err}");
    }
}
