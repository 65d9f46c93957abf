//! CSV ingestion and output formatting.

use std::fs;
use std::path::Path;

use nalgebra::DMatrix;

use crate::error::{CliError, CliResult};

/// A numeric table read from CSV.
#[derive(Debug, Clone, PartialEq)]
pub struct Table {
    pub names: Vec<String>,
    pub values: DMatrix<f64>,
}

/// Reads a rectangular CSV with a header row, one row per period. With
/// `rescale` every value is multiplied by 0.01 (percent to fraction).
pub fn ingest_csv(path: &Path, rescale: bool) -> CliResult<Table> {
    let text = fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
    parse_csv(&text, rescale).map_err(|e| e.context(&path.display().to_string()))
}

pub fn parse_csv(text: &str, rescale: bool) -> CliResult<Table> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .flexible(true)
        .trim(csv::Trim::All)
        .from_reader(text.as_bytes());
    let names: Vec<String> = reader
        .headers()
        .map_err(|e| CliError::Data(format!("header: {e}")))?
        .iter()
        .map(str::to_string)
        .collect();
    if names.is_empty() || names.iter().all(String::is_empty) {
        return Err(CliError::Data("empty file".into()));
    }
    let n = names.len();
    let mut data = Vec::new();
    let mut rows = 0;
    for record in reader.records() {
        let record = record.map_err(|e| CliError::Data(e.to_string()))?;
        let line = record.position().map_or(0, |p| p.line());
        if record.len() != n {
            return Err(CliError::Data(format!(
                "line {line}: expected {n} fields, found {}",
                record.len()
            )));
        }
        for (c, cell) in record.iter().enumerate() {
            let v: f64 = cell.parse().ok().filter(|v: &f64| v.is_finite()).ok_or_else(|| {
                CliError::Data(format!("line {line}, column {} ({}): not a number: '{cell}'", c + 1, names[c]))
            })?;
            data.push(if rescale { v * 0.01 } else { v });
        }
        rows += 1;
    }
    if rows == 0 {
        return Err(CliError::Data("no data rows".into()));
    }
    Ok(Table {
        names,
        values: DMatrix::from_row_slice(rows, n, &data),
    })
}

/// `%g`-style rendering with 6 significant digits.
pub fn sig6(x: f64) -> String {
    if !x.is_finite() {
        return if x.is_nan() { "NaN".into() } else if x > 0.0 { "inf".into() } else { "-inf".into() };
    }
    if x == 0.0 {
        return "0".into();
    }
    let sci = format!("{x:.5e}");
    let exp: i32 = sci.split('e').nth(1).and_then(|s| s.parse().ok()).unwrap_or(0);
    if (-5..6).contains(&exp) {
        let fixed = format!("{:.*}", (5 - exp).max(0) as usize, x);
        if fixed.contains('.') {
            fixed.trim_end_matches('0').trim_end_matches('.').to_string()
        } else {
            fixed
        }
    } else {
        let (m, e) = sci.split_once('e').unwrap_or((&sci, "0"));
        let m = if m.contains('.') { m.trim_end_matches('0').trim_end_matches('.') } else { m };
        format!("{m}e{e}")
    }
}

/// Writes rows of preformatted cells under a header.
pub fn write_csv(path: &Path, header: &[&str], rows: &[Vec<String>]) -> CliResult<()> {
    let mut w = csv::Writer::from_path(path).map_err(|e| CliError::Data(format!("{}: {e}", path.display())))?;
    let err = |e: csv::Error| CliError::Data(format!("{}: {e}", path.display()));
    w.write_record(header).map_err(err)?;
    for r in rows {
        w.write_record(r).map_err(err)?;
    }
    w.flush().map_err(|e| CliError::io(path, e))
}

/// Writes a matrix at full precision (shortest round-trip form).
pub fn write_matrix(path: &Path, names: &[String], m: &DMatrix<f64>) -> CliResult<()> {
    let rows: Vec<Vec<String>> = m.row_iter().map(|r| r.iter().map(|v| format!("{v:?}")).collect()).collect();
    let header: Vec<&str> = names.iter().map(String::as_str).collect();
    write_csv(path, &header, &rows)
}

pub fn write_text(path: &Path, text: &str) -> CliResult<()> {
    fs::write(path, text).map_err(|e| CliError::io(path, e))
}

pub fn write_json<T: serde::Serialize>(path: &Path, value: &T) -> CliResult<()> {
    let text = serde_json::to_string_pretty(value).map_err(|e| CliError::Data(e.to_string()))?;
    write_text(path, &(text + "\n"))
}

pub fn read_json<T: serde::de::DeserializeOwned>(path: &Path) -> CliResult<T> {
    let text = fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
    serde_json::from_str(&text).map_err(|e| CliError::Data(format!("{}: {e}", path.display())))
}

/// Weights from a file of numbers separated by commas or whitespace.
pub fn read_weights(path: &Path) -> CliResult<Vec<f64>> {
    let text = fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
    text.split(|c: char| c == ',' || c.is_whitespace())
        .filter(|s| !s.is_empty())
        .map(|s| {
            s.parse::<f64>()
                .ok()
                .filter(|v| v.is_finite())
                .ok_or_else(|| CliError::Data(format!("{}: bad weight '{s}'", path.display())))
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn reads_numeric_csv() {
        let t = parse_csv("a,b\n1,2\n3,4\n5,6\n", false).unwrap();
        assert_eq!(t.names, vec!["a", "b"]);
        assert_eq!(t.values, DMatrix::from_row_slice(3, 2, &[1.0, 2.0, 3.0, 4.0, 5.0, 6.0]));
    }

    #[test]
    fn rescales_percent() {
        let t = parse_csv("x\n1.25\n", true).unwrap();
        assert!((t.values[(0, 0)] - 0.0125).abs() < 1e-17);
    }

    #[test]
    fn reports_coordinates() {
        let e = parse_csv("a,b\n1,2\n3\n", false).unwrap_err().to_string();
        assert!(e.contains("line 3"), "{e}");
        let e = parse_csv("a,b\n1,2\n3,x\n", false).unwrap_err().to_string();
        assert!(e.contains("line 3") && e.contains("column 2"), "{e}");
        assert!(parse_csv("", false).is_err());
        assert!(parse_csv("a,b\n", false).is_err());
    }

    #[test]
    fn sig6_cases() {
        assert_eq!(sig6(0.0), "0");
        assert_eq!(sig6(1.0), "1");
        assert_eq!(sig6(0.756), "0.756");
        assert_eq!(sig6(20.797123456), "20.7971");
        assert_eq!(sig6(-0.000123456789), "-0.000123457");
        assert_eq!(sig6(1234567.0), "1.23457e6");
        assert_eq!(sig6(1.5e-9), "1.5e-9");
    }

    proptest! {
        #[test]
        fn sig6_keeps_six_digits(x in -1e8f64..1e8) {
            let back: f64 = sig6(x).parse().unwrap();
            prop_assert!((back - x).abs() <= 5e-6 * x.abs() + 1e-300);
        }
    }
}
