//! CSV tables. Floats are written in shortest round-trip form, so reading a
//! table back reproduces every double exactly.

use std::path::Path;

use crate::error::{invalid, Error, Result};
use crate::io::write_atomic;

/// In-memory CSV table with a header row.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct Table {
    pub header: Vec<String>,
    pub rows: Vec<Vec<String>>,
}

impl Table {
    pub fn new<S: Into<String>>(header: impl IntoIterator<Item = S>) -> Self {
        Self {
            header: header.into_iter().map(Into::into).collect(),
            rows: Vec::new(),
        }
    }

    pub fn push(&mut self, row: Vec<String>) {
        debug_assert_eq!(row.len(), self.header.len());
        self.rows.push(row);
    }

    pub fn to_bytes(&self) -> Result<Vec<u8>> {
        let mut w = csv::Writer::from_writer(Vec::new());
        let wrap = |e: csv::Error| Error::Invalid(format!("csv encoding failed: {e}"));
        w.write_record(&self.header).map_err(wrap)?;
        for r in &self.rows {
            w.write_record(r).map_err(wrap)?;
        }
        w.into_inner().map_err(|e| Error::Invalid(format!("csv encoding failed: {e}")))
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        write_atomic(path, &self.to_bytes()?)
    }

    pub fn read(path: &Path) -> Result<Self> {
        let mut r = csv::ReaderBuilder::new()
            .has_headers(true)
            .from_path(path)
            .map_err(|e| csv_error(path, e))?;
        let header = r.headers().map_err(|e| csv_error(path, e))?.iter().map(String::from).collect();
        let mut rows = Vec::new();
        for rec in r.records() {
            rows.push(rec.map_err(|e| csv_error(path, e))?.iter().map(String::from).collect());
        }
        Ok(Self { header, rows })
    }

    pub fn column(&self, name: &str) -> Option<usize> {
        self.header.iter().position(|h| h == name)
    }
}

fn csv_error(path: &Path, e: csv::Error) -> Error {
    let offset = e.position().map_or(0, |p| p.byte());
    Error::Format {
        path: path.to_path_buf(),
        offset,
        message: e.to_string(),
    }
}

/// Shortest representation that parses back to the same double, using
/// scientific notation outside `[1e-4, 1e15)`.
pub fn fmt(v: f64) -> String {
    let a = v.abs();
    if a == 0.0 || !a.is_finite() || (1e-4..1e15).contains(&a) {
        format!("{v}")
    } else {
        format!("{v:e}")
    }
}

fn parse_f64(path: &Path, row: usize, s: &str) -> Result<f64> {
    s.trim().parse().map_err(|_| Error::Invalid(format!("{}: row {row}: expected a number, found {s:?}", path.display())))
}

fn parse_class(path: &Path, row: usize, s: &str) -> Result<u32> {
    s.trim().parse().map_err(|_| Error::Invalid(format!("{}: row {row}: expected a class id, found {s:?}", path.display())))
}

/// Two-column `class_id,value` table with ids `0..C` in any order.
pub fn read_class_values(path: &Path) -> Result<Vec<f64>> {
    let t = Table::read(path)?;
    if t.header.len() != 2 {
        return invalid(format!("{}: expected columns class_id,value", path.display()));
    }
    let mut values: Vec<Option<f64>> = vec![None; t.rows.len()];
    for (i, row) in t.rows.iter().enumerate() {
        let c = parse_class(path, i + 1, &row[0])? as usize;
        if c >= values.len() || values[c].is_some() {
            return invalid(format!("{}: row {}: class {c} is duplicated or out of range", path.display(), i + 1));
        }
        values[c] = Some(parse_f64(path, i + 1, &row[1])?);
    }
    Ok(values.into_iter().map(|v| v.expect("every class filled")).collect())
}

pub fn class_values_table(name: &str, values: &[f64]) -> Table {
    let mut t = Table::new(["class_id", name]);
    for (c, v) in values.iter().enumerate() {
        t.push(vec![c.to_string(), fmt(*v)]);
    }
    t
}

/// Offset matrix as `class_id,<plan>,<plan>,...` with one row per class.
pub fn read_offset_table(path: &Path) -> Result<(Vec<String>, Vec<Vec<f64>>)> {
    let t = Table::read(path)?;
    if t.header.len() < 2 || t.header[0] != "class_id" {
        return invalid(format!("{}: expected header class_id,<plan names>", path.display()));
    }
    let plans: Vec<String> = t.header[1..].to_vec();
    let mut by_class: Vec<Option<Vec<f64>>> = vec![None; t.rows.len()];
    for (i, row) in t.rows.iter().enumerate() {
        let c = parse_class(path, i + 1, &row[0])? as usize;
        if c >= by_class.len() || by_class[c].is_some() {
            return invalid(format!("{}: row {}: class {c} is duplicated or out of range", path.display(), i + 1));
        }
        by_class[c] = Some(row[1..].iter().map(|s| parse_f64(path, i + 1, s)).collect::<Result<_>>()?);
    }
    let classes = by_class.len();
    // Transpose to plan-major rows.
    let cols: Vec<Vec<f64>> = by_class.into_iter().map(|r| r.expect("every class filled")).collect();
    let rows = (0..plans.len()).map(|p| (0..classes).map(|c| cols[c][p]).collect()).collect();
    Ok((plans, rows))
}

pub fn offset_table(plans: &[String], rows: &[Vec<f64>]) -> Table {
    let mut t = Table::new(std::iter::once("class_id".to_string()).chain(plans.iter().cloned()));
    let classes = rows.first().map_or(0, Vec::len);
    for c in 0..classes {
        let mut r = vec![c.to_string()];
        r.extend(rows.iter().map(|row| fmt(row[c])));
        t.push(r);
    }
    t
}

/// Headerless numeric CSV, one record per line.
pub fn read_numeric_rows(path: &Path) -> Result<Vec<Vec<f64>>> {
    let mut r = csv::ReaderBuilder::new()
        .has_headers(false)
        .from_path(path)
        .map_err(|e| csv_error(path, e))?;
    let mut out = Vec::new();
    for (i, rec) in r.records().enumerate() {
        let rec = rec.map_err(|e| csv_error(path, e))?;
        out.push(rec.iter().map(|s| parse_f64(path, i + 1, s)).collect::<Result<Vec<_>>>()?);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn floats_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("a.csv");
        let vals = [0.1, 1.0 / 3.0, -2.5e-300, 123456789.123456789, f64::NAN];
        class_values_table("value", &vals).write(&p).unwrap();
        let back = read_class_values(&p).unwrap();
        for (a, b) in vals.iter().zip(&back) {
            assert!(a.to_bits() == b.to_bits() || (a.is_nan() && b.is_nan()));
        }
    }

    #[test]
    fn fmt_is_exact_on_random_doubles() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(3);
        for _ in 0..100_000 {
            let v = f64::from_bits(rng.random::<u64>());
            if v.is_finite() {
                assert_eq!(fmt(v).parse::<f64>().unwrap().to_bits(), v.to_bits(), "{v:e}");
            }
        }
        assert_eq!(fmt(1e-16), "1e-16");
        assert_eq!(fmt(0.25), "0.25");
    }

    #[test]
    fn offsets_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("m.csv");
        let plans = vec!["Zoom Blur".to_string(), "Snow".to_string()];
        let rows = vec![vec![1.0, 2.0, 3.0], vec![0.5, 4.0, 1.5]];
        offset_table(&plans, &rows).write(&p).unwrap();
        assert_eq!(read_offset_table(&p).unwrap(), (plans, rows));
    }

    #[test]
    fn duplicate_class_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("d.csv");
        std::fs::write(&p, "class_id,value\n0,1\n0,2\n").unwrap();
        assert!(read_class_values(&p).is_err());
    }
}
