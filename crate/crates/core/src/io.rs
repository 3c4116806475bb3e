//! Plain-text persistence of matrices, vectors, labels and run metadata.
//!
//! Numeric files are comma separated with a `# rows=M cols=N` first line.
//! Values use the shortest representation that parses back to the same bits.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

pub fn format_matrix(m: &DMatrix<f64>) -> String {
    let mut out = format!("# rows={} cols={}\n", m.nrows(), m.ncols());
    for i in 0..m.nrows() {
        for j in 0..m.ncols() {
            if j > 0 {
                out.push(',');
            }
            write!(out, "{}", m[(i, j)]).expect("write to string");
        }
        out.push('\n');
    }
    out
}

pub fn parse_matrix(text: &str) -> Result<DMatrix<f64>> {
    let mut lines = text.lines();
    let header = lines
        .next()
        .ok_or_else(|| Error::Parse("empty matrix file".into()))?;
    let (rows, cols) = parse_header(header)?;
    let mut data = Vec::with_capacity(rows * cols);
    let mut seen = 0;
    for (i, line) in lines.enumerate() {
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        let before = data.len();
        for field in line.split(',') {
            let v: f64 = field
                .trim()
                .parse()
                .map_err(|_| Error::Parse(format!("line {}: bad number `{field}`", i + 2)))?;
            data.push(v);
        }
        if data.len() - before != cols {
            return Err(Error::Parse(format!(
                "line {}: expected {cols} fields, found {}",
                i + 2,
                data.len() - before
            )));
        }
        seen += 1;
    }
    if seen != rows {
        return Err(Error::Parse(format!("expected {rows} rows, found {seen}")));
    }
    Ok(DMatrix::from_row_slice(rows, cols, &data))
}

fn parse_header(line: &str) -> Result<(usize, usize)> {
    let body = line
        .strip_prefix('#')
        .ok_or_else(|| Error::Parse(format!("missing `# rows=.. cols=..` header, got `{line}`")))?;
    let mut rows = None;
    let mut cols = None;
    for tok in body.split_whitespace() {
        match tok.split_once('=') {
            Some(("rows", v)) => rows = v.parse().ok(),
            Some(("cols", v)) => cols = v.parse().ok(),
            _ => {}
        }
    }
    match (rows, cols) {
        (Some(r), Some(c)) => Ok((r, c)),
        _ => Err(Error::Parse(format!("bad header `{line}`"))),
    }
}

pub fn write_matrix(path: &Path, m: &DMatrix<f64>) -> Result<()> {
    fs::write(path, format_matrix(m))?;
    Ok(())
}

pub fn read_matrix(path: &Path) -> Result<DMatrix<f64>> {
    parse_matrix(&fs::read_to_string(path)?)
}

/// Vectors are stored as a single column.
pub fn write_vector(path: &Path, v: &DVector<f64>) -> Result<()> {
    write_matrix(path, &DMatrix::from_column_slice(v.len(), 1, v.as_slice()))
}

pub fn read_vector(path: &Path) -> Result<DVector<f64>> {
    let m = read_matrix(path)?;
    if m.ncols() != 1 {
        return Err(Error::Parse(format!(
            "{}: expected one column, found {}",
            path.display(),
            m.ncols()
        )));
    }
    Ok(DVector::from_column_slice(m.as_slice()))
}

/// One label per line.
pub fn write_labels(path: &Path, labels: &[String]) -> Result<()> {
    let mut out = String::new();
    for l in labels {
        out.push_str(l);
        out.push('\n');
    }
    fs::write(path, out)?;
    Ok(())
}

pub fn read_labels(path: &Path) -> Result<Vec<String>> {
    Ok(fs::read_to_string(path)?
        .lines()
        .map(str::trim)
        .filter(|l| !l.is_empty())
        .map(String::from)
        .collect())
}

/// `key=value` lines; `#` starts a comment.
pub fn parse_key_values(text: &str) -> Result<BTreeMap<String, String>> {
    let mut out = BTreeMap::new();
    for (i, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let (k, v) = line
            .split_once('=')
            .ok_or_else(|| Error::Parse(format!("line {}: expected key=value", i + 1)))?;
        out.insert(k.trim().to_string(), v.trim().to_string());
    }
    Ok(out)
}

pub fn format_key_values(map: &BTreeMap<String, String>) -> String {
    map.iter().map(|(k, v)| format!("{k}={v}\n")).collect()
}

pub fn write_key_values(path: &Path, map: &BTreeMap<String, String>) -> Result<()> {
    fs::write(path, format_key_values(map))?;
    Ok(())
}

pub fn read_key_values(path: &Path) -> Result<BTreeMap<String, String>> {
    parse_key_values(&fs::read_to_string(path)?)
}

/// `prefix` with `suffix` appended to its file name, e.g. `out/run` + `_A.csv`.
pub fn with_suffix(prefix: &Path, suffix: &str) -> PathBuf {
    let mut s = prefix.as_os_str().to_owned();
    s.push(suffix);
    PathBuf::from(s)
}

pub fn lookup<'a>(map: &'a BTreeMap<String, String>, key: &str) -> Result<&'a str> {
    map.get(key)
        .map(String::as_str)
        .ok_or_else(|| Error::Parse(format!("missing key `{key}`")))
}

pub fn lookup_parsed<T: std::str::FromStr>(map: &BTreeMap<String, String>, key: &str) -> Result<T> {
    let raw = lookup(map, key)?;
    raw.parse()
        .map_err(|_| Error::Parse(format!("key `{key}`: cannot parse `{raw}`")))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn matrix_round_trip_file() {
        let dir = tempfile::tempdir().unwrap();
        let m = DMatrix::from_row_slice(2, 3, &[1.0, -0.1, 3e-300, f64::MAX, 0.0, -7.25]);
        let p = dir.path().join("m.csv");
        write_matrix(&p, &m).unwrap();
        assert_eq!(read_matrix(&p).unwrap(), m);
        let v = DVector::from_vec(vec![0.1, 0.2, 0.3]);
        let p = dir.path().join("v.csv");
        write_vector(&p, &v).unwrap();
        assert_eq!(read_vector(&p).unwrap(), v);
    }

    #[test]
    fn header_is_checked() {
        assert!(parse_matrix("1,2\n").is_err());
        assert!(parse_matrix("# rows=2 cols=2\n1,2\n").is_err());
        assert!(parse_matrix("# rows=1 cols=2\n1,2,3\n").is_err());
        assert_eq!(parse_matrix("# rows=0 cols=0\n").unwrap().nrows(), 0);
    }

    #[test]
    fn key_values() {
        let map = parse_key_values("# c\na = 1\nb=x # tail\n\n").unwrap();
        assert_eq!(lookup(&map, "a").unwrap(), "1");
        assert_eq!(lookup(&map, "b").unwrap(), "x");
        assert_eq!(lookup_parsed::<u32>(&map, "a").unwrap(), 1);
        assert!(lookup(&map, "c").is_err());
        assert!(parse_key_values("novalue\n").is_err());
        assert_eq!(parse_key_values(&format_key_values(&map)).unwrap(), map);
    }

    #[test]
    fn suffix_join() {
        assert_eq!(with_suffix(Path::new("out/run"), "_A.csv"), PathBuf::from("out/run_A.csv"));
    }

    proptest! {
        #[test]
        fn text_round_trip_is_bitwise(vals in proptest::collection::vec(any::<f64>().prop_filter("finite", |v| v.is_finite()), 1..40)) {
            let n = vals.len();
            let m = DMatrix::from_row_slice(1, n, &vals);
            let back = parse_matrix(&format_matrix(&m)).unwrap();
            for j in 0..n {
                prop_assert_eq!(back[(0, j)].to_bits(), m[(0, j)].to_bits());
            }
        }
    }
}
