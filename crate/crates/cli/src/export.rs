//! Text rendering and atomic file output.

use std::fmt::Write as _;
use std::io::Write as _;
use std::path::Path;

use nalgebra::{DMatrix, Matrix2};
use serde::Serialize;

use crate::Failure;

/// 17 significant digits, enough to round-trip any `f64`.
pub fn num(x: f64) -> String {
    format!("{x:.16e}")
}

pub struct Csv {
    text: String,
    width: usize,
}

impl Csv {
    pub fn new(header: &[&str]) -> Self {
        Self {
            text: header.join(",") + "\n",
            width: header.len(),
        }
    }

    pub fn row(&mut self, fields: &[String]) {
        assert_eq!(fields.len(), self.width, "CSV row width");
        self.text.push_str(&fields.join(","));
        self.text.push('\n');
    }

    pub fn finish(self) -> String {
        self.text
    }
}

pub fn matrix_block(title: &str, m: &DMatrix<f64>) -> String {
    let mut out = format!("# {title} ({}x{})\n", m.nrows(), m.ncols());
    for r in 0..m.nrows() {
        let row: Vec<String> = (0..m.ncols()).map(|c| num(m[(r, c)])).collect();
        let _ = writeln!(out, "{}", row.join(" "));
    }
    out
}

pub fn matrix2_block(title: &str, m: &Matrix2<f64>) -> String {
    matrix_block(title, &DMatrix::from_fn(2, 2, |r, c| m[(r, c)]))
}

/// Pretty JSON with a trailing newline. Non-finite numbers become `null`.
pub fn json<T: Serialize>(value: &T) -> String {
    let mut s = serde_json::to_string_pretty(value).expect("report types serialise infallibly");
    s.push('\n');
    s
}

/// One output file, held in memory until the whole run has succeeded.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Artifact {
    pub name: String,
    pub contents: String,
}

impl Artifact {
    pub fn new(name: &str, contents: String) -> Self {
        Self {
            name: name.to_string(),
            contents,
        }
    }
}

/// Writes each artifact to a temporary file in `dir` and renames it into place.
pub fn write_all(dir: &Path, artifacts: &[Artifact]) -> Result<(), Failure> {
    std::fs::create_dir_all(dir).map_err(|e| Failure::Io(dir.to_path_buf(), e))?;
    for a in artifacts {
        let target = dir.join(&a.name);
        let io = |e: std::io::Error| Failure::Io(target.clone(), e);
        let mut tmp = tempfile::NamedTempFile::new_in(dir).map_err(io)?;
        tmp.write_all(a.contents.as_bytes()).map_err(io)?;
        tmp.as_file().sync_all().map_err(io)?;
        tmp.persist(&target).map_err(|e| io(e.error))?;
        log::debug!("wrote {}", target.display());
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn numbers_round_trip() {
        for x in [0.1, 1.0 / 3.0, std::f64::consts::PI, 1e-300, -2.5e17, 0.7388108094164552] {
            assert_eq!(num(x).parse::<f64>().unwrap(), x);
        }
        assert_eq!(num(1.0), "1.0000000000000000e0");
    }

    #[test]
    fn csv_layout() {
        let mut c = Csv::new(&["a", "b"]);
        c.row(&["1".into(), "2".into()]);
        assert_eq!(c.finish(), "a,b\n1,2\n");
    }

    #[test]
    fn writes_atomically() {
        let dir = tempfile::tempdir().unwrap();
        let out = dir.path().join("nested");
        write_all(&out, &[Artifact::new("x.txt", "hello\n".into())]).unwrap();
        assert_eq!(std::fs::read_to_string(out.join("x.txt")).unwrap(), "hello\n");
        assert_eq!(std::fs::read_dir(&out).unwrap().count(), 1);
    }
}
