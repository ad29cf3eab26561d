//! CSV tables with round-trip float formatting, written atomically.

use std::fs;
use std::path::{Path, PathBuf};

use crate::error::{Error, Result};
use crate::points::Dataset;

/// Seventeen significant digits: enough to read every `f64` back exactly.
pub fn format_float(v: f64) -> String {
    format!("{v:.16e}")
}

#[derive(Debug, Clone, PartialEq)]
pub struct Table {
    header: Vec<String>,
    rows: Vec<Vec<String>>,
}

impl Table {
    pub fn new(header: &[&str]) -> Self {
        Table {
            header: header.iter().map(|s| s.to_string()).collect(),
            rows: Vec::new(),
        }
    }

    pub fn push(&mut self, row: Vec<String>) {
        debug_assert_eq!(row.len(), self.header.len());
        self.rows.push(row);
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn from_dataset(data: &Dataset) -> Result<Self> {
        let names: Vec<&str> = data.names().iter().map(String::as_str).collect();
        let mut t = Table::new(&names);
        for i in 0..data.len() {
            t.push(data.row(i).into_iter().map(format_float).collect());
        }
        Ok(t)
    }

    pub fn to_bytes(&self) -> Result<Vec<u8>> {
        let mut w = csv::WriterBuilder::new()
            .terminator(csv::Terminator::Any(b'\n'))
            .from_writer(Vec::new());
        w.write_record(&self.header)?;
        for r in &self.rows {
            w.write_record(r)?;
        }
        w.into_inner().map_err(|e| Error::Io(e.into_error()))
    }
}

/// Writes `bytes` to `path` through a temporary sibling and a rename.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let name = path
        .file_name()
        .ok_or_else(|| Error::invalid(format!("not a file path: {}", path.display())))?;
    let tmp = path.with_file_name(format!(".{}.tmp", name.to_string_lossy()));
    fs::write(&tmp, bytes)?;
    if let Err(e) = fs::rename(&tmp, path) {
        let _ = fs::remove_file(&tmp);
        return Err(e.into());
    }
    Ok(())
}

/// A set of files destined for one output directory, written all-or-nothing.
#[derive(Debug, Default)]
pub struct OutputSet {
    files: Vec<(PathBuf, Vec<u8>)>,
}

impl OutputSet {
    pub fn new() -> Self {
        OutputSet::default()
    }

    pub fn table(&mut self, rel: impl Into<PathBuf>, table: &Table) -> Result<()> {
        self.files.push((rel.into(), table.to_bytes()?));
        Ok(())
    }

    pub fn text(&mut self, rel: impl Into<PathBuf>, text: String) {
        self.files.push((rel.into(), text.into_bytes()));
    }

    pub fn paths(&self) -> impl Iterator<Item = &Path> {
        self.files.iter().map(|(p, _)| p.as_path())
    }

    /// Writes every file under `dir`; on failure removes whatever was written.
    pub fn commit(&self, dir: &Path) -> Result<()> {
        let mut written: Vec<PathBuf> = Vec::new();
        let result = (|| {
            for (rel, bytes) in &self.files {
                let path = dir.join(rel);
                if let Some(parent) = path.parent() {
                    fs::create_dir_all(parent)?;
                }
                write_atomic(&path, bytes)?;
                written.push(path);
            }
            Ok(())
        })();
        if result.is_err() {
            for p in &written {
                let _ = fs::remove_file(p);
            }
        }
        result
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn floats_round_trip() {
        for v in [0.1, -1.0 / 3.0, 1e-300, 6.02214076e23, f64::MIN_POSITIVE, 0.0] {
            assert_eq!(format_float(v).parse::<f64>().unwrap(), v);
        }
        assert_eq!(format_float(1.0), "1.0000000000000000e0");
    }

    #[test]
    fn quoting_and_line_endings() {
        let mut t = Table::new(&["method", "value"]);
        t.push(vec!["a,b".into(), "1".into()]);
        t.push(vec!["say \"hi\"".into(), "2".into()]);
        let s = String::from_utf8(t.to_bytes().unwrap()).unwrap();
        assert_eq!(s, "method,value\n\"a,b\",1\n\"say \"\"hi\"\"\",2\n");
    }

    #[test]
    fn header_only_table() {
        let t = Table::new(&["iter", "x"]);
        assert_eq!(t.to_bytes().unwrap(), b"iter,x\n");
    }

    #[test]
    fn commit_writes_nested_files() {
        let dir = tempfile::tempdir().unwrap();
        let mut out = OutputSet::new();
        out.text("meta.txt", "seed = 1\n".into());
        out.table("traces/a.csv", &Table::new(&["x"])).unwrap();
        out.commit(dir.path()).unwrap();
        assert_eq!(fs::read_to_string(dir.path().join("traces/a.csv")).unwrap(), "x\n");
        let leftovers: Vec<_> = fs::read_dir(dir.path())
            .unwrap()
            .filter_map(|e| e.ok())
            .filter(|e| e.file_name().to_string_lossy().ends_with(".tmp"))
            .collect();
        assert!(leftovers.is_empty());
    }
}
