//! Run directories: checksummed CSV/JSON outputs and the manifest.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use qhawkes_core::kernels::AssumptionReport;

use crate::error::{CliError, CliResult};

pub const MANIFEST: &str = "manifest.json";
pub const SUMMARY: &str = "summary.json";

/// 17 significant digits, enough to round-trip any `f64`.
pub fn fmt_real(x: f64) -> String {
    if x.is_finite() {
        format!("{x:.16e}")
    } else {
        format!("{x}")
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Check {
    pub name: String,
    pub passed: bool,
    pub value: f64,
    /// Human-readable acceptance condition, e.g. `< 0.05`.
    pub condition: String,
}

impl Check {
    pub fn new(name: impl Into<String>, passed: bool, value: f64, condition: impl Into<String>) -> Self {
        Self {
            name: name.into(),
            passed,
            value,
            condition: condition.into(),
        }
    }
}

/// Deterministic run summary: no timestamps, no worker count.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub kind: String,
    pub config_digest: String,
    pub seed: u64,
    pub checks: Vec<Check>,
    pub results: serde_json::Value,
}

impl Summary {
    pub fn passed(&self) -> bool {
        self.checks.iter().all(|c| c.passed)
    }

    pub fn check(&self, name: &str) -> Option<&Check> {
        self.checks.iter().find(|c| c.name == name)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub tool_version: String,
    pub config_digest: String,
    pub config: serde_json::Value,
    pub started_unix: u64,
    pub finished_unix: u64,
    /// Output file (relative path) to SHA-256.
    pub files: BTreeMap<String, String>,
    pub assumptions: Vec<AssumptionReport>,
}

impl RunManifest {
    pub fn load(dir: &Path) -> CliResult<Self> {
        read_json(&dir.join(MANIFEST))
    }
}

pub(crate) fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> CliResult<T> {
    let text = fs::read_to_string(path)
        .map_err(|e| CliError::io(format!("cannot read {}", path.display()), e))?;
    serde_json::from_str(&text)
        .map_err(|e| CliError::Runtime(format!("{} is malformed: {e}", path.display())))
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

/// Writer for one run directory that records the checksum of every file.
#[derive(Debug)]
pub struct RunDir {
    root: PathBuf,
    files: BTreeMap<String, String>,
}

impl RunDir {
    /// Opens `root` for a fresh run. An existing non-empty directory is an
    /// error unless `force` is set; then only the files listed in its
    /// manifest (and the manifest itself) are removed.
    pub fn create(root: &Path, force: bool) -> CliResult<Self> {
        let occupied = root.exists()
            && fs::read_dir(root)
                .map_err(|e| CliError::io(format!("cannot list {}", root.display()), e))?
                .next()
                .is_some();
        if occupied {
            if !force {
                return Err(CliError::Collision(root.to_path_buf()));
            }
            let old = root.join(MANIFEST);
            if old.exists() {
                let manifest = RunManifest::load(root)?;
                for name in manifest.files.keys() {
                    let p = root.join(name);
                    if p.exists() {
                        fs::remove_file(&p)
                            .map_err(|e| CliError::io(format!("cannot remove {}", p.display()), e))?;
                    }
                }
                fs::remove_file(&old)
                    .map_err(|e| CliError::io(format!("cannot remove {}", old.display()), e))?;
            }
        }
        fs::create_dir_all(root)
            .map_err(|e| CliError::io(format!("cannot create {}", root.display()), e))?;
        Ok(Self {
            root: root.to_path_buf(),
            files: BTreeMap::new(),
        })
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    pub fn files(&self) -> &BTreeMap<String, String> {
        &self.files
    }

    pub fn write_bytes(&mut self, name: &str, bytes: &[u8]) -> CliResult<()> {
        let path = self.root.join(name);
        if let Some(parent) = path.parent() {
            fs::create_dir_all(parent)
                .map_err(|e| CliError::io(format!("cannot create {}", parent.display()), e))?;
        }
        fs::write(&path, bytes).map_err(|e| CliError::io(format!("cannot write {}", path.display()), e))?;
        self.files.insert(name.to_string(), sha256_hex(bytes));
        Ok(())
    }

    pub fn write_csv(&mut self, name: &str, table: &Table) -> CliResult<()> {
        let bytes = table.to_bytes()?;
        self.write_bytes(name, &bytes)
    }

    pub fn write_json<T: Serialize>(&mut self, name: &str, value: &T) -> CliResult<()> {
        let mut bytes = serde_json::to_vec_pretty(value)
            .map_err(|e| CliError::Runtime(format!("cannot serialize {name}: {e}")))?;
        bytes.push(b'\n');
        self.write_bytes(name, &bytes)
    }

    /// Writes the manifest, which is not itself checksummed.
    pub fn finish(self, manifest_without_files: RunManifest) -> CliResult<RunManifest> {
        let manifest = RunManifest {
            files: self.files,
            ..manifest_without_files
        };
        let path = self.root.join(MANIFEST);
        let mut bytes = serde_json::to_vec_pretty(&manifest)
            .map_err(|e| CliError::Runtime(format!("cannot serialize manifest: {e}")))?;
        bytes.push(b'\n');
        fs::write(&path, bytes).map_err(|e| CliError::io(format!("cannot write {}", path.display()), e))?;
        Ok(manifest)
    }
}

/// A CSV table built from already-formatted cells.
#[derive(Debug, Clone, Default)]
pub struct Table {
    header: Vec<String>,
    rows: Vec<Vec<String>>,
}

/// One CSV cell.
pub enum Cell {
    Real(f64),
    Int(i64),
    Text(String),
}

impl From<f64> for Cell {
    fn from(x: f64) -> Self {
        Cell::Real(x)
    }
}

impl From<usize> for Cell {
    fn from(x: usize) -> Self {
        Cell::Int(x as i64)
    }
}

impl From<i64> for Cell {
    fn from(x: i64) -> Self {
        Cell::Int(x)
    }
}

impl From<u64> for Cell {
    fn from(x: u64) -> Self {
        Cell::Text(x.to_string())
    }
}

impl From<bool> for Cell {
    fn from(x: bool) -> Self {
        Cell::Text(x.to_string())
    }
}

impl From<&str> for Cell {
    fn from(x: &str) -> Self {
        Cell::Text(x.to_string())
    }
}

impl From<String> for Cell {
    fn from(x: String) -> Self {
        Cell::Text(x)
    }
}

impl Cell {
    fn render(self) -> String {
        match self {
            Cell::Real(x) => fmt_real(x),
            Cell::Int(i) => i.to_string(),
            Cell::Text(s) => s,
        }
    }
}

#[macro_export]
macro_rules! row {
    ($($x:expr),* $(,)?) => {
        vec![$($crate::output::Cell::from($x)),*]
    };
}

impl Table {
    pub fn new(header: &[&str]) -> Self {
        Self {
            header: header.iter().map(|s| s.to_string()).collect(),
            rows: Vec::new(),
        }
    }

    pub fn push(&mut self, row: Vec<Cell>) {
        debug_assert_eq!(row.len(), self.header.len());
        self.rows.push(row.into_iter().map(Cell::render).collect());
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn to_bytes(&self) -> CliResult<Vec<u8>> {
        let mut w = csv::WriterBuilder::new()
            .terminator(csv::Terminator::CRLF)
            .from_writer(Vec::new());
        let fail = |e: csv::Error| CliError::Runtime(format!("csv: {e}"));
        w.write_record(&self.header).map_err(fail)?;
        for r in &self.rows {
            w.write_record(r).map_err(fail)?;
        }
        w.into_inner()
            .map_err(|e| CliError::Runtime(format!("csv: {e}")))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn reals_round_trip() {
        for x in [0.1, 1.0 / 3.0, -2.5e-300, 6.02e23, f64::MIN_POSITIVE] {
            assert_eq!(fmt_real(x).parse::<f64>().unwrap(), x);
        }
    }

    #[test]
    fn csv_uses_crlf_and_quotes() {
        let mut t = Table::new(&["a", "b"]);
        t.push(row!["x,y", 2usize]);
        assert_eq!(t.to_bytes().unwrap(), b"a,b\r\n\"x,y\",2\r\n");
    }

    #[test]
    fn collision_and_force() {
        let dir = tempfile::tempdir().unwrap();
        let root = dir.path().join("run");
        let mut run = RunDir::create(&root, false).unwrap();
        run.write_bytes("a.csv", b"1").unwrap();
        let m = RunManifest {
            tool_version: "t".into(),
            config_digest: "d".into(),
            config: serde_json::Value::Null,
            started_unix: 0,
            finished_unix: 0,
            files: BTreeMap::new(),
            assumptions: vec![],
        };
        let m = run.finish(m).unwrap();
        assert_eq!(m.files["a.csv"], sha256_hex(b"1"));
        fs::write(root.join("keep.txt"), "mine").unwrap();

        assert!(matches!(RunDir::create(&root, false), Err(CliError::Collision(_))));
        RunDir::create(&root, true).unwrap();
        assert!(!root.join("a.csv").exists());
        assert!(!root.join(MANIFEST).exists());
        assert!(root.join("keep.txt").exists());
    }
}
