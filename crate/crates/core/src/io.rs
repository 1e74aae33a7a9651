//! Serialization: diagnostics CSV, binary field snapshots, result tables and
//! the run manifest.

use std::fs;
use std::io::{BufRead, BufReader, Read, Write};
use std::path::{Path, PathBuf};
use std::sync::Arc;
use std::time::{SystemTime, UNIX_EPOCH};

use ndarray::Array3;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::diagnostics::DiagnosticsRecord;
use crate::error::{Result, ZkError};
use crate::geometry::{BcTag, Field, Grid};

pub const DIAGNOSTICS_HEADER: &str = "# zk-diagnostics-csv v1";
pub const SNAPSHOT_MAGIC: &[u8; 4] = b"ZKF1";
pub const MANIFEST_FORMAT: &str = "zk-manifest v1";

fn csv_err(path: &Path, e: impl std::fmt::Display) -> ZkError {
    ZkError::Csv {
        path: path.to_path_buf(),
        message: e.to_string(),
    }
}

/// 17 significant digits, which round-trips every finite double.
pub fn format_real(v: f64) -> String {
    format!("{v:.16e}")
}

/// Writes a versioned CSV table: the `header` comment line, the column
/// names, then one row per entry (`None` is an empty cell).
pub fn write_table(path: &Path, header: &str, columns: &[&str], rows: &[Vec<Option<f64>>]) -> Result<()> {
    let file = fs::File::create(path).map_err(|e| ZkError::io(path, e))?;
    let mut out = std::io::BufWriter::new(file);
    writeln!(out, "{header}").map_err(|e| ZkError::io(path, e))?;
    {
        let mut w = csv::Writer::from_writer(&mut out);
        w.write_record(columns).map_err(|e| csv_err(path, e))?;
        for row in rows {
            if row.len() != columns.len() {
                return Err(csv_err(
                    path,
                    format!("row has {} cells, expected {}", row.len(), columns.len()),
                ));
            }
            w.write_record(row.iter().map(|v| v.map(format_real).unwrap_or_default()))
                .map_err(|e| csv_err(path, e))?;
        }
        w.flush().map_err(|e| ZkError::io(path, e))?;
    }
    out.flush().map_err(|e| ZkError::io(path, e))
}

/// Reads a table written by [`write_table`], checking the header line and
/// the column names.
pub fn read_table(path: &Path, header: &str, columns: &[&str]) -> Result<Vec<Vec<Option<f64>>>> {
    let file = fs::File::open(path).map_err(|e| ZkError::io(path, e))?;
    let mut reader = BufReader::new(file);
    let mut first = String::new();
    reader.read_line(&mut first).map_err(|e| ZkError::io(path, e))?;
    if first.trim_end() != header {
        return Err(csv_err(
            path,
            format!("expected header line {header:?}, found {:?}", first.trim_end()),
        ));
    }
    let mut r = csv::Reader::from_reader(reader);
    let names = r.headers().map_err(|e| csv_err(path, e))?.clone();
    if names.iter().ne(columns.iter().copied()) {
        return Err(csv_err(path, format!("unexpected columns {names:?}")));
    }
    let mut rows = Vec::new();
    for rec in r.records() {
        let rec = rec.map_err(|e| csv_err(path, e))?;
        let row = rec
            .iter()
            .map(|cell| {
                if cell.is_empty() {
                    Ok(None)
                } else {
                    cell.parse::<f64>()
                        .map(Some)
                        .map_err(|e| csv_err(path, format!("bad number {cell:?}: {e}")))
                }
            })
            .collect::<Result<Vec<_>>>()?;
        rows.push(row);
    }
    Ok(rows)
}

pub fn write_diagnostics_csv(path: &Path, records: &[DiagnosticsRecord]) -> Result<()> {
    let rows: Vec<Vec<Option<f64>>> = records.iter().map(|r| r.values().to_vec()).collect();
    write_table(path, DIAGNOSTICS_HEADER, &DiagnosticsRecord::COLUMNS, &rows)
}

pub fn read_diagnostics_csv(path: &Path) -> Result<Vec<DiagnosticsRecord>> {
    read_table(path, DIAGNOSTICS_HEADER, &DiagnosticsRecord::COLUMNS)?
        .iter()
        .map(|row| DiagnosticsRecord::from_values(row).map_err(|e| csv_err(path, e)))
        .collect()
}

/// `"ZKF1"`, the array shape as three little-endian `u32`, then the values
/// as little-endian `f64` in row-major order.
pub fn encode_snapshot(u: &Field) -> Result<Vec<u8>> {
    if !u.is_finite() {
        return Err(ZkError::Snapshot("field has non-finite values".into()));
    }
    let (a, b, c) = u.values.dim();
    let mut buf = Vec::with_capacity(16 + 8 * a * b * c);
    buf.extend_from_slice(SNAPSHOT_MAGIC);
    for d in [a, b, c] {
        buf.extend_from_slice(&(d as u32).to_le_bytes());
    }
    for v in u.values.iter() {
        buf.extend_from_slice(&v.to_le_bytes());
    }
    Ok(buf)
}

/// Decodes a snapshot for `grid`, validating magic, shape and finiteness.
pub fn decode_snapshot(bytes: &[u8], grid: &Arc<Grid>, tag: BcTag) -> Result<Field> {
    if bytes.len() < 16 || &bytes[..4] != SNAPSHOT_MAGIC {
        return Err(ZkError::Snapshot("bad magic, not a ZKF1 snapshot".into()));
    }
    let dim = |k: usize| u32::from_le_bytes(bytes[4 + 4 * k..8 + 4 * k].try_into().unwrap()) as usize;
    let shape = (dim(0), dim(1), dim(2));
    if shape != grid.shape() {
        return Err(ZkError::Snapshot(format!(
            "size mismatch: snapshot shape {shape:?}, grid expects {:?}",
            grid.shape()
        )));
    }
    let count = shape.0 * shape.1 * shape.2;
    if bytes.len() != 16 + 8 * count {
        return Err(ZkError::Snapshot(format!(
            "size mismatch: {} payload bytes for {count} values",
            bytes.len() - 16
        )));
    }
    let values: Vec<f64> = bytes[16..]
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
        .collect();
    if let Some(i) = values.iter().position(|v| !v.is_finite()) {
        return Err(ZkError::Snapshot(format!("non-finite value at index {i}")));
    }
    let values = Array3::from_shape_vec(shape, values).map_err(|e| ZkError::Snapshot(e.to_string()))?;
    Field::from_values(grid, values, tag)
}

pub fn write_snapshot(path: &Path, u: &Field) -> Result<()> {
    fs::write(path, encode_snapshot(u)?).map_err(|e| ZkError::io(path, e))
}

pub fn read_snapshot(path: &Path, grid: &Arc<Grid>, tag: BcTag) -> Result<Field> {
    let mut bytes = Vec::new();
    fs::File::open(path)
        .and_then(|mut f| f.read_to_end(&mut bytes))
        .map_err(|e| ZkError::io(path, e))?;
    decode_snapshot(&bytes, grid, tag)
}

pub fn sha256_file(path: &Path) -> Result<String> {
    let bytes = fs::read(path).map_err(|e| ZkError::io(path, e))?;
    Ok(hex::encode(Sha256::digest(&bytes)))
}

/// Where a run puts its files.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct OutputLayout {
    pub root: PathBuf,
}

impl OutputLayout {
    pub fn create(root: impl Into<PathBuf>) -> Result<Self> {
        let root = root.into();
        fs::create_dir_all(&root).map_err(|e| ZkError::io(&root, e))?;
        Ok(OutputLayout { root })
    }

    pub fn diagnostics_csv(&self) -> PathBuf {
        self.root.join("diagnostics.csv")
    }

    pub fn manifest(&self) -> PathBuf {
        self.root.join("manifest.json")
    }

    /// `snapshots/u_<index>.zkf`, index zero-padded to five digits.
    pub fn snapshot(&self, index: usize) -> PathBuf {
        self.root.join("snapshots").join(format!("u_{index:05}.zkf"))
    }

    pub fn file(&self, name: &str) -> PathBuf {
        self.root.join(name)
    }

    pub fn subdir(&self, name: &str) -> Result<OutputLayout> {
        OutputLayout::create(self.root.join(name))
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct FileEntry {
    /// Relative to the manifest's directory.
    pub path: String,
    pub sha256: String,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub format: String,
    pub command: String,
    pub zk_core_version: String,
    /// Seconds since the Unix epoch; the only field that varies between
    /// identical runs.
    pub created_unix: u64,
    pub config: serde_json::Value,
    pub status: String,
    pub files: Vec<FileEntry>,
}

impl Manifest {
    /// Writes the manifest with an empty file list; call before any data file.
    pub fn begin(layout: &OutputLayout, command: &str, config: &impl Serialize) -> Result<Manifest> {
        let m = Manifest {
            format: MANIFEST_FORMAT.into(),
            command: command.into(),
            zk_core_version: env!("CARGO_PKG_VERSION").into(),
            created_unix: SystemTime::now().duration_since(UNIX_EPOCH).map_or(0, |d| d.as_secs()),
            config: serde_json::to_value(config).map_err(|e| ZkError::InvalidArgument(e.to_string()))?,
            status: "running".into(),
            files: Vec::new(),
        };
        m.write(layout)?;
        Ok(m)
    }

    fn write(&self, layout: &OutputLayout) -> Result<()> {
        let path = layout.manifest();
        let text = serde_json::to_string_pretty(self).map_err(|e| ZkError::InvalidArgument(e.to_string()))?;
        fs::write(&path, text + "\n").map_err(|e| ZkError::io(&path, e))
    }

    /// Records checksums of `files` (paths relative to the layout root) and
    /// the final status.
    pub fn finish(&mut self, layout: &OutputLayout, files: &[PathBuf], status: &str) -> Result<()> {
        self.files = files
            .iter()
            .map(|p| {
                let rel = p.strip_prefix(&layout.root).unwrap_or(p);
                Ok(FileEntry {
                    path: rel.to_string_lossy().replace('\\', "/"),
                    sha256: sha256_file(p)?,
                })
            })
            .collect::<Result<_>>()?;
        self.status = status.into();
        self.write(layout)
    }

    pub fn read(path: &Path) -> Result<Manifest> {
        let text = fs::read_to_string(path).map_err(|e| ZkError::io(path, e))?;
        serde_json::from_str(&text).map_err(|e| ZkError::InvalidArgument(format!("{}: {e}", path.display())))
    }

    /// Files whose current hash differs from the recorded one.
    pub fn mismatches(&self, root: &Path) -> Result<Vec<String>> {
        let mut bad = Vec::new();
        for f in &self.files {
            if sha256_file(&root.join(&f.path))? != f.sha256 {
                bad.push(f.path.clone());
            }
        }
        Ok(bad)
    }
}
