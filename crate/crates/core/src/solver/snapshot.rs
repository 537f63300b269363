//! Binary field snapshots and the JSON run manifest.
//!
//! A field file is a 64-byte header followed by little-endian `f64` values in
//! x-fastest order. Header layout: magic `CSLB`, version `u32`, dim `u32`,
//! three `u32` array extents, time `f64`, zero padding.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::config::SimConfig;
use super::run::{Reference, SampleInfo};
use crate::diagnostics::Running;
use crate::error::{Error, Result};

pub const MAGIC: [u8; 4] = *b"CSLB";
pub const SNAPSHOT_VERSION: u32 = 1;
const HEADER_LEN: usize = 64;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SnapshotHeader {
    pub dim: u32,
    /// Array extents of the stored field: cell counts for cell fields, face
    /// counts per axis for velocity components.
    pub counts: [u32; 3],
    pub time: f64,
}

impl SnapshotHeader {
    pub fn len(&self) -> usize {
        self.counts.iter().map(|&c| c as usize).product()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn to_bytes(&self) -> [u8; HEADER_LEN] {
        let mut b = [0u8; HEADER_LEN];
        b[0..4].copy_from_slice(&MAGIC);
        b[4..8].copy_from_slice(&SNAPSHOT_VERSION.to_le_bytes());
        b[8..12].copy_from_slice(&self.dim.to_le_bytes());
        for (a, c) in self.counts.iter().enumerate() {
            b[12 + 4 * a..16 + 4 * a].copy_from_slice(&c.to_le_bytes());
        }
        b[24..32].copy_from_slice(&self.time.to_le_bytes());
        b
    }

    pub fn from_bytes(b: &[u8]) -> Result<Self> {
        if b.len() < HEADER_LEN {
            return Err(Error::Snapshot("truncated header".into()));
        }
        if b[0..4] != MAGIC {
            return Err(Error::Snapshot("bad magic".into()));
        }
        let u32_at = |o: usize| u32::from_le_bytes(b[o..o + 4].try_into().unwrap());
        let version = u32_at(4);
        if version != SNAPSHOT_VERSION {
            return Err(Error::Snapshot(format!("unsupported version {version}")));
        }
        Ok(Self {
            dim: u32_at(8),
            counts: [u32_at(12), u32_at(16), u32_at(20)],
            time: f64::from_le_bytes(b[24..32].try_into().unwrap()),
        })
    }
}

fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

/// Writes one field file and returns its sha256.
pub fn write_field(path: &Path, header: &SnapshotHeader, data: &[f64]) -> Result<String> {
    if header.len() != data.len() {
        return Err(Error::Snapshot(format!(
            "header describes {} values, got {}",
            header.len(),
            data.len()
        )));
    }
    let mut bytes = Vec::with_capacity(HEADER_LEN + 8 * data.len());
    bytes.extend_from_slice(&header.to_bytes());
    for v in data {
        bytes.extend_from_slice(&v.to_le_bytes());
    }
    fs::write(path, &bytes)?;
    Ok(sha256_hex(&bytes))
}

/// Reads a field file; when `sha256` is given the file must match it.
pub fn read_field(path: &Path, sha256: Option<&str>) -> Result<(SnapshotHeader, Vec<f64>)> {
    let bytes = fs::read(path)?;
    if let Some(expected) = sha256 {
        let got = sha256_hex(&bytes);
        if got != expected {
            return Err(Error::Snapshot(format!("checksum mismatch for {}", path.display())));
        }
    }
    let header = SnapshotHeader::from_bytes(&bytes)?;
    let body = &bytes[HEADER_LEN..];
    if body.len() != 8 * header.len() {
        return Err(Error::Snapshot(format!(
            "{} holds {} bytes of data, header says {} values",
            path.display(),
            body.len(),
            header.len()
        )));
    }
    let data = body
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
        .collect();
    Ok((header, data))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FileEntry {
    /// Path relative to the run directory.
    pub path: PathBuf,
    pub sha256: String,
}

impl FileEntry {
    pub fn of(dir: &Path, rel: &Path) -> Result<Self> {
        Ok(Self {
            path: rel.to_path_buf(),
            sha256: sha256_hex(&fs::read(dir.join(rel))?),
        })
    }
}

/// Everything needed to restart from one sample.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SnapshotEntry {
    pub sample: usize,
    pub t: f64,
    pub steps: u64,
    pub running: Running,
    /// Field name (`n`, `c`, `u_x`, `u_y`, `u_z`, `p`) and file.
    pub files: Vec<(String, FileEntry)>,
}

impl SnapshotEntry {
    pub fn file(&self, field: &str) -> Result<&FileEntry> {
        self.files
            .iter()
            .find(|(name, _)| name == field)
            .map(|(_, f)| f)
            .ok_or_else(|| Error::Snapshot(format!("snapshot lacks field `{field}`")))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    /// `complete` or `failed`.
    pub status: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
    pub config: SimConfig,
    pub reference: Reference,
    pub samples: Vec<SampleInfo>,
    pub snapshots: Vec<SnapshotEntry>,
    pub diagnostics: Option<FileEntry>,
    pub checks: Option<FileEntry>,
}

pub fn read_manifest(path: &Path) -> Result<Manifest> {
    Ok(serde_json::from_str(&fs::read_to_string(path)?)?)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn header_roundtrip_and_layout() {
        let h = SnapshotHeader {
            dim: 2,
            counts: [3, 2, 1],
            time: 0.125,
        };
        let b = h.to_bytes();
        assert_eq!(&b[0..4], b"CSLB");
        assert!(b[32..].iter().all(|&x| x == 0));
        assert_eq!(SnapshotHeader::from_bytes(&b).unwrap(), h);
        let mut bad = b;
        bad[0] = b'X';
        assert!(SnapshotHeader::from_bytes(&bad).is_err());
    }

    #[test]
    fn field_roundtrip_with_checksum() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("f.bin");
        let h = SnapshotHeader {
            dim: 2,
            counts: [3, 2, 1],
            time: 1.5,
        };
        let data = [0.1, -2.0, 3.25, f64::MIN_POSITIVE, 1e300, 7.0];
        let sum = write_field(&path, &h, &data).unwrap();
        assert_eq!(std::fs::metadata(&path).unwrap().len(), 64 + 48);
        let (h2, d2) = read_field(&path, Some(&sum)).unwrap();
        assert_eq!(h2, h);
        assert_eq!(d2, data);
        assert!(read_field(&path, Some("00")).is_err());
        assert!(write_field(&path, &h, &data[..5]).is_err());
    }
}
