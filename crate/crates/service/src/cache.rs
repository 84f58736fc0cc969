//! Persistent payload cache keyed by an endpoint-shaped key and the version
//! of the source data it was derived from.
//!
//! Each key lives in one file `<sha256(key)>.entry`: a JSON header line
//! followed by the raw payload. A lookup whose version differs from the
//! stored one is a miss, and the next write replaces the stale entry.

use std::io::{self, Write};
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicU64, Ordering};

use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

/// Writes through a temporary file in the target directory and renames it
/// into place, so readers see either the old or the new content.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> io::Result<()> {
    let dir = path.parent().filter(|p| !p.as_os_str().is_empty()).unwrap_or(Path::new("."));
    std::fs::create_dir_all(dir)?;
    let mut tmp = tempfile::NamedTempFile::new_in(dir)?;
    tmp.write_all(bytes)?;
    tmp.as_file().sync_all()?;
    tmp.persist(path).map_err(|e| e.error)?;
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EntryMeta {
    pub key: String,
    pub version: String,
    pub created: DateTime<Utc>,
}

#[derive(Debug)]
pub struct DiskCache {
    dir: PathBuf,
    computations: AtomicU64,
    hits: AtomicU64,
}

fn file_name(key: &str) -> String {
    let digest = Sha256::digest(key.as_bytes());
    let hex: String = digest.iter().map(|b| format!("{b:02x}")).collect();
    format!("{hex}.entry")
}

impl DiskCache {
    pub fn open(dir: &Path) -> io::Result<Self> {
        std::fs::create_dir_all(dir)?;
        Ok(DiskCache { dir: dir.to_path_buf(), computations: AtomicU64::new(0), hits: AtomicU64::new(0) })
    }

    fn path(&self, key: &str) -> PathBuf {
        self.dir.join(file_name(key))
    }

    fn read_entry(&self, key: &str) -> Option<(EntryMeta, Vec<u8>)> {
        let bytes = std::fs::read(self.path(key)).ok()?;
        let nl = bytes.iter().position(|&b| b == b'\n')?;
        let meta: EntryMeta = serde_json::from_slice(&bytes[..nl]).ok()?;
        // A hash collision would show up as a different key.
        (meta.key == key).then(|| (meta, bytes[nl + 1..].to_vec()))
    }

    /// Stored payload for `key` if it was derived from `version`.
    pub fn get(&self, key: &str, version: &str) -> Option<Vec<u8>> {
        self.read_entry(key)
            .filter(|(m, _)| m.version == version)
            .map(|(_, p)| p)
    }

    pub fn meta(&self, key: &str) -> Option<EntryMeta> {
        self.read_entry(key).map(|(m, _)| m)
    }

    pub fn put(&self, key: &str, version: &str, payload: &[u8]) -> io::Result<()> {
        let meta = EntryMeta { key: key.to_string(), version: version.to_string(), created: Utc::now() };
        let mut bytes = serde_json::to_vec(&meta).map_err(io::Error::other)?;
        bytes.push(b'\n');
        bytes.extend_from_slice(payload);
        write_atomic(&self.path(key), &bytes)
    }

    /// Returns the cached payload, or computes, stores and returns it. The
    /// flag is true on a hit.
    pub fn get_or_compute<E>(
        &self,
        key: &str,
        version: &str,
        compute: impl FnOnce() -> Result<Vec<u8>, E>,
    ) -> Result<(Vec<u8>, bool), E> {
        self.get_or_compute_if(key, version, compute, || true)
    }

    /// Like [`DiskCache::get_or_compute`], but the fresh payload is only
    /// stored if `still_current()` holds afterwards, so a payload computed
    /// across a source update is never filed under the old version.
    pub fn get_or_compute_if<E>(
        &self,
        key: &str,
        version: &str,
        compute: impl FnOnce() -> Result<Vec<u8>, E>,
        still_current: impl FnOnce() -> bool,
    ) -> Result<(Vec<u8>, bool), E> {
        if let Some(p) = self.get(key, version) {
            self.hits.fetch_add(1, Ordering::Relaxed);
            return Ok((p, true));
        }
        let payload = compute()?;
        self.computations.fetch_add(1, Ordering::Relaxed);
        if !still_current() {
            return Ok((payload, false));
        }
        if let Err(e) = self.put(key, version, &payload) {
            tracing::warn!(key, error = %e, "cache write failed");
        }
        Ok((payload, false))
    }

    /// Payloads computed by [`DiskCache::get_or_compute`] since opening.
    pub fn computations(&self) -> u64 {
        self.computations.load(Ordering::Relaxed)
    }

    pub fn hits(&self) -> u64 {
        self.hits.load(Ordering::Relaxed)
    }
}
