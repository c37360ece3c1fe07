//! On-disk response cache: one JSON file per request fingerprint.

use std::io;
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicU64, Ordering};

use serde::{Deserialize, Serialize};

use super::RequestKey;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CacheEntry {
    pub fingerprint: String,
    pub request: RequestKey,
    pub response: String,
}

pub struct ResponseCache {
    dir: PathBuf,
    tmp_counter: AtomicU64,
}

impl ResponseCache {
    pub fn open(dir: impl AsRef<Path>) -> io::Result<Self> {
        std::fs::create_dir_all(dir.as_ref())?;
        Ok(Self {
            dir: dir.as_ref().to_path_buf(),
            tmp_counter: AtomicU64::new(0),
        })
    }

    fn path_for(&self, fingerprint: &str) -> PathBuf {
        self.dir.join(format!("{fingerprint}.json"))
    }

    pub fn get(&self, fingerprint: &str) -> io::Result<Option<CacheEntry>> {
        match std::fs::read_to_string(self.path_for(fingerprint)) {
            Ok(raw) => {
                let entry: CacheEntry =
                    serde_json::from_str(&raw).map_err(|e| io::Error::new(io::ErrorKind::InvalidData, e))?;
                Ok((entry.fingerprint == fingerprint).then_some(entry))
            }
            Err(e) if e.kind() == io::ErrorKind::NotFound => Ok(None),
            Err(e) => Err(e),
        }
    }

    /// Writes through a temporary file and a rename so readers never see a partial entry.
    pub fn put(&self, entry: &CacheEntry) -> io::Result<()> {
        let n = self.tmp_counter.fetch_add(1, Ordering::Relaxed);
        let tmp = self
            .dir
            .join(format!(".{}.{}.{n}.tmp", entry.fingerprint, std::process::id()));
        let body = serde_json::to_string_pretty(entry).map_err(|e| io::Error::new(io::ErrorKind::InvalidData, e))?;
        std::fs::write(&tmp, body)?;
        std::fs::rename(&tmp, self.path_for(&entry.fingerprint))
    }

    pub fn len(&self) -> io::Result<usize> {
        Ok(std::fs::read_dir(&self.dir)?
            .filter_map(Result::ok)
            .filter(|e| e.path().extension().is_some_and(|x| x == "json"))
            .count())
    }

    pub fn is_empty(&self) -> io::Result<bool> {
        Ok(self.len()? == 0)
    }
}
