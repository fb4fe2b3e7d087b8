//! File-backed response cache: one JSON document per key plus an index.

use std::collections::BTreeMap;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::Mutex;

use serde::{Deserialize, Serialize};

use super::{CacheKey, ChatRequest, ChatResponse};

const INDEX_FILE: &str = "index.json";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CacheEntry {
    pub key: CacheKey,
    pub request: ChatRequest,
    pub response: ChatResponse,
    pub recorded_at: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct IndexEntry {
    pub model: String,
    pub recorded_at: String,
}

#[derive(Debug)]
pub struct CacheStore {
    dir: PathBuf,
    index_lock: Mutex<()>,
    tmp_counter: AtomicU64,
}

impl CacheStore {
    pub fn open(dir: impl AsRef<Path>, create: bool) -> std::io::Result<Self> {
        let dir = dir.as_ref().to_path_buf();
        if create {
            fs::create_dir_all(&dir)?;
        } else if !dir.is_dir() {
            return Err(std::io::Error::new(
                std::io::ErrorKind::NotFound,
                format!("cache directory {} does not exist", dir.display()),
            ));
        }
        Ok(CacheStore {
            dir,
            index_lock: Mutex::new(()),
            tmp_counter: AtomicU64::new(0),
        })
    }

    pub fn dir(&self) -> &Path {
        &self.dir
    }

    pub fn path_for(&self, key: &CacheKey) -> PathBuf {
        self.dir.join(format!("{}.json", key.0))
    }

    pub fn get(&self, key: &CacheKey) -> std::io::Result<Option<CacheEntry>> {
        let path = self.path_for(key);
        let bytes = match fs::read(&path) {
            Ok(b) => b,
            Err(e) if e.kind() == std::io::ErrorKind::NotFound => return Ok(None),
            Err(e) => return Err(e),
        };
        let entry: CacheEntry = serde_json::from_slice(&bytes).map_err(|e| {
            std::io::Error::new(
                std::io::ErrorKind::InvalidData,
                format!("{}: {e}", path.display()),
            )
        })?;
        Ok(Some(entry))
    }

    pub fn contains(&self, key: &CacheKey) -> bool {
        self.path_for(key).is_file()
    }

    pub fn put(&self, entry: &CacheEntry) -> std::io::Result<()> {
        let mut body = serde_json::to_vec_pretty(entry).expect("cache entry serializes");
        body.push(b'\n');
        self.write_atomic(&self.path_for(&entry.key), &body)?;

        let _guard = self.index_lock.lock().unwrap_or_else(|e| e.into_inner());
        let mut index = self.index()?;
        index.insert(
            entry.key.0.clone(),
            IndexEntry {
                model: entry.request.decoding.model.clone(),
                recorded_at: entry.recorded_at.clone(),
            },
        );
        let mut body = serde_json::to_vec_pretty(&index).expect("index serializes");
        body.push(b'\n');
        self.write_atomic(&self.dir.join(INDEX_FILE), &body)
    }

    pub fn index(&self) -> std::io::Result<BTreeMap<String, IndexEntry>> {
        match fs::read(self.dir.join(INDEX_FILE)) {
            Ok(bytes) => serde_json::from_slice(&bytes)
                .map_err(|e| std::io::Error::new(std::io::ErrorKind::InvalidData, e)),
            Err(e) if e.kind() == std::io::ErrorKind::NotFound => Ok(BTreeMap::new()),
            Err(e) => Err(e),
        }
    }

    fn write_atomic(&self, target: &Path, bytes: &[u8]) -> std::io::Result<()> {
        let n = self.tmp_counter.fetch_add(1, Ordering::Relaxed);
        let tmp = self.dir.join(format!(".tmp-{}-{}", std::process::id(), n));
        {
            let mut f = fs::File::create(&tmp)?;
            f.write_all(bytes)?;
            f.sync_all()?;
        }
        fs::rename(&tmp, target)
    }
}
