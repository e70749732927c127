use std::collections::HashMap;
use std::fs;
use std::io;
use std::path::{Path, PathBuf};
use std::sync::Mutex;

use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};

use super::LlmError;
use crate::json::{to_canonical_string, write_atomic_noclobber};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CacheEntry {
    pub key: String,
    pub response: String,
    pub created_at: DateTime<Utc>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct CacheStats {
    pub entries: u64,
    pub bytes: u64,
}

/// Response cache. The directory form stores one `<key>.json` file per
/// entry and never rewrites an existing entry.
#[derive(Debug)]
pub enum ResponseCache {
    Disabled,
    Memory(Mutex<HashMap<String, String>>),
    Directory(PathBuf),
}

impl ResponseCache {
    pub fn disabled() -> Self {
        ResponseCache::Disabled
    }

    pub fn memory() -> Self {
        ResponseCache::Memory(Mutex::new(HashMap::new()))
    }

    pub fn directory(path: impl Into<PathBuf>) -> Result<Self, LlmError> {
        let path = path.into();
        fs::create_dir_all(&path).map_err(|source| LlmError::Cache {
            path: path.display().to_string(),
            source,
        })?;
        Ok(ResponseCache::Directory(path))
    }

    pub fn get(&self, key: &str) -> Result<Option<String>, LlmError> {
        match self {
            ResponseCache::Disabled => Ok(None),
            ResponseCache::Memory(m) => Ok(m
                .lock()
                .unwrap_or_else(|e| e.into_inner())
                .get(key)
                .cloned()),
            ResponseCache::Directory(dir) => {
                let path = dir.join(format!("{key}.json"));
                match fs::read_to_string(&path) {
                    Ok(text) => {
                        let entry: CacheEntry =
                            serde_json::from_str(&text).map_err(|e| LlmError::Cache {
                                path: path.display().to_string(),
                                source: io::Error::new(io::ErrorKind::InvalidData, e),
                            })?;
                        Ok(Some(entry.response))
                    }
                    Err(e) if e.kind() == io::ErrorKind::NotFound => Ok(None),
                    Err(source) => Err(LlmError::Cache {
                        path: path.display().to_string(),
                        source,
                    }),
                }
            }
        }
    }

    pub fn put(&self, key: &str, response: &str) -> Result<(), LlmError> {
        match self {
            ResponseCache::Disabled => Ok(()),
            ResponseCache::Memory(m) => {
                m.lock()
                    .unwrap_or_else(|e| e.into_inner())
                    .entry(key.to_string())
                    .or_insert_with(|| response.to_string());
                Ok(())
            }
            ResponseCache::Directory(dir) => {
                let path = dir.join(format!("{key}.json"));
                let entry = CacheEntry {
                    key: key.to_string(),
                    response: response.to_string(),
                    created_at: Utc::now(),
                };
                let text = to_canonical_string(&entry).expect("cache entry serializes");
                write_atomic_noclobber(&path, text.as_bytes()).map_err(|source| {
                    LlmError::Cache {
                        path: path.display().to_string(),
                        source,
                    }
                })?;
                Ok(())
            }
        }
    }

    /// Entry count and total size of a cache directory.
    pub fn stats(dir: &Path) -> io::Result<CacheStats> {
        let mut stats = CacheStats {
            entries: 0,
            bytes: 0,
        };
        if !dir.exists() {
            return Ok(stats);
        }
        for entry in fs::read_dir(dir)? {
            let entry = entry?;
            if is_entry_file(&entry.path()) {
                stats.entries += 1;
                stats.bytes += entry.metadata()?.len();
            }
        }
        Ok(stats)
    }

    /// Remove every entry file from a cache directory; returns the count.
    pub fn clear(dir: &Path) -> io::Result<u64> {
        let mut removed = 0;
        if !dir.exists() {
            return Ok(0);
        }
        for entry in fs::read_dir(dir)? {
            let path = entry?.path();
            if is_entry_file(&path) {
                fs::remove_file(&path)?;
                removed += 1;
            }
        }
        Ok(removed)
    }
}

fn is_entry_file(path: &Path) -> bool {
    path.extension().is_some_and(|e| e == "json")
        && path
            .file_stem()
            .and_then(|s| s.to_str())
            .is_some_and(|s| s.len() == 64 && s.bytes().all(|b| b.is_ascii_hexdigit()))
}
