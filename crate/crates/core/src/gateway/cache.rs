//! Content-addressed response cache: `<root>/<first two hex>/<digest>.json`.

use std::fs;
use std::io::{self, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::GenerationRequest;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CacheEntry {
    pub request: GenerationRequest,
    pub text: String,
    pub latency: f64,
}

#[derive(Debug, Clone)]
pub struct ResponseCache {
    root: PathBuf,
}

impl ResponseCache {
    pub fn new(root: impl Into<PathBuf>) -> Self {
        ResponseCache { root: root.into() }
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    pub fn path_for(&self, key: &str) -> PathBuf {
        let shard = key.get(..2).unwrap_or("__");
        self.root.join(shard).join(format!("{key}.json"))
    }

    pub fn get(&self, key: &str) -> io::Result<Option<CacheEntry>> {
        let path = self.path_for(key);
        match fs::read(&path) {
            Ok(bytes) => match serde_json::from_slice(&bytes) {
                Ok(entry) => Ok(Some(entry)),
                Err(e) => {
                    // unreadable entries are treated as misses and rewritten
                    log::warn!("ignoring corrupt cache entry {}: {e}", path.display());
                    Ok(None)
                }
            },
            Err(e) if e.kind() == io::ErrorKind::NotFound => Ok(None),
            Err(e) => Err(e),
        }
    }

    /// Write via a temp file in the shard directory, then rename into place.
    pub fn put(&self, key: &str, entry: &CacheEntry) -> io::Result<()> {
        let path = self.path_for(key);
        let dir = path.parent().expect("sharded path");
        fs::create_dir_all(dir)?;
        let mut tmp = tempfile::NamedTempFile::new_in(dir)?;
        tmp.write_all(&serde_json::to_vec(entry).expect("serializable"))?;
        tmp.persist(&path).map_err(|e| e.error)?;
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn put_get() {
        let dir = tempfile::tempdir().unwrap();
        let cache = ResponseCache::new(dir.path());
        let req = GenerationRequest::new("m", "p");
        let key = req.cache_key();
        assert!(cache.get(&key).unwrap().is_none());
        let entry = CacheEntry {
            request: req,
            text: "[]".into(),
            latency: 0.25,
        };
        cache.put(&key, &entry).unwrap();
        assert_eq!(cache.get(&key).unwrap(), Some(entry));
        assert!(cache.path_for(&key).starts_with(dir.path().join(&key[..2])));
    }
}
