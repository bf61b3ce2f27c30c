use std::collections::HashMap;
use std::fs::{File, OpenOptions};
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};
use std::sync::{Mutex, RwLock};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

pub const CACHE_FILE: &str = "responses.jsonl";

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

/// SHA-256 over model name, technique tag and prompt bytes, separated by 0x1f.
pub fn cache_key(model: &str, technique: &str, prompt: &str) -> String {
    let mut h = Sha256::new();
    h.update(model.as_bytes());
    h.update([0x1f]);
    h.update(technique.as_bytes());
    h.update([0x1f]);
    h.update(prompt.as_bytes());
    hex::encode(h.finalize())
}

/// One line of the cache file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CacheEntry {
    pub key: String,
    pub model: String,
    pub technique: String,
    pub prompt_sha256: String,
    pub response: String,
    pub created_at: String,
}

/// Response cache, in memory and optionally backed by an append-only JSONL file.
pub struct ResponseCache {
    entries: RwLock<HashMap<String, String>>,
    file: Option<(PathBuf, Mutex<File>)>,
}

impl Default for ResponseCache {
    fn default() -> Self {
        ResponseCache::in_memory()
    }
}

impl ResponseCache {
    pub fn in_memory() -> Self {
        ResponseCache { entries: RwLock::new(HashMap::new()), file: None }
    }

    /// Opens (or creates) `dir/responses.jsonl`. Unreadable lines are skipped.
    pub fn open(dir: &Path) -> std::io::Result<Self> {
        std::fs::create_dir_all(dir)?;
        let path = dir.join(CACHE_FILE);
        let mut entries = HashMap::new();
        if path.exists() {
            for (i, line) in BufReader::new(File::open(&path)?).lines().enumerate() {
                let line = line?;
                if line.trim().is_empty() {
                    continue;
                }
                match serde_json::from_str::<CacheEntry>(&line) {
                    // first write wins; entries are immutable
                    Ok(e) => {
                        entries.entry(e.key).or_insert(e.response);
                    }
                    Err(err) => log::warn!("{}:{}: skipping cache line: {err}", path.display(), i + 1),
                }
            }
        }
        let file = OpenOptions::new().create(true).append(true).open(&path)?;
        Ok(ResponseCache { entries: RwLock::new(entries), file: Some((path, Mutex::new(file))) })
    }

    pub fn path(&self) -> Option<&Path> {
        self.file.as_ref().map(|(p, _)| p.as_path())
    }

    pub fn get(&self, key: &str) -> Option<String> {
        self.entries.read().expect("cache lock poisoned").get(key).cloned()
    }

    pub fn len(&self) -> usize {
        self.entries.read().expect("cache lock poisoned").len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Records a response unless the key is already present.
    pub fn put(&self, model: &str, technique: &str, prompt: &str, response: &str) -> std::io::Result<()> {
        let key = cache_key(model, technique, prompt);
        {
            let mut entries = self.entries.write().expect("cache lock poisoned");
            if entries.contains_key(&key) {
                return Ok(());
            }
            entries.insert(key.clone(), response.to_string());
        }
        if let Some((_, file)) = &self.file {
            let entry = CacheEntry {
                key,
                model: model.to_string(),
                technique: technique.to_string(),
                prompt_sha256: sha256_hex(prompt.as_bytes()),
                response: response.to_string(),
                created_at: chrono::Utc::now().to_rfc3339(),
            };
            let mut line = serde_json::to_string(&entry).expect("serializable entry");
            line.push('\n');
            let mut f = file.lock().expect("cache file lock poisoned");
            f.write_all(line.as_bytes())?;
            f.flush()?;
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn key_is_stable() {
        // fixed value guards against accidental changes to the key layout
        assert_eq!(
            cache_key("m", "z0", "p"),
            sha256_hex(b"m\x1fz0\x1fp")
        );
        assert_ne!(cache_key("m", "z0", "p"), cache_key("m", "zp", "p"));
        assert_eq!(sha256_hex(b""), "e3b0c44298fc1c149afbf4c8996fb92427ae41e4649b934ca495991b7852b855");
    }

    #[test]
    fn persists_and_reloads() {
        let dir = tempfile::tempdir().unwrap();
        {
            let c = ResponseCache::open(dir.path()).unwrap();
            c.put("m", "z0", "prompt", "Positive").unwrap();
            c.put("m", "z0", "prompt", "Negative").unwrap();
        }
        let text = std::fs::read_to_string(dir.path().join(CACHE_FILE)).unwrap();
        assert_eq!(text.lines().count(), 1);
        let e: CacheEntry = serde_json::from_str(text.lines().next().unwrap()).unwrap();
        assert_eq!(e.prompt_sha256, sha256_hex(b"prompt"));
        let c = ResponseCache::open(dir.path()).unwrap();
        assert_eq!(c.get(&cache_key("m", "z0", "prompt")).as_deref(), Some("Positive"));
    }
}
