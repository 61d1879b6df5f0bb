//! Content-addressed reply cache: `<root>/<backend_id>/<digest>.entry`.

use std::collections::HashMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::sync::RwLock;

use serde::{Deserialize, Serialize};
use serde_json::Value;
use sha2::{Digest, Sha256};

use super::{BackendError, BackendSpec, Reply, Request};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CacheEntry {
    pub key: String,
    pub value: Reply,
    pub created_at: String,
}

/// JSON with object keys sorted at every level.
pub(crate) fn canonical_json(value: &Value) -> String {
    fn sort(v: &Value) -> Value {
        match v {
            Value::Object(map) => {
                let mut keys: Vec<&String> = map.keys().collect();
                keys.sort();
                let mut out = serde_json::Map::new();
                for k in keys {
                    out.insert(k.clone(), sort(&map[k]));
                }
                Value::Object(out)
            }
            Value::Array(items) => Value::Array(items.iter().map(sort).collect()),
            other => other.clone(),
        }
    }
    sort(value).to_string()
}

pub(crate) fn request_key(spec: &BackendSpec, request: &Request) -> String {
    let mut h = Sha256::new();
    h.update(spec.backend_id.as_bytes());
    h.update([0u8]);
    h.update(canonical_json(&request.payload(spec)).as_bytes());
    hex::encode(h.finalize())
}

#[derive(Debug, Default)]
pub struct Cache {
    root: Option<PathBuf>,
    memory: RwLock<HashMap<(String, String), Reply>>,
}

impl Cache {
    pub fn new(root: Option<PathBuf>) -> Self {
        Self {
            root,
            memory: RwLock::default(),
        }
    }

    pub fn in_memory() -> Self {
        Self::new(None)
    }

    pub fn on_disk(root: impl Into<PathBuf>) -> Self {
        Self::new(Some(root.into()))
    }

    pub fn root(&self) -> Option<&Path> {
        self.root.as_deref()
    }

    pub fn entry_path(&self, backend_id: &str, key: &str) -> Option<PathBuf> {
        self.root
            .as_ref()
            .map(|r| r.join(backend_id).join(format!("{key}.entry")))
    }

    fn io_error(backend_id: &str, e: impl std::fmt::Display) -> BackendError {
        BackendError::CacheIo {
            backend_id: backend_id.to_string(),
            message: e.to_string(),
        }
    }

    pub fn get(&self, backend_id: &str, key: &str) -> Result<Option<Reply>, BackendError> {
        let id = (backend_id.to_string(), key.to_string());
        if let Some(r) = self.memory.read().expect("cache lock poisoned").get(&id) {
            return Ok(Some(r.clone()));
        }
        let Some(path) = self.entry_path(backend_id, key) else {
            return Ok(None);
        };
        let text = match fs::read_to_string(&path) {
            Ok(t) => t,
            Err(e) if e.kind() == std::io::ErrorKind::NotFound => return Ok(None),
            Err(e) => return Err(Self::io_error(backend_id, e)),
        };
        let entry: CacheEntry = serde_json::from_str(&text)
            .map_err(|e| Self::io_error(backend_id, format!("{}: {e}", path.display())))?;
        self.memory
            .write()
            .expect("cache lock poisoned")
            .insert(id, entry.value.clone());
        Ok(Some(entry.value))
    }

    pub fn put(&self, backend_id: &str, key: &str, reply: &Reply) -> Result<(), BackendError> {
        if let Some(path) = self.entry_path(backend_id, key) {
            let dir = path.parent().expect("entry path has a parent");
            fs::create_dir_all(dir).map_err(|e| Self::io_error(backend_id, e))?;
            let entry = CacheEntry {
                key: key.to_string(),
                value: reply.clone(),
                created_at: chrono::Utc::now().to_rfc3339(),
            };
            let body = serde_json::to_string(&entry).map_err(|e| Self::io_error(backend_id, e))?;
            let tmp = dir.join(format!("{key}.tmp{}", std::process::id()));
            fs::write(&tmp, body).map_err(|e| Self::io_error(backend_id, e))?;
            fs::rename(&tmp, &path).map_err(|e| Self::io_error(backend_id, e))?;
        }
        self.memory
            .write()
            .expect("cache lock poisoned")
            .insert((backend_id.to_string(), key.to_string()), reply.clone());
        Ok(())
    }
}
