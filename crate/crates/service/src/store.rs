//! The session table and its optional on-disk mirror.

use std::collections::HashMap;
use std::path::{Path, PathBuf};
use std::sync::{Arc, Mutex, RwLock};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::wire::Record;

pub const SESSION_SCHEMA: &str = "doric-session/1";

#[derive(Debug, Error)]
pub enum StoreError {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("{path}: {message}")]
    Format { path: PathBuf, message: String },
}

#[derive(Serialize, Deserialize)]
struct Persisted {
    schema: String,
    #[serde(flatten)]
    record: Record,
}

/// A stored session. `deleted` is set under the lock so a request racing a
/// delete cannot write the file back.
#[derive(Debug)]
pub struct Slot {
    pub record: Record,
    pub deleted: bool,
}

pub type Handle = Arc<Mutex<Slot>>;

#[derive(Debug, Default)]
pub struct Store {
    sessions: RwLock<HashMap<String, Handle>>,
    persist: Option<PathBuf>,
}

impl Store {
    pub fn in_memory() -> Self {
        Store::default()
    }

    /// A store mirrored to one JSON file per session under `dir`. Sessions
    /// already there are loaded.
    pub fn persistent(dir: impl Into<PathBuf>) -> Result<Self, StoreError> {
        let dir = dir.into();
        let io = |path: &Path| {
            let path = path.to_path_buf();
            move |source| StoreError::Io { path, source }
        };
        std::fs::create_dir_all(&dir).map_err(io(&dir))?;
        let mut sessions = HashMap::new();
        for entry in std::fs::read_dir(&dir).map_err(io(&dir))? {
            let path = entry.map_err(io(&dir))?.path();
            if path.extension().and_then(|e| e.to_str()) != Some("json") {
                continue;
            }
            let text = std::fs::read_to_string(&path).map_err(io(&path))?;
            let format = |message: String| StoreError::Format {
                path: path.clone(),
                message,
            };
            let p: Persisted = serde_json::from_str(&text).map_err(|e| format(e.to_string()))?;
            if p.schema != SESSION_SCHEMA {
                return Err(format(format!("unsupported schema {:?}", p.schema)));
            }
            let slot = Slot {
                record: p.record,
                deleted: false,
            };
            sessions.insert(slot.record.id.clone(), Arc::new(Mutex::new(slot)));
        }
        Ok(Store {
            sessions: RwLock::new(sessions),
            persist: Some(dir),
        })
    }

    fn path_of(&self, id: &str) -> Option<PathBuf> {
        self.persist.as_ref().map(|d| d.join(format!("{id}.json")))
    }

    /// Writes a record to disk, if persisting. Call with the slot locked.
    pub fn save(&self, record: &Record) -> Result<(), StoreError> {
        let Some(path) = self.path_of(&record.id) else {
            return Ok(());
        };
        let body = serde_json::to_string_pretty(&Persisted {
            schema: SESSION_SCHEMA.into(),
            record: record.clone(),
        })
        .expect("records always serialize");
        let tmp = path.with_extension("json.tmp");
        let io = |source| StoreError::Io {
            path: path.clone(),
            source,
        };
        std::fs::write(&tmp, body).map_err(io)?;
        std::fs::rename(&tmp, &path).map_err(io)
    }

    pub fn insert(&self, record: Record) -> Result<Handle, StoreError> {
        self.save(&record)?;
        let id = record.id.clone();
        let handle = Arc::new(Mutex::new(Slot {
            record,
            deleted: false,
        }));
        self.sessions.write().unwrap().insert(id, handle.clone());
        Ok(handle)
    }

    pub fn get(&self, id: &str) -> Option<Handle> {
        self.sessions.read().unwrap().get(id).cloned()
    }

    pub fn all(&self) -> Vec<Handle> {
        self.sessions.read().unwrap().values().cloned().collect()
    }

    /// Removes a session. Removing an unknown id is not an error.
    pub fn remove(&self, id: &str) -> Result<(), StoreError> {
        let handle = self.sessions.write().unwrap().remove(id);
        if let Some(handle) = handle {
            let mut slot = handle.lock().unwrap();
            slot.deleted = true;
            if let Some(path) = self.path_of(id) {
                match std::fs::remove_file(&path) {
                    Ok(()) => {}
                    Err(e) if e.kind() == std::io::ErrorKind::NotFound => {}
                    Err(source) => return Err(StoreError::Io { path, source }),
                }
            }
        }
        Ok(())
    }
}
