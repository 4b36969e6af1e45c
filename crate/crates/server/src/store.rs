//! Sessions in memory, one JSON document per session on disk.

use std::collections::HashMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::sync::{Arc, RwLock};

use conceptviz::session::{load_session, save_session, Session};
use tokio::sync::Mutex;

use crate::error::ApiError;

pub struct Store {
    dir: PathBuf,
    sessions: RwLock<HashMap<String, Arc<Mutex<Session>>>>,
}

fn valid_id(id: &str) -> bool {
    !id.is_empty() && id.bytes().all(|b| b.is_ascii_alphanumeric() || b == b'-')
}

impl Store {
    /// Opens `dir`, creating it if needed, and loads every session file in it.
    /// Unreadable files are skipped with a warning.
    pub fn open(dir: &Path) -> std::io::Result<Store> {
        fs::create_dir_all(dir)?;
        let mut sessions = HashMap::new();
        for entry in fs::read_dir(dir)? {
            let path = entry?.path();
            if path.extension().and_then(|e| e.to_str()) != Some("json") {
                continue;
            }
            match load_session(&path) {
                Ok(s) if path.file_stem().and_then(|f| f.to_str()) == Some(s.id.as_str()) => {
                    sessions.insert(s.id.clone(), Arc::new(Mutex::new(s)));
                }
                Ok(s) => tracing::warn!(path = %path.display(), id = %s.id, "session file name does not match its id"),
                Err(e) => tracing::warn!(path = %path.display(), error = %e, "skipping unreadable session file"),
            }
        }
        Ok(Store { dir: dir.to_path_buf(), sessions: RwLock::new(sessions) })
    }

    pub fn dir(&self) -> &Path {
        &self.dir
    }

    fn path_of(&self, id: &str) -> PathBuf {
        self.dir.join(format!("{id}.json"))
    }

    pub fn ids(&self) -> Vec<String> {
        let mut ids: Vec<String> = self.sessions.read().expect("store lock").keys().cloned().collect();
        ids.sort();
        ids
    }

    fn cell(&self, id: &str) -> Result<Arc<Mutex<Session>>, ApiError> {
        if !valid_id(id) {
            return Err(ApiError::session_not_found(id));
        }
        self.sessions.read().expect("store lock").get(id).cloned().ok_or_else(|| ApiError::session_not_found(id))
    }

    /// Persists a new session and makes it visible.
    pub async fn insert(self: &Arc<Self>, s: Session) -> Result<(), ApiError> {
        let store = self.clone();
        tokio::task::spawn_blocking(move || {
            save_session(&store.path_of(&s.id), &s)?;
            store.sessions.write().expect("store lock").insert(s.id.clone(), Arc::new(Mutex::new(s)));
            Ok(())
        })
        .await
        .map_err(|e| ApiError::internal(e.to_string()))?
    }

    pub async fn read<R>(&self, id: &str, f: impl FnOnce(&Session) -> R) -> Result<R, ApiError> {
        let cell = self.cell(id)?;
        let guard = cell.lock().await;
        Ok(f(&guard))
    }

    /// Runs `f` on a copy of the session off the async runtime. A changed copy
    /// replaces the session only after it has been written to disk.
    pub async fn mutate<R, F>(self: &Arc<Self>, id: &str, f: F) -> Result<R, ApiError>
    where
        R: Send + 'static,
        F: FnOnce(&mut Session) -> Result<R, ApiError> + Send + 'static,
    {
        let cell = self.cell(id)?;
        let mut guard = cell.lock_owned().await;
        let path = self.path_of(id);
        tokio::task::spawn_blocking(move || {
            let mut work = guard.clone();
            let out = f(&mut work);
            if work != *guard {
                save_session(&path, &work)?;
                *guard = work;
            }
            out
        })
        .await
        .map_err(|e| ApiError::internal(e.to_string()))?
    }
}
