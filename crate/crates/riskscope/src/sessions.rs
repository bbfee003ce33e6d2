//! Sessions persisted as `sessions/<id>.json` under the store root.

use std::io;
use std::path::{Path, PathBuf};

use riskscope_core::questionnaire::{AssessmentSession, SessionError, SessionFile};
use riskscope_core::Framework;
use thiserror::Error;

use crate::fsio::{self, Fs, Storage};
use crate::time;

#[derive(Debug, Error)]
pub enum StoreError {
    #[error("session `{0}` not found")]
    NotFound(String),
    #[error("invalid session id `{0}`")]
    InvalidId(String),
    #[error("session file {path}: {message}")]
    Corrupt { path: PathBuf, message: String },
    #[error("session `{id}` does not replay: {source}")]
    Replay {
        id: String,
        #[source]
        source: SessionError,
    },
    #[error("io error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: io::Error,
    },
}

fn io_err(path: &Path) -> impl FnOnce(io::Error) -> StoreError + '_ {
    move |source| StoreError::Io {
        path: path.to_path_buf(),
        source,
    }
}

/// Session ids are generated here; anything loaded by id must look like one
/// so an id can never escape the sessions directory.
pub fn valid_session_id(id: &str) -> bool {
    !id.is_empty()
        && id.len() <= 64
        && id
            .bytes()
            .all(|b| b.is_ascii_alphanumeric() || b == b'-' || b == b'_')
}

#[derive(Debug, Clone)]
pub struct SessionStore<S: Storage = Fs> {
    dir: PathBuf,
    storage: S,
}

impl SessionStore<Fs> {
    pub fn new(root: &Path) -> Self {
        SessionStore::with_storage(root, Fs)
    }
}

impl<S: Storage> SessionStore<S> {
    pub fn with_storage(root: &Path, storage: S) -> Self {
        SessionStore {
            dir: root.join("sessions"),
            storage,
        }
    }

    pub fn path(&self, id: &str) -> PathBuf {
        self.dir.join(format!("{id}.json"))
    }

    /// Start and persist an empty session against the loaded pack.
    pub fn create(
        &self,
        framework: &Framework,
        use_title: &str,
    ) -> Result<AssessmentSession, StoreError> {
        let id = uuid::Uuid::new_v4().simple().to_string();
        let session =
            AssessmentSession::new(id, use_title, framework.pack().content_hash(), time::now());
        self.save(&session)?;
        Ok(session)
    }

    pub fn save(&self, session: &AssessmentSession) -> Result<(), StoreError> {
        let path = self.path(session.session_id());
        let mut bytes =
            serde_json::to_vec_pretty(&session.to_file()).expect("session files serialize");
        bytes.push(b'\n');
        self.storage
            .write_atomic(&path, &bytes)
            .map_err(io_err(&path))
    }

    pub fn load(&self, framework: &Framework, id: &str) -> Result<AssessmentSession, StoreError> {
        if !valid_session_id(id) {
            return Err(StoreError::InvalidId(id.into()));
        }
        let path = self.path(id);
        let bytes = fsio::read_optional(&path)
            .map_err(io_err(&path))?
            .ok_or_else(|| StoreError::NotFound(id.into()))?;
        load_session_bytes(framework, &path, &bytes)
    }

    pub fn exists(&self, id: &str) -> bool {
        valid_session_id(id) && self.path(id).is_file()
    }
}

/// Parse and replay a session file from anywhere on disk.
pub fn load_session_file(
    framework: &Framework,
    path: &Path,
) -> Result<AssessmentSession, StoreError> {
    let bytes = std::fs::read(path).map_err(io_err(path))?;
    load_session_bytes(framework, path, &bytes)
}

fn load_session_bytes(
    framework: &Framework,
    path: &Path,
    bytes: &[u8],
) -> Result<AssessmentSession, StoreError> {
    let file: SessionFile = serde_json::from_slice(bytes).map_err(|e| StoreError::Corrupt {
        path: path.to_path_buf(),
        message: e.to_string(),
    })?;
    let stamps = std::iter::once(("created_at", file.created_at.as_str()))
        .chain(file.history.iter().map(|e| ("history timestamp", e.at())));
    for (what, stamp) in stamps {
        if !time::is_rfc3339(stamp) {
            return Err(StoreError::Corrupt {
                path: path.to_path_buf(),
                message: format!("{what} `{stamp}` is not an RFC 3339 timestamp"),
            });
        }
    }
    let id = file.session_id.clone();
    AssessmentSession::from_file(file, framework.questionnaires())
        .map_err(|source| StoreError::Replay { id, source })
}
