//! Directory-backed profile store.
//!
//! Layout: `profiles/<entity_kind>/<encoded entity_id>/<profile_hash>.json`
//! plus `profiles/index.json`, which names the latest profile per entity.
//! Profiles are immutable once written. Writers serialize on an advisory
//! lock over `profiles/.lock`; readers take no lock because every file is
//! replaced by rename.

use std::fs::{self, File, OpenOptions};
use std::io;
use std::path::{Path, PathBuf};

use riskscope_core::profile::{EntityProfile, ProfileError};
use riskscope_core::taxonomy::EntityKind;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::fsio::{self, Fs, Storage};

#[derive(Debug, Error)]
pub enum ProfileStoreError {
    #[error("no profile for {kind} `{entity_id}`")]
    NotFound { kind: EntityKind, entity_id: String },
    #[error("profile {hash} for {kind} `{entity_id}` not found")]
    MissingObject {
        kind: EntityKind,
        entity_id: String,
        hash: String,
    },
    #[error("profile file {path} is invalid: {source}")]
    Invalid {
        path: PathBuf,
        #[source]
        source: ProfileError,
    },
    #[error("profile index {path} is invalid: {message}")]
    CorruptIndex { path: PathBuf, message: String },
    #[error("io error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: io::Error,
    },
}

fn io_err(path: &Path) -> impl FnOnce(io::Error) -> ProfileStoreError + '_ {
    move |source| ProfileStoreError::Io {
        path: path.to_path_buf(),
        source,
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct IndexEntry {
    pub entity_kind: EntityKind,
    pub entity_id: String,
    pub profile_hash: String,
    pub created_at: String,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProfileIndex {
    pub entries: Vec<IndexEntry>,
}

impl ProfileIndex {
    pub fn latest(&self, kind: EntityKind, entity_id: &str) -> Option<&IndexEntry> {
        self.entries
            .iter()
            .find(|e| e.entity_kind == kind && e.entity_id == entity_id)
    }

    fn upsert(&mut self, entry: IndexEntry) {
        self.entries
            .retain(|e| !(e.entity_kind == entry.entity_kind && e.entity_id == entry.entity_id));
        self.entries.push(entry);
        self.entries
            .sort_by(|a, b| (a.entity_kind, &a.entity_id).cmp(&(b.entity_kind, &b.entity_id)));
    }
}

/// Percent-encode every byte outside `[A-Za-z0-9._-]`. A leading dot is
/// encoded too so ids like `..` cannot name a parent or hidden directory.
pub fn encode_entity_id(id: &str) -> String {
    let mut out = String::with_capacity(id.len());
    for (i, b) in id.bytes().enumerate() {
        let plain = b.is_ascii_alphanumeric() || b == b'-' || b == b'_' || (b == b'.' && i > 0);
        if plain {
            out.push(b as char);
        } else {
            out.push_str(&format!("%{b:02X}"));
        }
    }
    out
}

#[derive(Debug, Clone)]
pub struct ProfileStore<S: Storage = Fs> {
    dir: PathBuf,
    storage: S,
}

impl ProfileStore<Fs> {
    pub fn new(root: &Path) -> Self {
        ProfileStore::with_storage(root, Fs)
    }
}

/// Held for the duration of a write; released on drop.
struct WriteLock(File);

impl Drop for WriteLock {
    fn drop(&mut self) {
        let _ = self.0.unlock();
    }
}

impl<S: Storage> ProfileStore<S> {
    pub fn with_storage(root: &Path, storage: S) -> Self {
        ProfileStore {
            dir: root.join("profiles"),
            storage,
        }
    }

    pub fn dir(&self) -> &Path {
        &self.dir
    }

    pub fn index_path(&self) -> PathBuf {
        self.dir.join("index.json")
    }

    pub fn object_path(&self, kind: EntityKind, entity_id: &str, hash: &str) -> PathBuf {
        self.dir
            .join(kind.as_str())
            .join(encode_entity_id(entity_id))
            .join(format!("{hash}.json"))
    }

    fn lock(&self) -> Result<WriteLock, ProfileStoreError> {
        fs::create_dir_all(&self.dir).map_err(io_err(&self.dir))?;
        let path = self.dir.join(".lock");
        let file = OpenOptions::new()
            .create(true)
            .truncate(false)
            .write(true)
            .open(&path)
            .map_err(io_err(&path))?;
        file.lock().map_err(io_err(&path))?;
        Ok(WriteLock(file))
    }

    pub fn index(&self) -> Result<ProfileIndex, ProfileStoreError> {
        let path = self.index_path();
        match fsio::read_optional(&path).map_err(io_err(&path))? {
            None => Ok(ProfileIndex::default()),
            Some(bytes) => {
                serde_json::from_slice(&bytes).map_err(|e| ProfileStoreError::CorruptIndex {
                    path,
                    message: e.to_string(),
                })
            }
        }
    }

    /// Store `profile` and make it the latest for its entity. Saving the same
    /// content again reuses the existing object. On failure the index is
    /// untouched and a newly written object is removed again.
    pub fn save(&self, profile: &EntityProfile) -> Result<(), ProfileStoreError> {
        let _guard = self.lock()?;
        let object = self.object_path(
            profile.entity_kind,
            &profile.entity_id,
            &profile.profile_hash,
        );
        let mut index = self.index()?;
        let created = !object.is_file();
        if created {
            self.storage
                .write_atomic(&object, &profile.to_json())
                .map_err(io_err(&object))?;
        }
        index.upsert(IndexEntry {
            entity_kind: profile.entity_kind,
            entity_id: profile.entity_id.clone(),
            profile_hash: profile.profile_hash.clone(),
            created_at: profile.provenance.created_at.clone(),
        });
        let mut bytes = serde_json::to_vec_pretty(&index).expect("index serializes");
        bytes.push(b'\n');
        let index_path = self.index_path();
        if let Err(e) = self.storage.write_atomic(&index_path, &bytes) {
            if created {
                let _ = self.storage.remove(&object);
            }
            return Err(io_err(&index_path)(e));
        }
        Ok(())
    }

    pub fn load(
        &self,
        kind: EntityKind,
        entity_id: &str,
        hash: &str,
    ) -> Result<EntityProfile, ProfileStoreError> {
        let path = self.object_path(kind, entity_id, hash);
        let bytes = fsio::read_optional(&path)
            .map_err(io_err(&path))?
            .ok_or_else(|| ProfileStoreError::MissingObject {
                kind,
                entity_id: entity_id.into(),
                hash: hash.into(),
            })?;
        let profile =
            EntityProfile::from_json(&bytes).map_err(|source| ProfileStoreError::Invalid {
                path: path.clone(),
                source,
            })?;
        if profile.entity_kind != kind
            || profile.entity_id != entity_id
            || profile.profile_hash != hash
        {
            return Err(ProfileStoreError::Invalid {
                path,
                source: ProfileError::HashMismatch {
                    stored: hash.into(),
                    computed: profile.profile_hash,
                },
            });
        }
        Ok(profile)
    }

    /// The indexed profile for an entity, or a specific revision by hash.
    pub fn resolve(
        &self,
        kind: EntityKind,
        entity_id: &str,
        hash: Option<&str>,
    ) -> Result<EntityProfile, ProfileStoreError> {
        match hash {
            Some(hash) => self.load(kind, entity_id, hash),
            None => {
                let index = self.index()?;
                let entry =
                    index
                        .latest(kind, entity_id)
                        .ok_or_else(|| ProfileStoreError::NotFound {
                            kind,
                            entity_id: entity_id.into(),
                        })?;
                self.load(kind, entity_id, &entry.profile_hash)
            }
        }
    }
}
