//! Persistence behind the API. [`MemoryStore`] keeps everything in process
//! memory; [`FileStore`] mirrors the same state to a JSON file plus one file
//! per media blob, so a restarted service picks up where it stopped.

use std::collections::HashMap;
use std::fs;
use std::io;
use std::path::{Path, PathBuf};
use std::sync::RwLock;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::model::{Account, CurationRecord, Observation, Project};

#[derive(Debug, Error)]
pub enum StoreError {
    #[error("email {0} is already registered")]
    EmailTaken(String),

    #[error("idempotency key {key:?} was already used for different media")]
    IdempotencyConflict { key: String },

    #[error("store state at {path} is unreadable: {message}")]
    Corrupt { path: String, message: String },

    #[error(transparent)]
    Io(#[from] io::Error),
}

/// Scope of a client-supplied idempotency key: the same key from another
/// submitter or for another project is a different upload.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct IdempotencyKey {
    pub submitter: String,
    pub project_id: String,
    pub key: String,
}

impl IdempotencyKey {
    fn flat(&self) -> String {
        format!("{}\n{}\n{}", self.submitter, self.project_id, self.key)
    }
}

/// Outcome of [`Store::insert_observation`].
#[derive(Clone, Debug, PartialEq)]
pub enum Inserted {
    New(Observation),
    /// The idempotency key was seen before; this is the original.
    Replayed(Observation),
}

impl Inserted {
    pub fn observation(&self) -> &Observation {
        match self {
            Inserted::New(o) | Inserted::Replayed(o) => o,
        }
    }
}

pub trait Store: Send + Sync {
    /// Fails with `EmailTaken` when the (case-folded) email is registered.
    fn insert_account(&self, account: Account) -> Result<(), StoreError>;
    fn account(&self, account_id: &str) -> Result<Option<Account>, StoreError>;
    fn account_by_email(&self, email: &str) -> Result<Option<Account>, StoreError>;

    /// Tokens are stored by digest only.
    fn insert_token(&self, token_digest: &str, account_id: &str) -> Result<(), StoreError>;
    fn account_for_token(&self, token_digest: &str) -> Result<Option<Account>, StoreError>;

    fn insert_project(&self, project: Project) -> Result<(), StoreError>;
    fn project(&self, project_id: &str) -> Result<Option<Project>, StoreError>;

    /// Content-addressed: storing the same bytes twice keeps one copy.
    fn put_media(&self, checksum: &str, bytes: &[u8]) -> Result<String, StoreError>;
    fn media(&self, blob: &str) -> Result<Option<Vec<u8>>, StoreError>;

    fn insert_observation(
        &self,
        observation: Observation,
        key: Option<&IdempotencyKey>,
    ) -> Result<Inserted, StoreError>;
    /// Earlier upload under `key`, if any.
    fn observation_for_key(&self, key: &IdempotencyKey) -> Result<Option<Observation>, StoreError>;
    fn observation(&self, observation_id: &str) -> Result<Option<Observation>, StoreError>;
    /// In upload order.
    fn observations_in(&self, project_id: &str) -> Result<Vec<Observation>, StoreError>;
    fn observation_count(&self) -> Result<usize, StoreError>;

    /// Appends a decision; the newest one is the active record.
    fn insert_curation(&self, record: CurationRecord) -> Result<(), StoreError>;
    fn active_curation(&self, observation_id: &str) -> Result<Option<CurationRecord>, StoreError>;
}

#[derive(Debug, Default, Serialize, Deserialize)]
struct State {
    accounts: HashMap<String, Account>,
    emails: HashMap<String, String>,
    tokens: HashMap<String, String>,
    projects: HashMap<String, Project>,
    observations: HashMap<String, Observation>,
    project_observations: HashMap<String, Vec<String>>,
    idempotency: HashMap<String, String>,
    curations: HashMap<String, Vec<CurationRecord>>,
}

fn email_key(email: &str) -> String {
    email.trim().to_lowercase()
}

impl State {
    fn insert_account(&mut self, account: Account) -> Result<(), StoreError> {
        if let Some(email) = &account.email {
            let key = email_key(email);
            if self.emails.contains_key(&key) {
                return Err(StoreError::EmailTaken(email.clone()));
            }
            self.emails.insert(key, account.account_id.clone());
        }
        self.accounts.insert(account.account_id.clone(), account);
        Ok(())
    }

    fn account_by_email(&self, email: &str) -> Option<Account> {
        self.emails
            .get(&email_key(email))
            .and_then(|id| self.accounts.get(id))
            .cloned()
    }

    fn account_for_token(&self, digest: &str) -> Option<Account> {
        self.tokens.get(digest).and_then(|id| self.accounts.get(id)).cloned()
    }

    fn observation_for_key(&self, key: &IdempotencyKey) -> Option<Observation> {
        self.idempotency
            .get(&key.flat())
            .and_then(|id| self.observations.get(id))
            .cloned()
    }

    fn insert_observation(
        &mut self,
        observation: Observation,
        key: Option<&IdempotencyKey>,
    ) -> Result<Inserted, StoreError> {
        if let Some(key) = key {
            if let Some(existing) = self.observation_for_key(key) {
                if existing.media.checksum != observation.media.checksum {
                    return Err(StoreError::IdempotencyConflict { key: key.key.clone() });
                }
                return Ok(Inserted::Replayed(existing));
            }
            self.idempotency.insert(key.flat(), observation.observation_id.clone());
        }
        self.project_observations
            .entry(observation.project_id.clone())
            .or_default()
            .push(observation.observation_id.clone());
        self.observations
            .insert(observation.observation_id.clone(), observation.clone());
        Ok(Inserted::New(observation))
    }

    fn observations_in(&self, project_id: &str) -> Vec<Observation> {
        self.project_observations
            .get(project_id)
            .into_iter()
            .flatten()
            .filter_map(|id| self.observations.get(id).cloned())
            .collect()
    }

    fn active_curation(&self, observation_id: &str) -> Option<CurationRecord> {
        self.curations
            .get(observation_id)
            .and_then(|records| records.last())
            .cloned()
    }
}

fn read<T>(lock: &RwLock<T>) -> std::sync::RwLockReadGuard<'_, T> {
    lock.read().unwrap_or_else(|e| e.into_inner())
}

fn write<T>(lock: &RwLock<T>) -> std::sync::RwLockWriteGuard<'_, T> {
    lock.write().unwrap_or_else(|e| e.into_inner())
}

#[derive(Debug, Default)]
pub struct MemoryStore {
    state: RwLock<State>,
    media: RwLock<HashMap<String, Vec<u8>>>,
}

impl MemoryStore {
    pub fn new() -> Self {
        Self::default()
    }
}

impl Store for MemoryStore {
    fn insert_account(&self, account: Account) -> Result<(), StoreError> {
        write(&self.state).insert_account(account)
    }

    fn account(&self, account_id: &str) -> Result<Option<Account>, StoreError> {
        Ok(read(&self.state).accounts.get(account_id).cloned())
    }

    fn account_by_email(&self, email: &str) -> Result<Option<Account>, StoreError> {
        Ok(read(&self.state).account_by_email(email))
    }

    fn insert_token(&self, token_digest: &str, account_id: &str) -> Result<(), StoreError> {
        write(&self.state)
            .tokens
            .insert(token_digest.to_owned(), account_id.to_owned());
        Ok(())
    }

    fn account_for_token(&self, token_digest: &str) -> Result<Option<Account>, StoreError> {
        Ok(read(&self.state).account_for_token(token_digest))
    }

    fn insert_project(&self, project: Project) -> Result<(), StoreError> {
        write(&self.state).projects.insert(project.project_id.clone(), project);
        Ok(())
    }

    fn project(&self, project_id: &str) -> Result<Option<Project>, StoreError> {
        Ok(read(&self.state).projects.get(project_id).cloned())
    }

    fn put_media(&self, checksum: &str, bytes: &[u8]) -> Result<String, StoreError> {
        write(&self.media)
            .entry(checksum.to_owned())
            .or_insert_with(|| bytes.to_vec());
        Ok(format!("media/{checksum}"))
    }

    fn media(&self, blob: &str) -> Result<Option<Vec<u8>>, StoreError> {
        let checksum = blob.strip_prefix("media/").unwrap_or(blob);
        Ok(read(&self.media).get(checksum).cloned())
    }

    fn insert_observation(
        &self,
        observation: Observation,
        key: Option<&IdempotencyKey>,
    ) -> Result<Inserted, StoreError> {
        write(&self.state).insert_observation(observation, key)
    }

    fn observation_for_key(&self, key: &IdempotencyKey) -> Result<Option<Observation>, StoreError> {
        Ok(read(&self.state).observation_for_key(key))
    }

    fn observation(&self, observation_id: &str) -> Result<Option<Observation>, StoreError> {
        Ok(read(&self.state).observations.get(observation_id).cloned())
    }

    fn observations_in(&self, project_id: &str) -> Result<Vec<Observation>, StoreError> {
        Ok(read(&self.state).observations_in(project_id))
    }

    fn observation_count(&self) -> Result<usize, StoreError> {
        Ok(read(&self.state).observations.len())
    }

    fn insert_curation(&self, record: CurationRecord) -> Result<(), StoreError> {
        write(&self.state)
            .curations
            .entry(record.observation_id.clone())
            .or_default()
            .push(record);
        Ok(())
    }

    fn active_curation(&self, observation_id: &str) -> Result<Option<CurationRecord>, StoreError> {
        Ok(read(&self.state).active_curation(observation_id))
    }
}

/// State in `<root>/state.json`, media in `<root>/media/<sha256>`.
#[derive(Debug)]
pub struct FileStore {
    root: PathBuf,
    state: RwLock<State>,
}

const STATE_FILE: &str = "state.json";

impl FileStore {
    pub fn open(root: impl Into<PathBuf>) -> Result<Self, StoreError> {
        let root = root.into();
        fs::create_dir_all(root.join("media"))?;
        let path = root.join(STATE_FILE);
        let state = match fs::read_to_string(&path) {
            Ok(text) => serde_json::from_str(&text).map_err(|e| StoreError::Corrupt {
                path: path.display().to_string(),
                message: e.to_string(),
            })?,
            Err(e) if e.kind() == io::ErrorKind::NotFound => State::default(),
            Err(e) => return Err(e.into()),
        };
        Ok(Self {
            root,
            state: RwLock::new(state),
        })
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    /// Applies `f` and writes the state out while still holding the lock, so
    /// the file always reflects a complete sequence of mutations.
    fn mutate<T>(&self, f: impl FnOnce(&mut State) -> Result<T, StoreError>) -> Result<T, StoreError> {
        let mut state = write(&self.state);
        let out = f(&mut state)?;
        let json = serde_json::to_vec(&*state).expect("state serializes");
        let tmp = self.root.join("state.json.tmp");
        fs::write(&tmp, json)?;
        fs::rename(&tmp, self.root.join(STATE_FILE))?;
        Ok(out)
    }

    fn media_path(&self, checksum: &str) -> Option<PathBuf> {
        // Blob names are hex digests; anything else never names a file.
        if checksum.is_empty() || !checksum.bytes().all(|b| b.is_ascii_hexdigit()) {
            return None;
        }
        Some(self.root.join("media").join(checksum))
    }
}

impl Store for FileStore {
    fn insert_account(&self, account: Account) -> Result<(), StoreError> {
        self.mutate(|s| s.insert_account(account))
    }

    fn account(&self, account_id: &str) -> Result<Option<Account>, StoreError> {
        Ok(read(&self.state).accounts.get(account_id).cloned())
    }

    fn account_by_email(&self, email: &str) -> Result<Option<Account>, StoreError> {
        Ok(read(&self.state).account_by_email(email))
    }

    fn insert_token(&self, token_digest: &str, account_id: &str) -> Result<(), StoreError> {
        self.mutate(|s| {
            s.tokens.insert(token_digest.to_owned(), account_id.to_owned());
            Ok(())
        })
    }

    fn account_for_token(&self, token_digest: &str) -> Result<Option<Account>, StoreError> {
        Ok(read(&self.state).account_for_token(token_digest))
    }

    fn insert_project(&self, project: Project) -> Result<(), StoreError> {
        self.mutate(|s| {
            s.projects.insert(project.project_id.clone(), project);
            Ok(())
        })
    }

    fn project(&self, project_id: &str) -> Result<Option<Project>, StoreError> {
        Ok(read(&self.state).projects.get(project_id).cloned())
    }

    fn put_media(&self, checksum: &str, bytes: &[u8]) -> Result<String, StoreError> {
        let path = self
            .media_path(checksum)
            .ok_or_else(|| io::Error::new(io::ErrorKind::InvalidInput, "checksum is not hex"))?;
        if !path.exists() {
            let tmp = path.with_extension("tmp");
            fs::write(&tmp, bytes)?;
            fs::rename(&tmp, &path)?;
        }
        Ok(format!("media/{checksum}"))
    }

    fn media(&self, blob: &str) -> Result<Option<Vec<u8>>, StoreError> {
        let Some(path) = self.media_path(blob.strip_prefix("media/").unwrap_or(blob)) else {
            return Ok(None);
        };
        match fs::read(path) {
            Ok(bytes) => Ok(Some(bytes)),
            Err(e) if e.kind() == io::ErrorKind::NotFound => Ok(None),
            Err(e) => Err(e.into()),
        }
    }

    fn insert_observation(
        &self,
        observation: Observation,
        key: Option<&IdempotencyKey>,
    ) -> Result<Inserted, StoreError> {
        self.mutate(|s| s.insert_observation(observation, key))
    }

    fn observation_for_key(&self, key: &IdempotencyKey) -> Result<Option<Observation>, StoreError> {
        Ok(read(&self.state).observation_for_key(key))
    }

    fn observation(&self, observation_id: &str) -> Result<Option<Observation>, StoreError> {
        Ok(read(&self.state).observations.get(observation_id).cloned())
    }

    fn observations_in(&self, project_id: &str) -> Result<Vec<Observation>, StoreError> {
        Ok(read(&self.state).observations_in(project_id))
    }

    fn observation_count(&self) -> Result<usize, StoreError> {
        Ok(read(&self.state).observations.len())
    }

    fn insert_curation(&self, record: CurationRecord) -> Result<(), StoreError> {
        self.mutate(|s| {
            s.curations
                .entry(record.observation_id.clone())
                .or_default()
                .push(record);
            Ok(())
        })
    }

    fn active_curation(&self, observation_id: &str) -> Result<Option<CurationRecord>, StoreError> {
        Ok(read(&self.state).active_curation(observation_id))
    }
}
