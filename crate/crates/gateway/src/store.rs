//! One JSON file per attempt, written atomically and never rewritten.

use std::io::Write;
use std::path::{Path, PathBuf};

use capt_core::acoustic::ProviderKind;
use capt_core::feedback::AnalysisResult;
use capt_core::pipeline::Outcome;
use capt_core::validation::ValidationReport;
use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;
use ulid::Ulid;

#[derive(Debug, Error)]
pub enum StoreError {
    #[error("attempt store i/o: {0}")]
    Io(#[from] std::io::Error),
    #[error("attempt {0} already exists")]
    Exists(String),
    #[error("corrupt attempt record {path}: {source}")]
    Corrupt {
        path: PathBuf,
        source: serde_json::Error,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum AttemptResult {
    Analyzed(Box<AnalysisResult>),
    Rejected(ValidationReport),
}

impl From<Outcome> for AttemptResult {
    fn from(o: Outcome) -> Self {
        match o {
            Outcome::Analyzed(r) => AttemptResult::Analyzed(r),
            Outcome::Rejected(r) => AttemptResult::Rejected(r),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AttemptRecord {
    pub attempt_id: String,
    pub exercise_id: String,
    pub received_at: DateTime<Utc>,
    /// SHA-256 of the uploaded audio bytes, lowercase hex.
    pub audio_digest: String,
    pub provider_used: ProviderKind,
    pub result: AttemptResult,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AttemptSummary {
    pub attempt_id: String,
    pub exercise_id: String,
    pub received_at: DateTime<Utc>,
    pub overall: bool,
}

impl AttemptRecord {
    pub fn new(exercise_id: &str, audio: &[u8], provider_used: ProviderKind, result: AttemptResult) -> Self {
        Self {
            attempt_id: Ulid::new().to_string(),
            exercise_id: exercise_id.to_string(),
            received_at: Utc::now(),
            audio_digest: audio_digest(audio),
            provider_used,
            result,
        }
    }

    pub fn summary(&self) -> AttemptSummary {
        let overall = match &self.result {
            AttemptResult::Analyzed(r) => r.validation.overall,
            AttemptResult::Rejected(r) => r.overall,
        };
        AttemptSummary {
            attempt_id: self.attempt_id.clone(),
            exercise_id: self.exercise_id.clone(),
            received_at: self.received_at,
            overall,
        }
    }
}

pub fn audio_digest(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

/// ULIDs are 26 Crockford base-32 characters.
pub fn is_attempt_id(id: &str) -> bool {
    id.len() == 26 && Ulid::from_string(id).is_ok()
}

#[derive(Debug, Clone)]
pub struct AttemptStore {
    dir: PathBuf,
}

impl AttemptStore {
    pub fn open(dir: impl Into<PathBuf>) -> Result<Self, StoreError> {
        let dir = dir.into();
        std::fs::create_dir_all(&dir)?;
        Ok(Self { dir })
    }

    pub fn dir(&self) -> &Path {
        &self.dir
    }

    fn path_of(&self, id: &str) -> PathBuf {
        self.dir.join(format!("{id}.json"))
    }

    /// Writes to a temporary file in the store, then links it into place.
    /// Readers never observe a partial record and existing records are
    /// never replaced.
    pub fn put(&self, record: &AttemptRecord) -> Result<(), StoreError> {
        let body = serde_json::to_vec_pretty(record).expect("records serialize");
        let mut tmp = tempfile::Builder::new().prefix(".attempt-").suffix(".tmp").tempfile_in(&self.dir)?;
        tmp.write_all(&body)?;
        tmp.as_file().sync_all()?;
        tmp.persist_noclobber(self.path_of(&record.attempt_id)).map_err(|e| {
            if e.error.kind() == std::io::ErrorKind::AlreadyExists {
                StoreError::Exists(record.attempt_id.clone())
            } else {
                StoreError::Io(e.error)
            }
        })?;
        Ok(())
    }

    /// Raw stored bytes, or `None` for an unknown id.
    pub fn get_raw(&self, id: &str) -> Result<Option<Vec<u8>>, StoreError> {
        if !is_attempt_id(id) {
            return Ok(None);
        }
        match std::fs::read(self.path_of(id)) {
            Ok(bytes) => Ok(Some(bytes)),
            Err(e) if e.kind() == std::io::ErrorKind::NotFound => Ok(None),
            Err(e) => Err(e.into()),
        }
    }

    pub fn get(&self, id: &str) -> Result<Option<AttemptRecord>, StoreError> {
        let Some(bytes) = self.get_raw(id)? else {
            return Ok(None);
        };
        serde_json::from_slice(&bytes)
            .map(Some)
            .map_err(|source| StoreError::Corrupt { path: self.path_of(id), source })
    }

    /// Summaries of every stored attempt, oldest first.
    pub fn list(&self) -> Result<Vec<AttemptSummary>, StoreError> {
        let mut ids: Vec<String> = std::fs::read_dir(&self.dir)?
            .filter_map(|entry| {
                let name = entry.ok()?.file_name().into_string().ok()?;
                let id = name.strip_suffix(".json")?;
                is_attempt_id(id).then(|| id.to_string())
            })
            .collect();
        ids.sort();
        ids.iter()
            .filter_map(|id| self.get(id).transpose())
            .map(|r| r.map(|rec| rec.summary()))
            .collect()
    }
}
