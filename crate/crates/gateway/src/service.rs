//! Catalog, provider selection and the analysis entry point shared by the
//! HTTP handlers and the command line.

use std::collections::HashMap;
use std::path::Path;
use std::sync::Arc;

use capt_core::acoustic::{parse_ppg, AcousticError, DemoProvider, FixtureProvider, PosteriorProvider, ProviderKind};
use capt_core::audio::WavError;
use capt_core::exec::Execution;
use capt_core::inventory::{
    load_exercise_catalog, parse_exercise_catalog, CatalogError, CatalogFile, ExerciseRecord, ExerciseScript, PhoneInventory,
};
use capt_core::pipeline::{analyze, ingest_wav, Outcome, PipelineConfig, PipelineError};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::config::ProviderConfig;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExerciseSummary {
    pub id: String,
    pub text: String,
    pub word_count: usize,
}

/// Immutable exercise catalog indexed by id.
#[derive(Debug, Clone)]
pub struct Catalog {
    exercises: Vec<ExerciseScript>,
    index: HashMap<String, usize>,
}

impl Catalog {
    pub fn new(exercises: Vec<ExerciseScript>) -> Self {
        let index = exercises.iter().enumerate().map(|(i, e)| (e.id.clone(), i)).collect();
        Self { exercises, index }
    }

    pub fn load(path: &Path, inv: &PhoneInventory) -> Result<Self, CatalogError> {
        load_exercise_catalog(path, inv).map(Self::new)
    }

    /// Reads either a catalog document or a single bare exercise object.
    pub fn load_exercise_file(path: &Path, inv: &PhoneInventory) -> Result<Self, CatalogError> {
        #[derive(Deserialize)]
        #[serde(untagged)]
        enum Doc {
            Catalog(CatalogFile),
            Single(Box<ExerciseRecord>),
        }
        let text = std::fs::read_to_string(path)?;
        let file = match serde_json::from_str(&text)? {
            Doc::Catalog(file) => file,
            Doc::Single(record) => CatalogFile { exercises: vec![*record] },
        };
        parse_exercise_catalog(&serde_json::to_string(&file)?, inv).map(Self::new)
    }

    pub fn get(&self, id: &str) -> Option<&ExerciseScript> {
        self.index.get(id).map(|&i| &self.exercises[i])
    }

    pub fn len(&self) -> usize {
        self.exercises.len()
    }

    pub fn is_empty(&self) -> bool {
        self.exercises.is_empty()
    }

    pub fn exercises(&self) -> &[ExerciseScript] {
        &self.exercises
    }

    pub fn summaries(&self) -> Vec<ExerciseSummary> {
        self.exercises
            .iter()
            .map(|e| ExerciseSummary { id: e.id.clone(), text: e.text.clone(), word_count: e.words.len() })
            .collect()
    }
}

/// Configured source of posteriorgrams for requests that upload none.
pub enum Provider {
    Model(Box<dyn PosteriorProvider>),
    /// Only uploaded posteriorgrams are accepted.
    External,
}

impl Provider {
    pub fn from_config(cfg: &ProviderConfig, inv: Arc<PhoneInventory>) -> Result<Self, AcousticError> {
        Ok(match cfg {
            ProviderConfig::Fixture { ppg_dir } => Provider::Model(Box::new(FixtureProvider::new(ppg_dir, inv))),
            ProviderConfig::Demo { error_plan } => Provider::Model(Box::new(DemoProvider::new(inv, error_plan)?)),
            ProviderConfig::External => Provider::External,
        })
    }
}

#[derive(Debug, Error)]
pub enum AnalyzeError {
    #[error("cannot decode audio: {0}")]
    Audio(#[from] WavError),
    #[error("invalid posteriorgram: {0}")]
    InvalidPpg(AcousticError),
    #[error("this service needs a posteriorgram upload")]
    PpgRequired,
    #[error("posterior provider failed: {0}")]
    Provider(AcousticError),
    #[error("{0}")]
    Pipeline(PipelineError),
}

#[derive(Debug, Clone)]
pub struct Analysis {
    pub outcome: Outcome,
    pub provider_used: ProviderKind,
}

/// Decode, obtain posteriors, validate and analyze one recording.
///
/// An uploaded posteriorgram always wins over the configured provider.
pub fn run_analysis(
    audio_bytes: &[u8],
    uploaded_ppg: Option<&str>,
    script: &ExerciseScript,
    provider: &Provider,
    inv: &Arc<PhoneInventory>,
    cfg: &PipelineConfig,
) -> Result<Analysis, AnalyzeError> {
    let audio = ingest_wav(audio_bytes)?;
    let (ppg, provider_used) = match (uploaded_ppg, provider) {
        (Some(json), _) => (parse_ppg(json, inv.clone()).map_err(AnalyzeError::InvalidPpg)?, ProviderKind::External),
        (None, Provider::Model(p)) => (p.provide(&audio, script).map_err(AnalyzeError::Provider)?, p.kind()),
        (None, Provider::External) => return Err(AnalyzeError::PpgRequired),
    };
    let outcome = analyze(&audio, &ppg, script, inv, cfg, Execution::default()).map_err(|e| match e {
        PipelineError::Acoustic(a) if provider_used == ProviderKind::External => AnalyzeError::InvalidPpg(a),
        other => AnalyzeError::Pipeline(other),
    })?;
    Ok(Analysis { outcome, provider_used })
}
