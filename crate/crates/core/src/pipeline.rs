//! End-to-end analysis: validation, alignment, scoring, prosody, feedback.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::acoustic::{AcousticError, Posteriorgram};
use crate::alignment::{forced_align, AlignError, AlignmentResult};
use crate::audio::{decode_wav, resample, AudioBuffer, WavError, PROCESSING_RATE};
use crate::exec::Execution;
use crate::feedback::{build_feedback, AnalysisResult, ProsodyAnalysis};
use crate::inventory::{ExerciseScript, PhoneInventory};
use crate::prosody::{
    detect_pauses_and_groups, sentence_stress, syllable_prominence, word_stress_all, yin_f0, ProminenceWeights,
    YinParams, DEFAULT_MIN_PAUSE_MS,
};
use crate::scoring::{minimal_pair, segment_gop, verdict, GopThresholds, MinimalPairResult, PhonemeVerdict, DEFAULT_UNCLEAR_MARGIN};
use crate::validation::{validate_detailed, ValidationReport, ValidationThresholds};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ProsodyConfig {
    pub min_pause_ms: f64,
    pub weights: ProminenceWeights,
}

impl Default for ProsodyConfig {
    fn default() -> Self {
        Self { min_pause_ms: DEFAULT_MIN_PAUSE_MS, weights: ProminenceWeights::default() }
    }
}

/// Every tunable threshold of the analysis.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PipelineConfig {
    pub validation: ValidationThresholds,
    pub gop: GopThresholds,
    pub unclear_margin: f64,
    pub prosody: ProsodyConfig,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self {
            validation: ValidationThresholds::default(),
            gop: GopThresholds::default(),
            unclear_margin: DEFAULT_UNCLEAR_MARGIN,
            prosody: ProsodyConfig::default(),
        }
    }
}

impl PipelineConfig {
    /// Rejects values outside their documented ranges.
    pub fn check(&self) -> Result<(), String> {
        let v = &self.validation;
        let mut problems = Vec::new();
        let mut need = |ok: bool, what: &str| {
            if !ok {
                problems.push(what.to_string());
            }
        };
        need(v.min_rate > 0.0 && v.min_rate < v.max_rate && v.max_rate <= 100.0, "validation rate bounds need 0 < min_rate < max_rate <= 100");
        need((0.0..=1.0).contains(&v.min_voiced_fraction), "validation.min_voiced_fraction must be in [0, 1]");
        need((-120.0..=0.0).contains(&v.energy_floor_db), "validation.energy_floor_db must be in [-120, 0]");
        need((0.0..=1.0).contains(&v.max_per), "validation.max_per must be in [0, 1]");
        for (name, tau) in [("gop.vowel", self.gop.vowel), ("gop.consonant", self.gop.consonant)] {
            need((-20.0..=0.0).contains(&tau), &format!("{name} must be in [-20, 0]"));
        }
        need((0.0..=1.0).contains(&self.unclear_margin), "unclear_margin must be in [0, 1]");
        let p = &self.prosody;
        need((0.0..=5000.0).contains(&p.min_pause_ms), "prosody.min_pause_ms must be in [0, 5000]");
        let w = &p.weights;
        need(
            [w.f0, w.energy, w.duration].iter().all(|x| (0.0..=1.0).contains(x)) && w.f0 + w.energy + w.duration > 0.0,
            "prosody.weights must be in [0, 1] and not all zero",
        );
        if problems.is_empty() {
            Ok(())
        } else {
            Err(problems.join("; "))
        }
    }
}

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error(transparent)]
    Audio(#[from] WavError),
    #[error(transparent)]
    Acoustic(#[from] AcousticError),
    #[error("alignment failed: {0}")]
    Align(#[from] AlignError),
}

/// Decodes WAV bytes and brings them to the processing rate.
pub fn ingest_wav(bytes: &[u8]) -> Result<AudioBuffer, WavError> {
    let audio = decode_wav(bytes)?;
    Ok(resample(&audio, PROCESSING_RATE))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "outcome", content = "result", rename_all = "snake_case")]
pub enum Outcome {
    Analyzed(Box<AnalysisResult>),
    Rejected(ValidationReport),
}

impl Outcome {
    pub fn is_analyzed(&self) -> bool {
        matches!(self, Outcome::Analyzed(_))
    }

    /// JSON body of the outcome without the envelope.
    pub fn body_json(&self) -> String {
        match self {
            Outcome::Analyzed(r) => serde_json::to_string_pretty(r),
            Outcome::Rejected(r) => serde_json::to_string_pretty(r),
        }
        .expect("analysis serializes")
    }
}

/// Per-phoneme verdicts with the class-specific GOP threshold.
pub fn score_segments(
    ppg: &Posteriorgram,
    alignment: &AlignmentResult,
    inv: &PhoneInventory,
    gop: &GopThresholds,
) -> Vec<PhonemeVerdict> {
    alignment
        .segments
        .iter()
        .map(|seg| verdict(seg, segment_gop(ppg, seg), gop.for_phone(inv, seg.expected)))
        .collect()
}

pub fn score_minimal_pairs(
    ppg: &Posteriorgram,
    alignment: &AlignmentResult,
    script: &ExerciseScript,
    margin: f64,
) -> Vec<MinimalPairResult> {
    let offsets = script.word_offsets();
    script
        .minimal_pairs
        .iter()
        .map(|spec| {
            let seg = &alignment.segments[offsets[spec.word_index] + spec.phoneme_index];
            minimal_pair(ppg, seg, spec, margin)
        })
        .collect()
}

/// Runs the full analysis on audio already at the processing rate.
///
/// Failed validation is an [`Outcome::Rejected`], not an error.
pub fn analyze(
    audio: &AudioBuffer,
    ppg: &Posteriorgram,
    script: &ExerciseScript,
    inv: &PhoneInventory,
    cfg: &PipelineConfig,
    exec: Execution,
) -> Result<Outcome, PipelineError> {
    ppg.ensure_inventory(inv)?;
    let validation = validate_detailed(audio, ppg, script, &cfg.validation, exec);
    if !validation.report.overall {
        return Ok(Outcome::Rejected(validation.report));
    }
    let track = validation
        .pitch
        .unwrap_or_else(|| yin_f0(audio, &YinParams::default(), exec));

    let expected = script.flatten_expected();
    let alignment = forced_align(ppg, &expected)?;
    let verdicts = score_segments(ppg, &alignment, inv, &cfg.gop);
    let pairs = score_minimal_pairs(ppg, &alignment, script, cfg.unclear_margin);

    let weights = &cfg.prosody.weights;
    let prominences = syllable_prominence(&alignment, &track, script, inv, weights);
    let prosody = ProsodyAnalysis {
        word_stress: word_stress_all(script, &prominences),
        sentence_stress: sentence_stress(&alignment, &track, script, inv, weights),
        pauses: detect_pauses_and_groups(&alignment, script, cfg.prosody.min_pause_ms),
    };

    Ok(Outcome::Analyzed(Box::new(build_feedback(
        &validation.report,
        &alignment,
        &verdicts,
        &pairs,
        prosody,
        script,
        inv,
    ))))
}
