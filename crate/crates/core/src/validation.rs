//! Gate deciding whether a recording is a usable speech sample.
//!
//! Three checks run in a fixed order: speech rate, voicing, phonetic
//! proximity. The first failure stops the chain; later checks are reported
//! as not evaluated.

use serde::{Deserialize, Serialize};

use crate::acoustic::Posteriorgram;
use crate::alignment::{free_decode, levenshtein};
use crate::audio::AudioBuffer;
use crate::exec::Execution;
use crate::inventory::{ExerciseScript, Phone};
use crate::prosody::{yin_f0, PitchTrack, YinParams};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ValidationThresholds {
    /// Phonemes per second.
    pub min_rate: f64,
    pub max_rate: f64,
    pub min_voiced_fraction: f64,
    pub min_voiced_frames: usize,
    /// Frames quieter than this never count as voiced, dBFS.
    pub energy_floor_db: f64,
    pub max_per: f64,
}

impl Default for ValidationThresholds {
    fn default() -> Self {
        Self {
            min_rate: 2.0,
            max_rate: 25.0,
            min_voiced_fraction: 0.05,
            min_voiced_frames: 10,
            energy_floor_db: -45.0,
            max_per: 0.6,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DurationCheck {
    pub phoneme_rate: f64,
    pub ok: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct VoicingCheck {
    pub voiced_fraction: f64,
    pub voiced_frames: usize,
    pub ok: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ProximityCheck {
    pub per: f64,
    pub ok: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Skipped {
    NotEvaluated,
}

/// Outcome of a check, or a marker that it never ran.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Check<T> {
    Evaluated(T),
    Skipped(Skipped),
}

impl<T> Check<T> {
    pub const NOT_EVALUATED: Self = Check::Skipped(Skipped::NotEvaluated);

    pub fn evaluated(&self) -> Option<&T> {
        match self {
            Check::Evaluated(t) => Some(t),
            Check::Skipped(_) => None,
        }
    }

    pub fn is_evaluated(&self) -> bool {
        matches!(self, Check::Evaluated(_))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FailedCheck {
    Duration,
    Voicing,
    Proximity,
}

impl FailedCheck {
    pub fn code(self) -> &'static str {
        match self {
            FailedCheck::Duration => "duration",
            FailedCheck::Voicing => "voicing",
            FailedCheck::Proximity => "proximity",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ValidationReport {
    pub duration_check: Check<DurationCheck>,
    pub voicing_check: Check<VoicingCheck>,
    pub proximity_check: Check<ProximityCheck>,
    pub overall: bool,
    pub failed_code: Option<FailedCheck>,
}

pub fn check_duration(expected_count: usize, duration_ms: f64, th: &ValidationThresholds) -> DurationCheck {
    let phoneme_rate = expected_count as f64 / (duration_ms / 1000.0);
    DurationCheck {
        phoneme_rate,
        ok: (th.min_rate..=th.max_rate).contains(&phoneme_rate),
    }
}

/// Share of pitch frames that are both voiced and above the energy floor.
pub fn voicing_from_track(track: &PitchTrack, th: &ValidationThresholds) -> VoicingCheck {
    let voiced_frames = track
        .frames
        .iter()
        .filter(|f| f.is_voiced() && f.energy_db > th.energy_floor_db)
        .count();
    let voiced_fraction = if track.frames.is_empty() {
        0.0
    } else {
        voiced_frames as f64 / track.frames.len() as f64
    };
    VoicingCheck {
        voiced_fraction,
        voiced_frames,
        ok: voiced_fraction >= th.min_voiced_fraction && voiced_frames >= th.min_voiced_frames,
    }
}

pub fn check_voicing(audio: &AudioBuffer, th: &ValidationThresholds) -> VoicingCheck {
    voicing_from_track(&yin_f0(audio, &YinParams::default(), Execution::default()), th)
}

/// Phoneme error rate of the free decode against the expected sequence.
pub fn check_proximity(ppg: &Posteriorgram, expected: &[Phone], th: &ValidationThresholds) -> ProximityCheck {
    let decoded = free_decode(ppg);
    let per = levenshtein(&decoded, expected) as f64 / expected.len().max(1) as f64;
    ProximityCheck { per, ok: per <= th.max_per }
}

/// Validation report plus the pitch track, when the voicing check got far
/// enough to compute one.
#[derive(Debug, Clone)]
pub struct Validation {
    pub report: ValidationReport,
    pub pitch: Option<PitchTrack>,
}

pub fn validate_detailed(
    audio: &AudioBuffer,
    ppg: &Posteriorgram,
    script: &ExerciseScript,
    th: &ValidationThresholds,
    exec: Execution,
) -> Validation {
    let expected: Vec<Phone> = script.flatten_expected().iter().map(|e| e.phone).collect();
    let mut report = ValidationReport {
        duration_check: Check::NOT_EVALUATED,
        voicing_check: Check::NOT_EVALUATED,
        proximity_check: Check::NOT_EVALUATED,
        overall: false,
        failed_code: None,
    };

    let duration = check_duration(expected.len(), audio.duration_ms(), th);
    report.duration_check = Check::Evaluated(duration);
    if !duration.ok {
        report.failed_code = Some(FailedCheck::Duration);
        return Validation { report, pitch: None };
    }

    let track = yin_f0(audio, &YinParams::default(), exec);
    let voicing = voicing_from_track(&track, th);
    report.voicing_check = Check::Evaluated(voicing);
    if !voicing.ok {
        report.failed_code = Some(FailedCheck::Voicing);
        return Validation { report, pitch: Some(track) };
    }

    let proximity = check_proximity(ppg, &expected, th);
    report.proximity_check = Check::Evaluated(proximity);
    if !proximity.ok {
        report.failed_code = Some(FailedCheck::Proximity);
    } else {
        report.overall = true;
    }
    Validation { report, pitch: Some(track) }
}

pub fn validate(
    audio: &AudioBuffer,
    ppg: &Posteriorgram,
    script: &ExerciseScript,
    th: &ValidationThresholds,
) -> ValidationReport {
    validate_detailed(audio, ppg, script, th, Execution::default()).report
}
