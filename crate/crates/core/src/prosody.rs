//! Supra-segmental analysis: pitch tracking, stress and pauses.

use serde::{Deserialize, Serialize};

use crate::alignment::{AlignmentResult, PhoneSegment, SilenceLocation};
use crate::audio::{rms_db, AudioBuffer, DB_EPSILON};
use crate::exec::{map_range, Execution};
use crate::inventory::{ExerciseScript, PhoneInventory, Span, WordScript};

pub const PITCH_HOP_MS: f64 = 10.0;
pub const PITCH_WINDOW_MS: f64 = 40.0;
pub const DEFAULT_MIN_PAUSE_MS: f64 = 250.0;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct YinParams {
    pub window_ms: f64,
    pub hop_ms: f64,
    pub fmin: f64,
    pub fmax: f64,
    pub threshold: f64,
}

impl Default for YinParams {
    fn default() -> Self {
        Self {
            window_ms: PITCH_WINDOW_MS,
            hop_ms: PITCH_HOP_MS,
            fmin: 60.0,
            fmax: 500.0,
            threshold: 0.2,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PitchFrame {
    /// `None` when unvoiced.
    pub f0: Option<f64>,
    pub aperiodicity: f64,
    pub energy_db: f64,
}

impl PitchFrame {
    pub fn is_voiced(&self) -> bool {
        self.f0.is_some()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PitchTrack {
    pub hop_ms: f64,
    pub frames: Vec<PitchFrame>,
}

impl PitchTrack {
    /// Frames covering `[start_ms, end_ms)`, mapped by flooring.
    pub fn frames_between(&self, start_ms: f64, end_ms: f64) -> &[PitchFrame] {
        let lo = ((start_ms / self.hop_ms).floor().max(0.0) as usize).min(self.frames.len());
        let hi = ((end_ms / self.hop_ms).floor().max(0.0) as usize).clamp(lo, self.frames.len());
        &self.frames[lo..hi]
    }

    pub fn voiced_fraction(&self) -> f64 {
        if self.frames.is_empty() {
            return 0.0;
        }
        self.frames.iter().filter(|f| f.is_voiced()).count() as f64 / self.frames.len() as f64
    }
}

/// YIN estimate for a single window: cumulative-mean-normalized difference
/// function, absolute threshold, then parabolic refinement of the lag.
///
/// `scratch` must hold at least `tau_max + 1` values.
fn yin_window(window: &[f32], sample_rate: f64, p: &YinParams, scratch: &mut [f64]) -> (Option<f64>, f64) {
    let tau_min = ((sample_rate / p.fmax).floor() as usize).max(2);
    let tau_max = (sample_rate / p.fmin).ceil() as usize;
    if tau_max + 2 >= window.len() {
        return (None, 1.0);
    }
    let span = window.len() - tau_max - 1;
    let d = &mut scratch[..=tau_max + 1];

    d[0] = 1.0;
    let mut running = 0.0;
    for tau in 1..=tau_max + 1 {
        let mut acc = 0.0;
        for j in 0..span {
            let diff = (window[j] - window[j + tau]) as f64;
            acc += diff * diff;
        }
        running += acc;
        d[tau] = if running > 0.0 { acc * tau as f64 / running } else { 1.0 };
    }

    let mut found = None;
    let mut tau = tau_min;
    while tau <= tau_max {
        if d[tau] < p.threshold {
            while tau < tau_max && d[tau + 1] < d[tau] {
                tau += 1;
            }
            found = Some(tau);
            break;
        }
        tau += 1;
    }
    let Some(tau) = found else {
        let floor = d[tau_min..=tau_max].iter().copied().fold(f64::INFINITY, f64::min);
        return (None, floor.clamp(p.threshold, 1.0));
    };

    let (a, b, c) = (d[tau - 1], d[tau], d[tau + 1]);
    let denom = a - 2.0 * b + c;
    let shift = if denom.abs() > 1e-12 { ((a - c) / (2.0 * denom)).clamp(-1.0, 1.0) } else { 0.0 };
    let f0 = sample_rate / (tau as f64 + shift);
    let aperiodicity = b.clamp(0.0, 1.0);
    if (p.fmin..=p.fmax).contains(&f0) {
        (Some(f0), aperiodicity)
    } else {
        (None, aperiodicity.max(p.threshold))
    }
}

/// Per-frame f0, aperiodicity and level over `audio`.
pub fn yin_f0(audio: &AudioBuffer, params: &YinParams, exec: Execution) -> PitchTrack {
    let rate = audio.sample_rate();
    let series = crate::audio::frame(audio, params.window_ms, params.hop_ms);
    let tau_max = (rate as f64 / params.fmin).ceil() as usize;
    let frames = map_range(series.len(), exec, |i| {
        let window = series.get(i).expect("index within series");
        let mut scratch = vec![0.0; tau_max + 2];
        let (f0, aperiodicity) = yin_window(window, rate as f64, params, &mut scratch);
        PitchFrame { f0, aperiodicity, energy_db: rms_db(window) }
    });
    PitchTrack { hop_ms: params.hop_ms, frames }
}

// ── prominence ───────────────────────────────────────────────────────────────

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProminenceWeights {
    pub f0: f64,
    pub energy: f64,
    pub duration: f64,
}

impl Default for ProminenceWeights {
    fn default() -> Self {
        Self { f0: 0.4, energy: 0.3, duration: 0.3 }
    }
}

/// Raw acoustic cues of a syllable or word.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ProsodicFeatures {
    /// Mean f0 over voiced frames, `None` without any.
    pub mean_f0: Option<f64>,
    pub mean_energy: f64,
    pub vowel_duration_ms: f64,
}

/// Population z-scores; all zero when the values do not vary.
pub fn z_scores(values: &[f64]) -> Vec<f64> {
    if values.is_empty() {
        return Vec::new();
    }
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
    let std = var.sqrt();
    if std <= 1e-12 * mean.abs().max(1.0) {
        return vec![0.0; values.len()];
    }
    values.iter().map(|v| (v - mean) / std).collect()
}

/// Weighted sum of per-cue z-scores across `features`. Entries without a
/// voiced frame take the group's lowest f0.
pub fn prominence_scores(features: &[ProsodicFeatures], weights: &ProminenceWeights) -> Vec<f64> {
    let min_f0 = features.iter().filter_map(|f| f.mean_f0).fold(f64::INFINITY, f64::min);
    let f0: Vec<f64> = features
        .iter()
        .map(|f| f.mean_f0.unwrap_or(if min_f0.is_finite() { min_f0 } else { 0.0 }))
        .collect();
    let energy: Vec<f64> = features.iter().map(|f| f.mean_energy).collect();
    let duration: Vec<f64> = features.iter().map(|f| f.vowel_duration_ms).collect();
    let (zf, ze, zd) = (z_scores(&f0), z_scores(&energy), z_scores(&duration));
    (0..features.len())
        .map(|i| weights.f0 * zf[i] + weights.energy * ze[i] + weights.duration * zd[i])
        .collect()
}

/// Cues over a group of phone segments. Pitch and duration come from the
/// vowels (all segments when there is no vowel); energy from every frame,
/// or from the vowels only when `vowel_energy` is set.
fn features_of(segments: &[&PhoneSegment], inv: &PhoneInventory, track: &PitchTrack, vowel_energy: bool) -> ProsodicFeatures {
    let vowels: Vec<&PhoneSegment> = segments.iter().copied().filter(|s| inv.is_vowel(s.expected)).collect();
    let nuclei = if vowels.is_empty() { segments.to_vec() } else { vowels };

    let voiced: Vec<f64> = nuclei
        .iter()
        .flat_map(|s| track.frames_between(s.start_ms, s.end_ms))
        .filter_map(|f| f.f0)
        .collect();
    let mean_f0 = (!voiced.is_empty()).then(|| voiced.iter().sum::<f64>() / voiced.len() as f64);

    let energy_segments = if vowel_energy { &nuclei[..] } else { segments };
    let levels: Vec<f64> = energy_segments
        .iter()
        .flat_map(|s| track.frames_between(s.start_ms, s.end_ms))
        .map(|f| f.energy_db)
        .collect();
    let mean_energy = if levels.is_empty() {
        20.0 * DB_EPSILON.log10()
    } else {
        levels.iter().sum::<f64>() / levels.len() as f64
    };

    let vowel_duration_ms = nuclei.iter().map(|s| s.end_ms - s.start_ms).sum();
    ProsodicFeatures { mean_f0, mean_energy, vowel_duration_ms }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SyllableProminence {
    pub word_index: usize,
    pub syllable_index: usize,
    pub mean_f0: Option<f64>,
    pub mean_energy: f64,
    pub vowel_duration_ms: f64,
    pub score: f64,
}

fn word_segment_lists<'a>(alignment: &'a AlignmentResult, script: &ExerciseScript) -> Vec<Vec<&'a PhoneSegment>> {
    let mut lists = vec![Vec::new(); script.words.len()];
    for seg in &alignment.segments {
        lists[seg.word_index].push(seg);
    }
    lists
}

/// Syllable prominence for every word with at least two syllables, z-scored
/// within the word.
pub fn syllable_prominence(
    alignment: &AlignmentResult,
    track: &PitchTrack,
    script: &ExerciseScript,
    inv: &PhoneInventory,
    weights: &ProminenceWeights,
) -> Vec<SyllableProminence> {
    let per_word = word_segment_lists(alignment, script);
    let mut out = Vec::new();
    for (w, word) in script.words.iter().enumerate() {
        if word.syllables.len() < 2 {
            continue;
        }
        let features: Vec<ProsodicFeatures> = word
            .syllables
            .iter()
            .map(|span| {
                let segs: Vec<&PhoneSegment> = span.indices().filter_map(|i| per_word[w].get(i).copied()).collect();
                features_of(&segs, inv, track, false)
            })
            .collect();
        let scores = prominence_scores(&features, weights);
        out.extend(features.iter().zip(scores).enumerate().map(|(s, (f, score))| SyllableProminence {
            word_index: w,
            syllable_index: s,
            mean_f0: f.mean_f0,
            mean_energy: f.mean_energy,
            vowel_duration_ms: f.vowel_duration_ms,
            score,
        }));
    }
    out
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WordStressVerdict {
    pub word_index: usize,
    pub detected_syllable: usize,
    pub expected_syllable: usize,
    pub ok: bool,
    pub scores: Vec<f64>,
}

/// Index of the highest score; the earliest wins ties.
pub fn argmax_first(scores: &[f64]) -> usize {
    let mut best = 0;
    for (i, &s) in scores.iter().enumerate().skip(1) {
        if s > scores[best] {
            best = i;
        }
    }
    best
}

pub fn word_stress(word_index: usize, word: &WordScript, scores: &[f64]) -> WordStressVerdict {
    let detected = argmax_first(scores);
    WordStressVerdict {
        word_index,
        detected_syllable: detected,
        expected_syllable: word.primary_stress,
        ok: detected == word.primary_stress,
        scores: scores.to_vec(),
    }
}

/// Word-stress verdicts for every multi-syllable word of the script.
pub fn word_stress_all(script: &ExerciseScript, prominences: &[SyllableProminence]) -> Vec<WordStressVerdict> {
    script
        .words
        .iter()
        .enumerate()
        .filter(|(_, w)| w.syllables.len() >= 2)
        .map(|(i, w)| {
            let scores: Vec<f64> = prominences.iter().filter(|p| p.word_index == i).map(|p| p.score).collect();
            word_stress(i, w, &scores)
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StressedWordVerdict {
    pub word_index: usize,
    pub ok: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SentenceStressReport {
    pub word_scores: Vec<f64>,
    pub expected: Vec<usize>,
    pub detected: Vec<usize>,
    pub verdicts: Vec<StressedWordVerdict>,
}

impl SentenceStressReport {
    pub fn all_ok(&self) -> bool {
        self.verdicts.iter().all(|v| v.ok)
    }
}

/// The `k` highest-scoring indices in ascending order; ties go to the earlier index.
pub fn top_k(scores: &[f64], k: usize) -> Vec<usize> {
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]).then(a.cmp(&b)));
    order.truncate(k);
    order.sort_unstable();
    order
}

/// Marks each expected stressed word by whether it is among the
/// `expected.len()` most prominent words.
pub fn stress_selection(word_scores: Vec<f64>, expected: &[usize]) -> SentenceStressReport {
    let detected = top_k(&word_scores, expected.len());
    let verdicts = expected
        .iter()
        .map(|&w| StressedWordVerdict { word_index: w, ok: detected.contains(&w) })
        .collect();
    SentenceStressReport { word_scores, expected: expected.to_vec(), detected, verdicts }
}

pub fn sentence_stress(
    alignment: &AlignmentResult,
    track: &PitchTrack,
    script: &ExerciseScript,
    inv: &PhoneInventory,
    weights: &ProminenceWeights,
) -> SentenceStressReport {
    let features: Vec<ProsodicFeatures> = word_segment_lists(alignment, script)
        .iter()
        .map(|segs| features_of(segs, inv, track, true))
        .collect();
    stress_selection(prominence_scores(&features, weights), &script.sentence_stress_words)
}

// ── pauses ───────────────────────────────────────────────────────────────────

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Pause {
    pub start_ms: f64,
    pub end_ms: f64,
    pub after_word: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoundaryMatch {
    pub after_word: usize,
    pub matched: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PauseReport {
    pub pauses: Vec<Pause>,
    pub breath_groups_detected: Vec<Span>,
    /// One entry per expected group boundary.
    pub boundaries: Vec<BoundaryMatch>,
    /// Words followed by a pause where no boundary is expected.
    pub spurious: Vec<usize>,
}

impl PauseReport {
    pub fn all_ok(&self) -> bool {
        self.spurious.is_empty() && self.boundaries.iter().all(|b| b.matched)
    }
}

/// Between-word silences of at least `min_pause_ms` become pauses; detected
/// groups are the word runs between them.
pub fn detect_pauses_and_groups(alignment: &AlignmentResult, script: &ExerciseScript, min_pause_ms: f64) -> PauseReport {
    let pauses: Vec<Pause> = alignment
        .silences
        .iter()
        .filter_map(|s| match s.location {
            SilenceLocation::Between { after_word } if s.duration_ms() >= min_pause_ms => Some(Pause {
                start_ms: s.start_ms,
                end_ms: s.end_ms,
                after_word,
            }),
            _ => None,
        })
        .collect();

    let mut groups = Vec::new();
    let mut first = 0;
    for p in &pauses {
        groups.push(Span::new(first, p.after_word));
        first = p.after_word + 1;
    }
    if !script.words.is_empty() {
        groups.push(Span::new(first, script.words.len() - 1));
    }

    let expected = script.expected_boundaries();
    let boundaries = expected
        .iter()
        .map(|&w| BoundaryMatch { after_word: w, matched: pauses.iter().any(|p| p.after_word == w) })
        .collect();
    let spurious = pauses
        .iter()
        .map(|p| p.after_word)
        .filter(|w| !expected.contains(w))
        .collect();
    PauseReport { pauses, breath_groups_detected: groups, boundaries, spurious }
}
