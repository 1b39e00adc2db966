//! Phoneme posteriorgrams and the providers that produce them.
//!
//! A [`Posteriorgram`] is the only interface between an acoustic model and
//! the rest of the analysis. This crate ships no model; providers either
//! read a posteriorgram computed elsewhere or synthesize one.

use std::path::{Path, PathBuf};
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::audio::{rms_db, AudioBuffer};
use crate::inventory::{ExerciseScript, Phone, PhoneInventory};

/// Frame stride of posteriorgrams produced by the built-in providers.
pub const DEFAULT_HOP_MS: u32 = 20;
/// Probability mass put on the active phoneme by synthesized posteriorgrams.
pub const DEMO_PEAK: f64 = 0.9;
/// Activity threshold of the demo provider, above the estimated noise floor.
pub const DEMO_ACTIVITY_MARGIN_DB: f64 = 15.0;
/// Upper bound on the demo provider's noise-floor estimate.
pub const DEMO_MAX_NOISE_FLOOR_DB: f64 = -60.0;
const ROW_SUM_TOLERANCE: f64 = 1e-3;

#[derive(Debug, Error)]
pub enum AcousticError {
    #[error("frame {frame}: probabilities sum to {sum}")]
    RowSum { frame: usize, sum: f64 },
    #[error("frame {frame}, phone {phone}: probability {value} outside [0, 1]")]
    OutOfRange { frame: usize, phone: usize, value: f64 },
    #[error("frame {frame} has {found} values, inventory has {expected} phones")]
    RowWidth { frame: usize, expected: usize, found: usize },
    #[error("phone inventory mismatch: {0}")]
    InventoryMismatch(String),
    #[error("malformed posteriorgram: {0}")]
    Malformed(String),
    #[error("segments overlap: {0}")]
    Overlap(String),
    #[error("invalid error plan: {0}")]
    ErrorPlan(String),
    #[error("no posteriorgram available: {0}")]
    Unavailable(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Frames x phones matrix of per-frame posterior probabilities.
#[derive(Debug, Clone, PartialEq)]
pub struct Posteriorgram {
    hop_ms: u32,
    inventory: Arc<PhoneInventory>,
    frames: usize,
    data: Vec<f64>,
}

impl Posteriorgram {
    /// Validates rows against the inventory: width, range and unit sum.
    pub fn new(hop_ms: u32, inventory: Arc<PhoneInventory>, rows: Vec<Vec<f64>>) -> Result<Self, AcousticError> {
        if hop_ms == 0 {
            return Err(AcousticError::Malformed("hop_ms must be positive".into()));
        }
        let width = inventory.len();
        let mut data = Vec::with_capacity(rows.len() * width);
        for (frame, row) in rows.iter().enumerate() {
            if row.len() != width {
                return Err(AcousticError::RowWidth { frame, expected: width, found: row.len() });
            }
            for (phone, &value) in row.iter().enumerate() {
                if !(0.0..=1.0).contains(&value) {
                    return Err(AcousticError::OutOfRange { frame, phone, value });
                }
            }
            let sum: f64 = row.iter().sum();
            if (sum - 1.0).abs() > ROW_SUM_TOLERANCE {
                return Err(AcousticError::RowSum { frame, sum });
            }
            data.extend_from_slice(row);
        }
        Ok(Self { hop_ms, inventory, frames: rows.len(), data })
    }

    pub fn hop_ms(&self) -> u32 {
        self.hop_ms
    }

    pub fn inventory(&self) -> &Arc<PhoneInventory> {
        &self.inventory
    }

    pub fn frames(&self) -> usize {
        self.frames
    }

    pub fn phones(&self) -> usize {
        self.inventory.len()
    }

    pub fn is_empty(&self) -> bool {
        self.frames == 0
    }

    pub fn row(&self, frame: usize) -> &[f64] {
        let w = self.phones();
        &self.data[frame * w..(frame + 1) * w]
    }

    pub fn rows(&self) -> impl ExactSizeIterator<Item = &[f64]> {
        self.data.chunks_exact(self.phones().max(1)).take(self.frames)
    }

    pub fn prob(&self, frame: usize, phone: Phone) -> f64 {
        self.row(frame)[phone.index()]
    }

    /// Most probable phone of a frame; ties go to the lower index.
    pub fn argmax(&self, frame: usize) -> Phone {
        let row = self.row(frame);
        let mut best = 0;
        for (i, &p) in row.iter().enumerate().skip(1) {
            if p > row[best] {
                best = i;
            }
        }
        Phone(best as u16)
    }

    pub fn frame_start_ms(&self, frame: usize) -> f64 {
        (frame as u64 * self.hop_ms as u64) as f64
    }

    pub fn duration_ms(&self) -> f64 {
        self.frame_start_ms(self.frames)
    }

    /// Copy with `lead` all-SIL frames before and `trail` after.
    pub fn padded_with_silence(&self, lead: usize, trail: usize) -> Self {
        let w = self.phones();
        let mut sil = vec![0.0; w];
        sil[0] = 1.0;
        let mut data = Vec::with_capacity((self.frames + lead + trail) * w);
        (0..lead).for_each(|_| data.extend_from_slice(&sil));
        data.extend_from_slice(&self.data);
        (0..trail).for_each(|_| data.extend_from_slice(&sil));
        Self {
            hop_ms: self.hop_ms,
            inventory: self.inventory.clone(),
            frames: self.frames + lead + trail,
            data,
        }
    }

    pub fn ensure_inventory(&self, inv: &PhoneInventory) -> Result<(), AcousticError> {
        check_inventory(inv, self.inventory.symbols())
    }
}

fn check_inventory(inv: &PhoneInventory, phones: &[String]) -> Result<(), AcousticError> {
    if phones.len() != inv.len() {
        return Err(AcousticError::InventoryMismatch(format!(
            "file lists {} phones, inventory has {}",
            phones.len(),
            inv.len()
        )));
    }
    if let Some((i, (found, want))) = phones.iter().zip(inv.symbols()).enumerate().find(|(_, (a, b))| a != b) {
        return Err(AcousticError::InventoryMismatch(format!(
            "phone {i} is '{found}', inventory has '{want}'"
        )));
    }
    Ok(())
}

/// On-disk posteriorgram layout.
#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PpgFile {
    pub hop_ms: u32,
    pub phones: Vec<String>,
    pub frames: Vec<Vec<f64>>,
}

pub fn parse_ppg(json: &str, inv: Arc<PhoneInventory>) -> Result<Posteriorgram, AcousticError> {
    let file: PpgFile = serde_json::from_str(json).map_err(|e| AcousticError::Malformed(e.to_string()))?;
    check_inventory(&inv, &file.phones)?;
    Posteriorgram::new(file.hop_ms, inv, file.frames)
}

pub fn load_ppg(path: impl AsRef<Path>, inv: Arc<PhoneInventory>) -> Result<Posteriorgram, AcousticError> {
    parse_ppg(&std::fs::read_to_string(path)?, inv)
}

pub fn ppg_to_json(ppg: &Posteriorgram) -> String {
    let file = PpgFile {
        hop_ms: ppg.hop_ms,
        phones: ppg.inventory.symbols().to_vec(),
        frames: ppg.rows().map(<[f64]>::to_vec).collect(),
    };
    serde_json::to_string(&file).expect("posteriorgram serializes")
}

pub fn store_ppg(ppg: &Posteriorgram, path: impl AsRef<Path>) -> Result<(), AcousticError> {
    std::fs::write(path, ppg_to_json(ppg))?;
    Ok(())
}

/// A phoneme occupying `[start_ms, end_ms)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TimedPhone {
    pub phone: Phone,
    pub start_ms: f64,
    pub end_ms: f64,
}

impl TimedPhone {
    pub fn new(phone: Phone, start_ms: f64, end_ms: f64) -> Self {
        Self { phone, start_ms, end_ms }
    }
}

fn to_frame(ms: f64, hop_ms: u32) -> usize {
    (ms / hop_ms as f64).round().max(0.0) as usize
}

/// Builds a posteriorgram that puts `peak` on the active phoneme of each
/// frame and spreads the rest evenly. Frames outside every segment peak on
/// `SIL`.
///
/// Segment `[s, e)` covers frames `round(s/hop)..round(e/hop)`. The frame
/// count is `floor(duration_ms / hop)` when a duration is given, otherwise
/// it ends with the last segment.
pub fn synth_posteriorgram(
    segments: &[TimedPhone],
    duration_ms: Option<f64>,
    hop_ms: u32,
    peak: f64,
    inv: Arc<PhoneInventory>,
) -> Result<Posteriorgram, AcousticError> {
    let width = inv.len();
    if !(peak > 1.0 / width as f64 && peak <= 1.0) {
        return Err(AcousticError::Malformed(format!("peak {peak} must be in (1/{width}, 1]")));
    }
    for pair in segments.windows(2) {
        if pair[1].start_ms < pair[0].end_ms {
            return Err(AcousticError::Overlap(format!(
                "[{}, {}) and [{}, {})",
                pair[0].start_ms, pair[0].end_ms, pair[1].start_ms, pair[1].end_ms
            )));
        }
    }
    if let Some(s) = segments.iter().find(|s| s.end_ms < s.start_ms || s.start_ms < 0.0) {
        return Err(AcousticError::Malformed(format!("bad segment [{}, {})", s.start_ms, s.end_ms)));
    }

    let frames = match duration_ms {
        Some(d) => (d / hop_ms as f64).floor() as usize,
        None => segments.last().map_or(0, |s| to_frame(s.end_ms, hop_ms)),
    };
    let mut active = vec![Phone::SIL; frames];
    for seg in segments {
        let lo = to_frame(seg.start_ms, hop_ms).min(frames);
        let hi = to_frame(seg.end_ms, hop_ms).min(frames);
        active[lo..hi].fill(seg.phone);
    }

    let rest = if width > 1 { (1.0 - peak) / (width - 1) as f64 } else { 0.0 };
    // the peak absorbs rounding so each row sums to 1 in index order
    let others = (0..width - 1).fold(0.0, |acc, _| acc + rest);
    let top = 1.0 - others;
    let mut data = Vec::with_capacity(frames * width);
    for phone in active {
        let start = data.len();
        data.resize(start + width, rest);
        data[start + phone.index()] = top;
    }
    Ok(Posteriorgram { hop_ms, inventory: inv, frames, data })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ProviderKind {
    Fixture,
    Demo,
    External,
}

/// Produces a posteriorgram for a recording of a scripted utterance.
pub trait PosteriorProvider: Send + Sync {
    fn kind(&self) -> ProviderKind;

    fn provide(&self, audio: &AudioBuffer, script: &ExerciseScript) -> Result<Posteriorgram, AcousticError>;
}

/// Reads `<dir>/<exercise id>.json`.
#[derive(Debug, Clone)]
pub struct FixtureProvider {
    dir: PathBuf,
    inventory: Arc<PhoneInventory>,
}

impl FixtureProvider {
    pub fn new(dir: impl Into<PathBuf>, inventory: Arc<PhoneInventory>) -> Self {
        Self { dir: dir.into(), inventory }
    }
}

impl PosteriorProvider for FixtureProvider {
    fn kind(&self) -> ProviderKind {
        ProviderKind::Fixture
    }

    fn provide(&self, _audio: &AudioBuffer, script: &ExerciseScript) -> Result<Posteriorgram, AcousticError> {
        let path = self.dir.join(format!("{}.json", script.id));
        if !path.is_file() {
            return Err(AcousticError::Unavailable(format!("no fixture at {}", path.display())));
        }
        load_ppg(path, self.inventory.clone())
    }
}

/// Replace `from` with `to`, optionally only inside one word.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Substitution {
    pub from: String,
    pub to: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub word_index: Option<usize>,
}

/// Offline stand-in for an acoustic model.
///
/// Finds the active region of the recording, spreads the expected phonemes
/// uniformly across it (after applying the error plan) and synthesizes a
/// posteriorgram with [`DEMO_PEAK`].
#[derive(Debug, Clone)]
pub struct DemoProvider {
    inventory: Arc<PhoneInventory>,
    plan: Vec<(Phone, Phone, Option<usize>)>,
}

impl DemoProvider {
    pub fn new(inventory: Arc<PhoneInventory>, error_plan: &[Substitution]) -> Result<Self, AcousticError> {
        let resolve = |s: &str| {
            inventory
                .lookup(s)
                .ok_or_else(|| AcousticError::ErrorPlan(format!("unknown phoneme '{s}'")))
        };
        let plan = error_plan
            .iter()
            .map(|s| Ok((resolve(&s.from)?, resolve(&s.to)?, s.word_index)))
            .collect::<Result<_, AcousticError>>()?;
        Ok(Self { inventory, plan })
    }

    fn substitute(&self, phone: Phone, word: usize) -> Phone {
        self.plan
            .iter()
            .find(|(from, _, w)| *from == phone && w.is_none_or(|w| w == word))
            .map_or(phone, |&(_, to, _)| to)
    }
}

/// First and last frame (inclusive) of `hop_ms` blocks whose level exceeds
/// the noise floor by [`DEMO_ACTIVITY_MARGIN_DB`].
pub fn active_region(audio: &AudioBuffer, hop_ms: u32) -> Option<(usize, usize)> {
    let block = (audio.sample_rate() as u64 * hop_ms as u64 / 1000) as usize;
    if block == 0 {
        return None;
    }
    let levels: Vec<f64> = audio.samples().chunks_exact(block).map(rms_db).collect();
    if levels.is_empty() {
        return None;
    }
    let mut sorted = levels.clone();
    sorted.sort_by(f64::total_cmp);
    let floor = sorted[sorted.len() / 10].min(DEMO_MAX_NOISE_FLOOR_DB);
    let threshold = floor + DEMO_ACTIVITY_MARGIN_DB;
    let first = levels.iter().position(|&l| l > threshold)?;
    let last = levels.iter().rposition(|&l| l > threshold)?;
    Some((first, last))
}

impl PosteriorProvider for DemoProvider {
    fn kind(&self) -> ProviderKind {
        ProviderKind::Demo
    }

    fn provide(&self, audio: &AudioBuffer, script: &ExerciseScript) -> Result<Posteriorgram, AcousticError> {
        let hop = DEFAULT_HOP_MS;
        let expected = script.flatten_expected();
        let segments = match active_region(audio, hop) {
            Some((first, last)) if !expected.is_empty() => {
                let start = (first as u64 * hop as u64) as f64;
                let span = ((last + 1 - first) as u64 * hop as u64) as f64;
                let n = expected.len() as f64;
                expected
                    .iter()
                    .enumerate()
                    .map(|(i, e)| {
                        TimedPhone::new(
                            self.substitute(e.phone, e.word_index),
                            start + span * i as f64 / n,
                            start + span * (i + 1) as f64 / n,
                        )
                    })
                    .collect()
            }
            _ => Vec::new(),
        };
        synth_posteriorgram(&segments, Some(audio.duration_ms()), hop, DEMO_PEAK, self.inventory.clone())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::inventory::{parse_phoneme_string, Span, WordScript};

    fn inv() -> Arc<PhoneInventory> {
        PhoneInventory::default_shared()
    }

    fn ph(s: &str) -> Phone {
        inv().lookup(s).unwrap()
    }

    fn argmax_runs(ppg: &Posteriorgram) -> Vec<(Phone, usize, usize)> {
        let mut runs: Vec<(Phone, usize, usize)> = Vec::new();
        for t in 0..ppg.frames() {
            let p = ppg.argmax(t);
            match runs.last_mut() {
                Some(last) if last.0 == p => last.2 = t,
                _ => runs.push((p, t, t)),
            }
        }
        runs
    }

    #[test]
    fn one_hot_file_loads() {
        let inv = inv();
        let mut frames = vec![vec![0.0; 40]; 3];
        frames[0][0] = 1.0;
        frames[1][5] = 1.0;
        frames[2][0] = 1.0;
        let json = serde_json::to_string(&PpgFile { hop_ms: 20, phones: inv.symbols().to_vec(), frames }).unwrap();
        let ppg = parse_ppg(&json, inv).unwrap();
        assert_eq!(ppg.frames(), 3);
        assert_eq!(ppg.argmax(1), Phone(5));
    }

    #[test]
    fn bad_row_sum_reports_frame() {
        let inv = inv();
        let mut frames = vec![vec![0.0; 40]; 3];
        frames[0][0] = 1.0;
        frames[1][0] = 0.5;
        frames[2][0] = 1.0;
        let json = serde_json::to_string(&PpgFile { hop_ms: 20, phones: inv.symbols().to_vec(), frames }).unwrap();
        assert!(matches!(parse_ppg(&json, inv), Err(AcousticError::RowSum { frame: 1, .. })));
    }

    #[test]
    fn short_phone_list_is_mismatch() {
        let inv = inv();
        let json = serde_json::to_string(&PpgFile {
            hop_ms: 20,
            phones: inv.symbols()[..12].to_vec(),
            frames: vec![vec![1.0 / 12.0; 12]],
        })
        .unwrap();
        assert!(matches!(parse_ppg(&json, inv), Err(AcousticError::InventoryMismatch(_))));
        assert!(matches!(parse_ppg("{\"hop_ms\":20}", PhoneInventory::default_shared()), Err(AcousticError::Malformed(_))));
    }

    #[test]
    fn synth_cat() {
        let segs = [
            TimedPhone::new(ph("K"), 0.0, 100.0),
            TimedPhone::new(ph("AE"), 100.0, 300.0),
            TimedPhone::new(ph("T"), 300.0, 400.0),
        ];
        let ppg = synth_posteriorgram(&segs, None, 20, 0.9, inv()).unwrap();
        assert_eq!(ppg.frames(), 20);
        assert_eq!(argmax_runs(&ppg), vec![(ph("K"), 0, 4), (ph("AE"), 5, 14), (ph("T"), 15, 19)]);
        for row in ppg.rows() {
            assert!((row.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn synth_degenerate_cases() {
        let empty = synth_posteriorgram(&[], Some(100.0), 20, 0.9, inv()).unwrap();
        assert_eq!(empty.frames(), 5);
        assert!((0..5).all(|t| empty.argmax(t) == Phone::SIL));

        let segs = [TimedPhone::new(ph("AA"), 0.0, 60.0)];
        let one_hot = synth_posteriorgram(&segs, None, 20, 1.0, inv()).unwrap();
        for row in one_hot.rows() {
            assert!(row.iter().all(|&p| p == 0.0 || p == 1.0));
        }

        let overlapping = [TimedPhone::new(ph("AA"), 0.0, 60.0), TimedPhone::new(ph("B"), 40.0, 80.0)];
        assert!(matches!(
            synth_posteriorgram(&overlapping, None, 20, 0.9, inv()),
            Err(AcousticError::Overlap(_))
        ));
    }

    fn script(phones: &str) -> ExerciseScript {
        let inv = inv();
        let phonemes = parse_phoneme_string(phones, &inv).unwrap();
        let n = phonemes.len();
        ExerciseScript {
            id: "demo".into(),
            text: "demo".into(),
            words: vec![WordScript {
                text: "w".into(),
                phonemes,
                syllables: vec![Span::new(0, n - 1)],
                primary_stress: 0,
                content_word: true,
            }],
            sentence_stress_words: vec![],
            breath_groups: vec![Span::new(0, 0)],
            minimal_pairs: vec![],
            reference_audio: vec![],
        }
    }

    fn tone_in_silence(lead_ms: usize, tone_ms: usize, trail_ms: usize) -> AudioBuffer {
        let rate = 16;
        let mut samples = vec![0.0f32; lead_ms * rate];
        samples.extend((0..tone_ms * rate).map(|i| 0.3 * (i as f32 * 0.1).sin()));
        samples.extend(vec![0.0f32; trail_ms * rate]);
        AudioBuffer::new(samples, 16_000)
    }

    #[test]
    fn demo_spreads_over_active_region() {
        // tone occupies 200..1200 ms of a 1400 ms clip
        let audio = tone_in_silence(200, 1000, 200);
        let provider = DemoProvider::new(inv(), &[]).unwrap();
        let ppg = provider.provide(&audio, &script("S IH T AE N")).unwrap();
        assert_eq!(ppg.frames(), 70);
        // 1000 ms / 5 phonemes = 200 ms = 10 frames each, starting at frame 10
        let runs = argmax_runs(&ppg);
        let expected = vec![
            (Phone::SIL, 0, 9),
            (ph("S"), 10, 19),
            (ph("IH"), 20, 29),
            (ph("T"), 30, 39),
            (ph("AE"), 40, 49),
            (ph("N"), 50, 59),
            (Phone::SIL, 60, 69),
        ];
        assert_eq!(runs, expected);
    }

    #[test]
    fn demo_substitution_and_silence() {
        let audio = tone_in_silence(0, 600, 0);
        let plan = [Substitution { from: "AE".into(), to: "AH".into(), word_index: None }];
        let provider = DemoProvider::new(inv(), &plan).unwrap();
        let ppg = provider.provide(&audio, &script("K AE T")).unwrap();
        let runs = argmax_runs(&ppg);
        assert_eq!(runs.iter().map(|r| r.0).collect::<Vec<_>>(), vec![ph("K"), ph("AH"), ph("T")]);

        let silent = AudioBuffer::new(vec![0.0; 16_000], 16_000);
        let ppg = provider.provide(&silent, &script("K AE T")).unwrap();
        assert_eq!(ppg.frames(), 50);
        assert!((0..50).all(|t| ppg.argmax(t) == Phone::SIL));

        let bad = [Substitution { from: "QQ".into(), to: "AH".into(), word_index: None }];
        assert!(DemoProvider::new(inv(), &bad).is_err());
    }
}
