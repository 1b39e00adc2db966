//! Shared oracles and signal generators for the integration tests.
#![allow(dead_code)]

use std::f64::consts::PI;
use std::sync::Arc;

use capt_core::acoustic::{Posteriorgram, TimedPhone};
use capt_core::alignment::{log_posterior, MIN_PHONE_FRAMES};
use capt_core::audio::AudioBuffer;
use capt_core::inventory::{parse_exercise_catalog, ExerciseScript, ExpectedPhone, Phone, PhoneInventory};
use rand::Rng;
use serde_json::json;

pub const RATE: u32 = 16_000;

pub fn inv() -> Arc<PhoneInventory> {
    PhoneInventory::default_shared()
}

pub fn ph(symbol: &str) -> Phone {
    inv().lookup(symbol).unwrap_or_else(|| panic!("unknown phoneme {symbol}"))
}

/// Expected sequence from per-word phoneme lists.
pub fn expected_from_words(words: &[Vec<Phone>]) -> Vec<ExpectedPhone> {
    words
        .iter()
        .enumerate()
        .flat_map(|(w, phones)| {
            phones.iter().enumerate().map(move |(p, &phone)| ExpectedPhone {
                phone,
                word_index: w,
                position: p,
                word_start: p == 0,
            })
        })
        .collect()
}

/// Random row-stochastic posteriorgram. Some entries are driven to zero so
/// the log floor gets exercised.
pub fn random_ppg<R: Rng>(rng: &mut R, frames: usize) -> Posteriorgram {
    let inv = inv();
    let width = inv.len();
    let rows = (0..frames)
        .map(|_| {
            let mut row: Vec<f64> = (0..width)
                .map(|_| if rng.gen_bool(0.2) { 0.0 } else { -rng.gen::<f64>().max(1e-300).ln() })
                .collect();
            let sum: f64 = row.iter().sum();
            if sum == 0.0 {
                row[0] = 1.0;
            } else {
                row.iter_mut().for_each(|v| *v /= sum);
            }
            row
        })
        .collect();
    Posteriorgram::new(20, inv, rows).expect("rows are normalized")
}

// ── brute-force alignment oracle ─────────────────────────────────────────────

#[derive(Clone, Copy)]
struct Unit {
    phone: Phone,
    min_len: usize,
}

/// Best total log score over every admissible segmentation, by exhaustive
/// enumeration. `None` when no segmentation exists.
///
/// Admissible: optional leading silence, each expected phoneme for at least
/// [`MIN_PHONE_FRAMES`], optional silence after the last phoneme of any word.
/// Scores are summed in time order so they match a Viterbi recursion bit
/// for bit.
pub fn brute_force_best(ppg: &Posteriorgram, expected: &[ExpectedPhone]) -> Option<f64> {
    let mut units = vec![Unit { phone: Phone::SIL, min_len: 0 }];
    for (i, e) in expected.iter().enumerate() {
        units.push(Unit { phone: e.phone, min_len: MIN_PHONE_FRAMES });
        let word_end = expected.get(i + 1).is_none_or(|n| n.word_start);
        if word_end {
            units.push(Unit { phone: Phone::SIL, min_len: 0 });
        }
    }
    let mut tail_need = vec![0; units.len() + 1];
    for u in (0..units.len()).rev() {
        tail_need[u] = tail_need[u + 1] + units[u].min_len;
    }
    let frames = ppg.frames();
    let emit: Vec<Vec<f64>> = (0..frames)
        .map(|t| units.iter().map(|u| log_posterior(ppg.prob(t, u.phone))).collect())
        .collect();

    let mut best: Option<f64> = None;
    let mut search = Search { units: &units, tail_need: &tail_need, emit: &emit, frames, best: &mut best };
    search.run(0, 0, None);
    best
}

struct Search<'a> {
    units: &'a [Unit],
    tail_need: &'a [usize],
    emit: &'a [Vec<f64>],
    frames: usize,
    best: &'a mut Option<f64>,
}

impl Search<'_> {
    /// `acc` is `None` before the first frame, so the first emission is not
    /// added to a zero.
    fn run(&mut self, u: usize, t: usize, acc: Option<f64>) {
        if u == self.units.len() {
            if t == self.frames {
                let score = acc.expect("at least one frame");
                if self.best.is_none_or(|b| score > b) {
                    *self.best = Some(score);
                }
            }
            return;
        }
        if self.frames - t < self.tail_need[u] {
            return;
        }
        let unit = self.units[u];
        if unit.min_len == 0 {
            self.run(u + 1, t, acc);
        }
        let room = self.frames - t - self.tail_need[u + 1];
        let mut sum = acc;
        for len in 1..=room {
            let e = self.emit[t + len - 1][u];
            sum = Some(sum.map_or(e, |s| s + e));
            if len >= unit.min_len.max(1) {
                self.run(u + 1, t + len, sum);
            }
        }
    }
}

// ── scripts ──────────────────────────────────────────────────────────────────

/// A one-word-per-entry test exercise. Each word is
/// `(text, phonemes, syllables, primary_stress)`.
pub fn exercise(
    id: &str,
    words: &[(&str, &str, &[[usize; 2]], usize)],
    sentence_stress: &[usize],
    breath_groups: &[[usize; 2]],
) -> ExerciseScript {
    let words: Vec<_> = words
        .iter()
        .map(|(text, phones, syl, stress)| {
            json!({
                "text": text,
                "phonemes": phones.split_whitespace().collect::<Vec<_>>(),
                "syllables": syl,
                "primary_stress": stress,
                "content_word": true,
            })
        })
        .collect();
    let text = words.iter().map(|w| w["text"].as_str().unwrap().to_string()).collect::<Vec<_>>().join(" ");
    let doc = json!({"exercises": [{
        "id": id,
        "text": text,
        "words": words,
        "sentence_stress_words": sentence_stress,
        "breath_groups": breath_groups,
    }]});
    parse_exercise_catalog(&doc.to_string(), &inv()).expect("test exercise is valid").remove(0)
}

/// Five two-phoneme words, ten phonemes in total.
pub fn ten_phoneme_exercise() -> ExerciseScript {
    exercise(
        "ten",
        &[
            ("bee", "B IY", &[[0, 1]], 0),
            ("day", "D EY", &[[0, 1]], 0),
            ("go", "G OW", &[[0, 1]], 0),
            ("may", "M EY", &[[0, 1]], 0),
            ("no", "N OW", &[[0, 1]], 0),
        ],
        &[0],
        &[[0, 4]],
    )
}

// ── signals ──────────────────────────────────────────────────────────────────

pub fn ms_samples(ms: f64) -> usize {
    (ms * RATE as f64 / 1000.0).round() as usize
}

pub fn silence(ms: f64) -> Vec<f32> {
    vec![0.0; ms_samples(ms)]
}

pub fn sine(freq: f64, amp: f64, ms: f64) -> Vec<f32> {
    (0..ms_samples(ms))
        .map(|i| (amp * (2.0 * PI * freq * i as f64 / RATE as f64).sin()) as f32)
        .collect()
}

/// Periodic tone with three harmonics at an rms level in dBFS.
pub fn voiced(freq: f64, level_db: f64, ms: f64) -> Vec<f32> {
    // first three harmonics with amplitudes 1, 1/2, 1/3
    let rms_unit = ((1.0 + 0.25 + 1.0 / 9.0) / 2.0f64).sqrt();
    let amp = 10f64.powf(level_db / 20.0) / rms_unit;
    (0..ms_samples(ms))
        .map(|i| {
            let w = 2.0 * PI * freq * i as f64 / RATE as f64;
            (amp * (w.sin() + 0.5 * (2.0 * w).sin() + (3.0 * w).sin() / 3.0)) as f32
        })
        .collect()
}

/// Uniform white noise at an rms level in dBFS.
pub fn noise<R: Rng>(rng: &mut R, level_db: f64, ms: f64) -> Vec<f32> {
    // uniform on [-a, a] has rms a / sqrt(3)
    let a = 10f64.powf(level_db / 20.0) * 3f64.sqrt();
    (0..ms_samples(ms)).map(|_| rng.gen_range(-a..=a) as f32).collect()
}

pub fn buffer(samples: Vec<f32>) -> AudioBuffer {
    AudioBuffer::new(samples, RATE)
}

/// How one phoneme is rendered.
#[derive(Debug, Clone, Copy)]
pub struct Voice {
    pub f0: f64,
    pub level_db: f64,
}

/// Renders timed phonemes as audio: vowels and voiced sounds as harmonic
/// tones, gaps as digital silence. Returns the audio and the segments.
pub fn render(pieces: &[(Option<Phone>, f64, Voice)]) -> (AudioBuffer, Vec<TimedPhone>) {
    let mut samples = Vec::new();
    let mut segments = Vec::new();
    let mut t = 0.0;
    for &(phone, ms, voice) in pieces {
        match phone {
            Some(p) => {
                samples.extend(voiced(voice.f0, voice.level_db, ms));
                segments.push(TimedPhone::new(p, t, t + ms));
            }
            None => samples.extend(silence(ms)),
        }
        t += ms;
    }
    (buffer(samples), segments)
}

/// Median of a non-empty list.
pub fn median(mut v: Vec<f64>) -> f64 {
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}
