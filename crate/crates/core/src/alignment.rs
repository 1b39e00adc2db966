//! Forced alignment of an expected phoneme sequence against a posteriorgram,
//! plus free phonetic decoding of what was actually said.
//!
//! The aligner is a Viterbi pass over a left-to-right state graph. Every
//! expected phoneme expands into two states (its first frame, then a
//! self-looping tail) so each phoneme lasts at least [`MIN_PHONE_FRAMES`].
//! Optional silence states, each at least one frame, sit before the first
//! phoneme, after the last one and between words; never inside a word.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::acoustic::Posteriorgram;
use crate::inventory::{ExpectedPhone, Phone};

/// Posterior floor applied before taking logarithms.
pub const POSTERIOR_FLOOR: f64 = 1e-8;
pub const MIN_PHONE_FRAMES: usize = 2;

/// `ln(max(p, POSTERIOR_FLOOR))`
#[inline]
pub fn log_posterior(p: f64) -> f64 {
    p.max(POSTERIOR_FLOOR).ln()
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum AlignError {
    #[error("cannot align {phones} phonemes in {frames} frames (need at least {needed})")]
    Infeasible { phones: usize, frames: usize, needed: usize },
    #[error("nothing to align: expected sequence is empty")]
    EmptySequence,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PhoneSegment {
    pub expected: Phone,
    pub word_index: usize,
    pub start_frame: usize,
    /// Inclusive.
    pub end_frame: usize,
    pub start_ms: f64,
    /// Exclusive, `(end_frame + 1) * hop`.
    pub end_ms: f64,
    pub mean_log_posterior_expected: f64,
    pub expected_mean_posterior: f64,
    pub predicted: Phone,
    pub predicted_mean_posterior: f64,
}

impl PhoneSegment {
    pub fn frames(&self) -> std::ops::RangeInclusive<usize> {
        self.start_frame..=self.end_frame
    }

    pub fn frame_count(&self) -> usize {
        self.end_frame + 1 - self.start_frame
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum SilenceLocation {
    Leading,
    Trailing,
    /// Between word `after_word` and the next one.
    Between { after_word: usize },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SilenceSpan {
    pub start_frame: usize,
    pub end_frame: usize,
    pub start_ms: f64,
    pub end_ms: f64,
    pub location: SilenceLocation,
}

impl SilenceSpan {
    pub fn duration_ms(&self) -> f64 {
        self.end_ms - self.start_ms
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AlignmentResult {
    pub hop_ms: u32,
    pub frames: usize,
    pub segments: Vec<PhoneSegment>,
    pub silences: Vec<SilenceSpan>,
    pub total_log_score: f64,
}

impl AlignmentResult {
    /// Segments belonging to one word, in order.
    pub fn word_segments(&self, word: usize) -> impl Iterator<Item = &PhoneSegment> {
        self.segments.iter().filter(move |s| s.word_index == word)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum StateKind {
    Silence(SilenceLocation),
    /// First frame of expected phoneme `i`.
    Onset(usize),
    /// Second and later frames of expected phoneme `i`.
    Tail(usize),
}

#[derive(Debug)]
struct State {
    kind: StateKind,
    emits: Phone,
    /// Predecessor state indices, highest first.
    preds: Vec<usize>,
    self_loop: bool,
}

struct StateGraph {
    states: Vec<State>,
    starts: Vec<usize>,
    ends: Vec<usize>,
}

impl StateGraph {
    fn build(expected: &[ExpectedPhone]) -> Self {
        let mut states: Vec<State> = Vec::with_capacity(3 * expected.len() + 2);
        let sil = |loc| State {
            kind: StateKind::Silence(loc),
            emits: Phone::SIL,
            preds: Vec::new(),
            self_loop: true,
        };

        states.push(sil(SilenceLocation::Leading));
        let mut starts = vec![0];
        // states that may be followed by the next phoneme's onset
        let mut exits: Vec<usize> = vec![0];
        let mut ends = Vec::new();
        for (i, e) in expected.iter().enumerate() {
            let onset = states.len();
            if i == 0 {
                starts.push(onset);
            }
            states.push(State {
                kind: StateKind::Onset(i),
                emits: e.phone,
                preds: exits.clone(),
                self_loop: false,
            });
            let tail = states.len();
            states.push(State {
                kind: StateKind::Tail(i),
                emits: e.phone,
                preds: vec![onset],
                self_loop: true,
            });
            exits = vec![tail];

            let last = i + 1 == expected.len();
            let boundary = expected.get(i + 1).is_some_and(|n| n.word_start);
            if last || boundary {
                let loc = if last {
                    SilenceLocation::Trailing
                } else {
                    SilenceLocation::Between { after_word: e.word_index }
                };
                let idx = states.len();
                let mut s = sil(loc);
                s.preds = vec![tail];
                states.push(s);
                exits.push(idx);
                if last {
                    ends = vec![tail, idx];
                }
            }
        }
        for (idx, state) in states.iter_mut().enumerate() {
            if state.self_loop {
                state.preds.push(idx);
            }
            state.preds.sort_unstable_by(|a, b| b.cmp(a));
        }
        Self { states, starts, ends }
    }
}

/// Viterbi forced alignment of `expected` to `ppg`.
///
/// Maximizes the sum of frame log posteriors over monotonic paths. Among
/// equally scoring paths the one whose boundaries fall earliest is kept,
/// resolved greedily from the end of the utterance.
pub fn forced_align(ppg: &Posteriorgram, expected: &[ExpectedPhone]) -> Result<AlignmentResult, AlignError> {
    if expected.is_empty() {
        return Err(AlignError::EmptySequence);
    }
    let frames = ppg.frames();
    let needed = MIN_PHONE_FRAMES * expected.len();
    if frames < needed {
        return Err(AlignError::Infeasible { phones: expected.len(), frames, needed });
    }

    let graph = StateGraph::build(expected);
    let n_states = graph.states.len();
    let emit = |t: usize, s: usize| log_posterior(ppg.prob(t, graph.states[s].emits));

    let mut prev = vec![f64::NEG_INFINITY; n_states];
    let mut curr = vec![f64::NEG_INFINITY; n_states];
    let mut back = vec![u32::MAX; frames * n_states];
    for &s in &graph.starts {
        prev[s] = emit(0, s);
    }
    for t in 1..frames {
        for (s, state) in graph.states.iter().enumerate() {
            let mut best = f64::NEG_INFINITY;
            let mut arg = u32::MAX;
            for &p in &state.preds {
                if prev[p] > best {
                    best = prev[p];
                    arg = p as u32;
                }
            }
            curr[s] = if arg == u32::MAX { f64::NEG_INFINITY } else { best + emit(t, s) };
            back[t * n_states + s] = arg;
        }
        std::mem::swap(&mut prev, &mut curr);
    }

    // higher index first: ending in trailing silence means the last phoneme ended earlier
    let mut last = None;
    for &s in graph.ends.iter().rev() {
        if last.is_none_or(|l: usize| prev[s] > prev[l]) {
            last = Some(s);
        }
    }
    let mut s = last.expect("graph has end states");
    let total_log_score = prev[s];
    debug_assert!(total_log_score.is_finite());

    let mut path = vec![0usize; frames];
    for t in (0..frames).rev() {
        path[t] = s;
        if t > 0 {
            s = back[t * n_states + s] as usize;
        }
    }

    let hop = ppg.hop_ms();
    let ms = |f: usize| ppg.frame_start_ms(f);
    let mut segments: Vec<PhoneSegment> = Vec::with_capacity(expected.len());
    let mut silences = Vec::new();
    let mut t = 0;
    while t < frames {
        let kind = graph.states[path[t]].kind;
        let mut end = t;
        let same_unit = |a: StateKind, b: StateKind| match (a, b) {
            (StateKind::Onset(i) | StateKind::Tail(i), StateKind::Onset(j) | StateKind::Tail(j)) => i == j,
            _ => a == b,
        };
        while end + 1 < frames && same_unit(kind, graph.states[path[end + 1]].kind) {
            end += 1;
        }
        match kind {
            StateKind::Silence(location) => silences.push(SilenceSpan {
                start_frame: t,
                end_frame: end,
                start_ms: ms(t),
                end_ms: ms(end + 1),
                location,
            }),
            StateKind::Onset(i) | StateKind::Tail(i) => {
                let e = expected[i];
                let n = (end + 1 - t) as f64;
                let mean_log = (t..=end).map(|f| log_posterior(ppg.prob(f, e.phone))).sum::<f64>() / n;
                let mean_prob = (t..=end).map(|f| ppg.prob(f, e.phone)).sum::<f64>() / n;
                let (predicted, predicted_mean) = predicted_for_segment(ppg, t, end);
                segments.push(PhoneSegment {
                    expected: e.phone,
                    word_index: e.word_index,
                    start_frame: t,
                    end_frame: end,
                    start_ms: ms(t),
                    end_ms: ms(end + 1),
                    mean_log_posterior_expected: mean_log,
                    expected_mean_posterior: mean_prob,
                    predicted,
                    predicted_mean_posterior: predicted_mean,
                });
            }
        }
        t = end + 1;
    }
    debug_assert_eq!(segments.len(), expected.len());

    Ok(AlignmentResult { hop_ms: hop, frames, segments, silences, total_log_score })
}

/// Framewise argmax (ties to the lower index), adjacent repeats collapsed,
/// silence dropped.
pub fn free_decode(ppg: &Posteriorgram) -> Vec<Phone> {
    let mut out = Vec::new();
    let mut prev = None;
    for t in 0..ppg.frames() {
        let p = ppg.argmax(t);
        if prev != Some(p) && !p.is_silence() {
            out.push(p);
        }
        prev = Some(p);
    }
    out
}

/// Unit-cost edit distance.
pub fn levenshtein<T: PartialEq>(a: &[T], b: &[T]) -> usize {
    let mut row: Vec<usize> = (0..=b.len()).collect();
    for (i, x) in a.iter().enumerate() {
        let mut diag = row[0];
        row[0] = i + 1;
        for (j, y) in b.iter().enumerate() {
            let above = row[j + 1];
            row[j + 1] = if x == y { diag } else { 1 + diag.min(above).min(row[j]) };
            diag = above;
        }
    }
    row[b.len()]
}

/// Non-silence phoneme with the highest mean posterior over frames
/// `start..=end`, with that mean. Ties go to the lower index.
pub fn predicted_for_segment(ppg: &Posteriorgram, start: usize, end: usize) -> (Phone, f64) {
    let width = ppg.phones();
    let mut sums = vec![0.0; width];
    for t in start..=end {
        for (acc, &p) in sums.iter_mut().zip(ppg.row(t)) {
            *acc += p;
        }
    }
    let n = (end + 1 - start) as f64;
    let mut best = 1;
    for i in 2..width {
        if sums[i] > sums[best] {
            best = i;
        }
    }
    (Phone(best as u16), sums[best] / n)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::acoustic::{synth_posteriorgram, TimedPhone};
    use crate::inventory::PhoneInventory;
    use std::sync::Arc;

    fn inv() -> Arc<PhoneInventory> {
        PhoneInventory::default_shared()
    }

    fn ph(s: &str) -> Phone {
        inv().lookup(s).unwrap()
    }

    fn one_word(phones: &[&str]) -> Vec<ExpectedPhone> {
        phones
            .iter()
            .enumerate()
            .map(|(i, s)| ExpectedPhone { phone: ph(s), word_index: 0, position: i, word_start: i == 0 })
            .collect()
    }

    fn ppg_from_argmax(labels: &[&str]) -> Posteriorgram {
        let inv = inv();
        let rows = labels
            .iter()
            .map(|l| {
                let mut r = vec![0.0; inv.len()];
                r[inv.lookup(l).unwrap().index()] = 1.0;
                r
            })
            .collect();
        Posteriorgram::new(20, inv, rows).unwrap()
    }

    fn cat_segments(offset: f64) -> Vec<TimedPhone> {
        vec![
            TimedPhone::new(ph("K"), offset, offset + 100.0),
            TimedPhone::new(ph("AE"), offset + 100.0, offset + 300.0),
            TimedPhone::new(ph("T"), offset + 300.0, offset + 400.0),
        ]
    }

    fn spans(r: &AlignmentResult) -> Vec<(usize, usize)> {
        r.segments.iter().map(|s| (s.start_frame, s.end_frame)).collect()
    }

    #[test]
    fn aligns_one_hot_cat() {
        let ppg = synth_posteriorgram(&cat_segments(0.0), None, 20, 1.0, inv()).unwrap();
        let r = forced_align(&ppg, &one_word(&["K", "AE", "T"])).unwrap();
        assert_eq!(spans(&r), vec![(0, 4), (5, 14), (15, 19)]);
        assert!(r.silences.is_empty());
        assert_eq!(r.segments[1].start_ms, 100.0);
        assert_eq!(r.segments[1].end_ms, 300.0);
        assert_eq!(r.segments[1].predicted, ph("AE"));
        assert_eq!(r.segments[1].predicted_mean_posterior, 1.0);
        assert_eq!(r.total_log_score, 0.0);
    }

    #[test]
    fn leading_silence_shifts_onset() {
        let ppg = synth_posteriorgram(&cat_segments(200.0), None, 20, 1.0, inv()).unwrap();
        let r = forced_align(&ppg, &one_word(&["K", "AE", "T"])).unwrap();
        assert_eq!(r.silences.len(), 1);
        assert_eq!(r.silences[0].location, SilenceLocation::Leading);
        assert_eq!((r.silences[0].start_ms, r.silences[0].end_ms), (0.0, 200.0));
        assert_eq!(r.segments[0].start_ms, 200.0);
        assert_eq!(spans(&r), vec![(10, 14), (15, 24), (25, 29)]);
    }

    #[test]
    fn too_few_frames() {
        let ppg = ppg_from_argmax(&["K"; 5]);
        assert_eq!(
            forced_align(&ppg, &one_word(&["K", "AE", "T"])),
            Err(AlignError::Infeasible { phones: 3, frames: 5, needed: 6 })
        );
        assert_eq!(forced_align(&ppg, &[]), Err(AlignError::EmptySequence));
    }

    #[test]
    fn no_silence_inside_a_word() {
        // SIL in the middle of the word must be absorbed by a phoneme
        let ppg = ppg_from_argmax(&["K", "K", "SIL", "SIL", "T", "T"]);
        let r = forced_align(&ppg, &one_word(&["K", "T"])).unwrap();
        assert!(r.silences.is_empty());
        assert_eq!(r.segments[0].start_frame, 0);
        assert_eq!(r.segments[1].end_frame, 5);

        let mut two_words = one_word(&["K", "T"]);
        two_words[1].word_index = 1;
        two_words[1].word_start = true;
        let r = forced_align(&ppg, &two_words).unwrap();
        assert_eq!(r.silences.len(), 1);
        assert_eq!(r.silences[0].location, SilenceLocation::Between { after_word: 0 });
        assert_eq!(spans(&r), vec![(0, 1), (4, 5)]);
    }

    #[test]
    fn ties_prefer_earlier_boundaries() {
        // all-uniform rows: every segmentation scores the same
        let inv = inv();
        let rows = vec![vec![1.0 / inv.len() as f64; inv.len()]; 8];
        let ppg = Posteriorgram::new(20, inv, rows).unwrap();
        let r = forced_align(&ppg, &one_word(&["K", "T"])).unwrap();
        // every phoneme boundary as early as the minimum durations allow, rest is trailing silence
        assert_eq!(spans(&r), vec![(0, 1), (2, 3)]);
        assert_eq!(r.silences.len(), 1);
        assert_eq!(r.silences[0].location, SilenceLocation::Trailing);
        assert_eq!(forced_align(&ppg, &one_word(&["K", "T"])).unwrap(), r);
    }

    #[test]
    fn free_decode_rules() {
        let ppg = ppg_from_argmax(&["K", "K", "K", "SIL", "AE", "AE", "T"]);
        assert_eq!(free_decode(&ppg), vec![ph("K"), ph("AE"), ph("T")]);
        assert!(free_decode(&ppg_from_argmax(&["SIL"; 4])).is_empty());
        let ppg = ppg_from_argmax(&["AE", "AE", "K", "K", "AE"]);
        assert_eq!(free_decode(&ppg), vec![ph("AE"), ph("K"), ph("AE")]);
    }

    #[test]
    fn edit_distance() {
        let cat = [ph("K"), ph("AE"), ph("T")];
        let cut = [ph("K"), ph("AH"), ph("T")];
        assert_eq!(levenshtein(&cat, &cat), 0);
        assert_eq!(levenshtein(&cat, &cut), 1);
        assert_eq!(levenshtein(&[], &cat), 3);
        assert_eq!(levenshtein(&cat, &[]), 3);
        assert_eq!(levenshtein(b"kitten", b"sitting"), 3);
    }

    #[test]
    fn predicted_phone_per_segment() {
        let inv = inv();
        let row = |pairs: &[(&str, f64)]| {
            let mut r = vec![0.0; inv.len()];
            let used: f64 = pairs.iter().map(|p| p.1).sum();
            let rest = (1.0 - used) / (inv.len() - pairs.len()) as f64;
            r.iter_mut().for_each(|v| *v = rest);
            for (s, p) in pairs {
                r[inv.lookup(s).unwrap().index()] = *p;
            }
            r
        };
        let one_hot = ppg_from_argmax(&["AE", "AE"]);
        assert_eq!(predicted_for_segment(&one_hot, 0, 1), (ph("AE"), 1.0));

        let constant = Posteriorgram::new(20, inv.clone(), vec![row(&[("AH", 0.7), ("AE", 0.2)]); 3]).unwrap();
        let (p, m) = predicted_for_segment(&constant, 0, 2);
        assert_eq!(p, ph("AH"));
        assert!((m - 0.7).abs() < 1e-12);

        let mixed = Posteriorgram::new(
            20,
            inv.clone(),
            vec![row(&[("AE", 0.6)]), row(&[("AE", 0.4), ("AH", 0.5)])],
        )
        .unwrap();
        let (p, m) = predicted_for_segment(&mixed, 0, 1);
        assert_eq!(p, ph("AE"));
        assert!((m - 0.5).abs() < 1e-12);

        // silence never wins
        let sil = ppg_from_argmax(&["SIL", "SIL"]);
        assert_ne!(predicted_for_segment(&sil, 0, 1).0, Phone::SIL);
    }
}
