//! Assembly of the analysis payload and its feedback cards.

use std::collections::BTreeMap;
use std::sync::OnceLock;

use serde::{Deserialize, Serialize};

use crate::alignment::{AlignmentResult, SilenceSpan};
use crate::inventory::{ExerciseScript, Phone, PhoneInventory, Span};
use crate::prosody::{PauseReport, SentenceStressReport, WordStressVerdict};
use crate::scoring::{MinimalPairResult, PairWinner, PhonemeVerdict, VerdictKind};
use crate::validation::ValidationReport;

static ADVICE_JSON: &str = include_str!("../data/advice.json");

fn advice_table() -> &'static BTreeMap<String, String> {
    static TABLE: OnceLock<BTreeMap<String, String>> = OnceLock::new();
    TABLE.get_or_init(|| serde_json::from_str(ADVICE_JSON).expect("advice table is valid JSON"))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CardKind {
    SegmentalWord,
    MinimalPair,
    WordStress,
    SentenceStress,
    BreathGroups,
}

impl CardKind {
    fn key_prefix(self) -> &'static str {
        match self {
            CardKind::SegmentalWord => "segmental",
            CardKind::MinimalPair => "minimal_pair",
            CardKind::WordStress => "word_stress",
            CardKind::SentenceStress => "sentence_stress",
            CardKind::BreathGroups => "breath_groups",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CardStatus {
    Good,
    NeedsWork,
}

/// Advice text for a key. Good cards use the kind's positive text; other
/// keys fall back to the kind's generic advice.
pub fn advice_text(kind: CardKind, status: CardStatus, key: &str) -> String {
    let table = advice_table();
    let prefix = kind.key_prefix();
    let found = match status {
        CardStatus::Good => table.get(&format!("{prefix}:ok")),
        CardStatus::NeedsWork => table
            .get(key)
            .or_else(|| table.get(&format!("{prefix}:needs_work"))),
    };
    found.cloned().unwrap_or_default()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PhonemeIssue {
    pub position: usize,
    pub expected: String,
    pub verdict: VerdictKind,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub heard: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum CardDetail {
    Segmental {
        word: String,
        issues: Vec<PhonemeIssue>,
    },
    MinimalPair {
        target: String,
        contrast: String,
        target_mean: f64,
        contrast_mean: f64,
        winner: PairWinner,
    },
    WordStress {
        expected_syllable: usize,
        detected_syllable: usize,
    },
    SentenceStress {
        expected_words: Vec<usize>,
        detected_words: Vec<usize>,
        missed_words: Vec<usize>,
    },
    BreathGroups {
        expected_boundaries: Vec<usize>,
        missed_boundaries: Vec<usize>,
        spurious_pauses: Vec<usize>,
        detected_groups: Vec<Span>,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeedbackCard {
    pub kind: CardKind,
    pub word_index: Option<usize>,
    pub status: CardStatus,
    pub detail: CardDetail,
    pub advice_key: String,
    pub advice: String,
}

impl FeedbackCard {
    fn new(kind: CardKind, word_index: Option<usize>, status: CardStatus, detail: CardDetail, token: &str) -> Self {
        let advice_key = format!("{}:{token}", kind.key_prefix());
        let advice = advice_text(kind, status, &advice_key);
        Self { kind, word_index, status, detail, advice_key, advice }
    }
}

/// One row of the per-word phoneme table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PhonemeAnalysis {
    pub expected: String,
    pub predicted: String,
    pub start_ms: f64,
    pub end_ms: f64,
    pub expected_posterior: f64,
    pub predicted_posterior: f64,
    pub gop: f64,
    pub verdict: VerdictKind,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub substituted_by: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WordAnalysis {
    pub word_index: usize,
    pub text: String,
    pub start_ms: f64,
    pub end_ms: f64,
    pub phonemes: Vec<PhonemeAnalysis>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MinimalPairView {
    pub word_index: usize,
    pub target: String,
    pub contrast: String,
    pub target_mean: f64,
    pub contrast_mean: f64,
    pub winner: PairWinner,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProsodyAnalysis {
    pub word_stress: Vec<WordStressVerdict>,
    pub sentence_stress: SentenceStressReport,
    pub pauses: PauseReport,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnalysisResult {
    pub exercise_id: String,
    pub validation: ValidationReport,
    pub words: Vec<WordAnalysis>,
    pub silences: Vec<SilenceSpan>,
    pub minimal_pairs: Vec<MinimalPairView>,
    pub prosody: ProsodyAnalysis,
    pub cards: Vec<FeedbackCard>,
}

/// Builds the per-word tables and the ordered card deck.
///
/// Cards come out as: one segmental card per word, one per minimal pair,
/// one per multi-syllable word for word stress, then sentence stress (when
/// the script marks stressed words) and the breath-group card.
#[allow(clippy::too_many_arguments)]
pub fn build_feedback(
    validation: &ValidationReport,
    alignment: &AlignmentResult,
    verdicts: &[PhonemeVerdict],
    minimal_pairs: &[MinimalPairResult],
    prosody: ProsodyAnalysis,
    script: &ExerciseScript,
    inv: &PhoneInventory,
) -> AnalysisResult {
    debug_assert_eq!(alignment.segments.len(), verdicts.len());
    let label = |p: Phone| inv.symbol(p).to_string();

    let mut words: Vec<WordAnalysis> = script
        .words
        .iter()
        .enumerate()
        .map(|(i, w)| WordAnalysis {
            word_index: i,
            text: w.text.clone(),
            start_ms: 0.0,
            end_ms: 0.0,
            phonemes: Vec::with_capacity(w.phonemes.len()),
        })
        .collect();
    for (seg, v) in alignment.segments.iter().zip(verdicts) {
        words[seg.word_index].phonemes.push(PhonemeAnalysis {
            expected: label(seg.expected),
            predicted: label(seg.predicted),
            start_ms: seg.start_ms,
            end_ms: seg.end_ms,
            expected_posterior: seg.expected_mean_posterior,
            predicted_posterior: seg.predicted_mean_posterior,
            gop: v.gop,
            verdict: v.kind,
            substituted_by: v.substituted_by.map(label),
        });
    }
    for w in &mut words {
        if let (Some(first), Some(last)) = (w.phonemes.first(), w.phonemes.last()) {
            w.start_ms = first.start_ms;
            w.end_ms = last.end_ms;
        }
    }

    let mut cards = Vec::new();
    for w in &words {
        let issues: Vec<PhonemeIssue> = w
            .phonemes
            .iter()
            .enumerate()
            .filter(|(_, p)| p.verdict != VerdictKind::Correct)
            .map(|(i, p)| PhonemeIssue {
                position: i,
                expected: p.expected.clone(),
                verdict: p.verdict,
                heard: p.substituted_by.clone(),
            })
            .collect();
        let (status, token) = match issues.first() {
            None => (CardStatus::Good, "ok".to_string()),
            Some(first) => (CardStatus::NeedsWork, first.expected.clone()),
        };
        cards.push(FeedbackCard::new(
            CardKind::SegmentalWord,
            Some(w.word_index),
            status,
            CardDetail::Segmental { word: w.text.clone(), issues },
            &token,
        ));
    }

    let pair_views: Vec<MinimalPairView> = minimal_pairs
        .iter()
        .map(|mp| MinimalPairView {
            word_index: mp.word_index,
            target: label(mp.target),
            contrast: label(mp.contrast),
            target_mean: mp.target_mean,
            contrast_mean: mp.contrast_mean,
            winner: mp.winner,
        })
        .collect();
    for mp in &pair_views {
        let status = if mp.winner == PairWinner::Target { CardStatus::Good } else { CardStatus::NeedsWork };
        cards.push(FeedbackCard::new(
            CardKind::MinimalPair,
            Some(mp.word_index),
            status,
            CardDetail::MinimalPair {
                target: mp.target.clone(),
                contrast: mp.contrast.clone(),
                target_mean: mp.target_mean,
                contrast_mean: mp.contrast_mean,
                winner: mp.winner,
            },
            &format!("{}~{}", mp.target, mp.contrast),
        ));
    }

    for ws in &prosody.word_stress {
        let (status, token) = if ws.ok { (CardStatus::Good, "ok") } else { (CardStatus::NeedsWork, "misplaced") };
        cards.push(FeedbackCard::new(
            CardKind::WordStress,
            Some(ws.word_index),
            status,
            CardDetail::WordStress {
                expected_syllable: ws.expected_syllable,
                detected_syllable: ws.detected_syllable,
            },
            token,
        ));
    }

    let ss = &prosody.sentence_stress;
    if !ss.expected.is_empty() {
        let missed: Vec<usize> = ss.verdicts.iter().filter(|v| !v.ok).map(|v| v.word_index).collect();
        let (status, token) = if missed.is_empty() { (CardStatus::Good, "ok") } else { (CardStatus::NeedsWork, "missed") };
        cards.push(FeedbackCard::new(
            CardKind::SentenceStress,
            None,
            status,
            CardDetail::SentenceStress {
                expected_words: ss.expected.clone(),
                detected_words: ss.detected.clone(),
                missed_words: missed,
            },
            token,
        ));
    }

    let pauses = &prosody.pauses;
    let missed: Vec<usize> = pauses.boundaries.iter().filter(|b| !b.matched).map(|b| b.after_word).collect();
    let (status, token) = if !missed.is_empty() {
        (CardStatus::NeedsWork, "missed_pause")
    } else if !pauses.spurious.is_empty() {
        (CardStatus::NeedsWork, "extra_pause")
    } else {
        (CardStatus::Good, "ok")
    };
    cards.push(FeedbackCard::new(
        CardKind::BreathGroups,
        None,
        status,
        CardDetail::BreathGroups {
            expected_boundaries: pauses.boundaries.iter().map(|b| b.after_word).collect(),
            missed_boundaries: missed,
            spurious_pauses: pauses.spurious.clone(),
            detected_groups: pauses.breath_groups_detected.clone(),
        },
        token,
    ));

    AnalysisResult {
        exercise_id: script.id.clone(),
        validation: validation.clone(),
        words,
        silences: alignment.silences.clone(),
        minimal_pairs: pair_views,
        prosody,
        cards,
    }
}
