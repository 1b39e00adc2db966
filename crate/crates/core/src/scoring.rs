//! Segmental scoring: goodness of pronunciation and minimal-pair contrasts.

use serde::{Deserialize, Serialize};

use crate::acoustic::Posteriorgram;
use crate::alignment::{log_posterior, PhoneSegment};
use crate::inventory::{MinimalPairSpec, Phone, PhoneClass, PhoneInventory};

pub const DEFAULT_GOP_THRESHOLD: f64 = -1.0;
pub const DEFAULT_UNCLEAR_MARGIN: f64 = 0.1;

/// Mean over the segment of `ln p(expected) - ln max_q p(q)`. Never positive.
pub fn gop(ppg: &Posteriorgram, start_frame: usize, end_frame: usize, expected: Phone) -> f64 {
    let n = (end_frame + 1 - start_frame) as f64;
    let total: f64 = (start_frame..=end_frame)
        .map(|t| {
            let row = ppg.row(t);
            let best = row.iter().copied().fold(0.0, f64::max);
            log_posterior(row[expected.index()]) - log_posterior(best)
        })
        .sum();
    total / n
}

pub fn segment_gop(ppg: &Posteriorgram, segment: &PhoneSegment) -> f64 {
    gop(ppg, segment.start_frame, segment.end_frame, segment.expected)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum VerdictKind {
    Correct,
    Mispronounced,
    Substituted,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PhonemeVerdict {
    pub kind: VerdictKind,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub substituted_by: Option<Phone>,
    pub gop: f64,
    pub predicted_posterior: f64,
}

/// GOP acceptance thresholds, one per phoneme class.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GopThresholds {
    pub vowel: f64,
    pub consonant: f64,
}

impl Default for GopThresholds {
    fn default() -> Self {
        Self { vowel: DEFAULT_GOP_THRESHOLD, consonant: DEFAULT_GOP_THRESHOLD }
    }
}

impl GopThresholds {
    pub fn for_phone(&self, inv: &PhoneInventory, phone: Phone) -> f64 {
        match inv.class(phone) {
            PhoneClass::Vowel => self.vowel,
            PhoneClass::Consonant | PhoneClass::Silence => self.consonant,
        }
    }
}

/// `gop >= tau` is correct. Below it, the phoneme counts as substituted when
/// a different phoneme is more probable over the segment, otherwise as
/// mispronounced.
pub fn verdict(segment: &PhoneSegment, gop: f64, tau: f64) -> PhonemeVerdict {
    let (kind, substituted_by) = if gop >= tau {
        (VerdictKind::Correct, None)
    } else if segment.predicted != segment.expected
        && segment.predicted_mean_posterior > segment.expected_mean_posterior
    {
        (VerdictKind::Substituted, Some(segment.predicted))
    } else {
        (VerdictKind::Mispronounced, None)
    };
    PhonemeVerdict {
        kind,
        substituted_by,
        gop,
        predicted_posterior: segment.predicted_mean_posterior,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PairWinner {
    Target,
    Contrast,
    Unclear,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MinimalPairResult {
    pub word_index: usize,
    pub target: Phone,
    pub contrast: Phone,
    pub target_mean: f64,
    pub contrast_mean: f64,
    pub winner: PairWinner,
}

pub fn pair_winner(target_mean: f64, contrast_mean: f64, margin: f64) -> PairWinner {
    if (target_mean - contrast_mean).abs() < margin {
        PairWinner::Unclear
    } else if target_mean > contrast_mean {
        PairWinner::Target
    } else {
        PairWinner::Contrast
    }
}

/// Mean posteriors of the target and contrast phonemes over the segment.
pub fn minimal_pair(
    ppg: &Posteriorgram,
    segment: &PhoneSegment,
    spec: &MinimalPairSpec,
    margin: f64,
) -> MinimalPairResult {
    debug_assert_eq!(spec.target, segment.expected);
    let n = segment.frame_count() as f64;
    let mean = |p: Phone| segment.frames().map(|t| ppg.prob(t, p)).sum::<f64>() / n;
    let target_mean = mean(spec.target);
    let contrast_mean = mean(spec.contrast);
    MinimalPairResult {
        word_index: spec.word_index,
        target: spec.target,
        contrast: spec.contrast,
        target_mean,
        contrast_mean,
        winner: pair_winner(target_mean, contrast_mean, margin),
    }
}
