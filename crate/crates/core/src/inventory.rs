//! Phoneme inventory and the exercise data model.

use std::collections::HashSet;
use std::fmt;
use std::path::Path;
use std::sync::{Arc, OnceLock};

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub const SILENCE: &str = "SIL";

/// Index of a phoneme within a [`PhoneInventory`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Phone(pub u16);

impl Phone {
    pub const SIL: Phone = Phone(0);

    pub fn index(self) -> usize {
        self.0 as usize
    }

    pub fn is_silence(self) -> bool {
        self == Self::SIL
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PhoneClass {
    Vowel,
    Consonant,
    Silence,
}

const ARPABET_VOWELS: [&str; 15] = [
    "AA", "AE", "AH", "AO", "AW", "AY", "EH", "ER", "EY", "IH", "IY", "OW", "OY", "UH", "UW",
];
const ARPABET_CONSONANTS: [&str; 24] = [
    "B", "CH", "D", "DH", "F", "G", "HH", "JH", "K", "L", "M", "N", "NG", "P", "R", "S", "SH", "T",
    "TH", "V", "W", "Y", "Z", "ZH",
];

#[derive(Debug, Error, PartialEq, Eq)]
pub enum InventoryError {
    #[error("unknown phoneme '{token}' at token {position}")]
    UnknownSymbol { token: String, position: usize },
    #[error("duplicate phoneme symbol '{0}'")]
    Duplicate(String),
    #[error("inventory must start with {SILENCE}")]
    MissingSilence,
}

/// Ordered phoneme labels with a class per label. Index 0 is always `SIL`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PhoneInventory {
    symbols: Vec<String>,
    classes: Vec<PhoneClass>,
}

impl PhoneInventory {
    pub fn new(entries: Vec<(String, PhoneClass)>) -> Result<Self, InventoryError> {
        match entries.first() {
            Some((s, PhoneClass::Silence)) if s == SILENCE => {}
            _ => return Err(InventoryError::MissingSilence),
        }
        let mut seen = HashSet::new();
        for (s, _) in &entries {
            if !seen.insert(s.to_ascii_uppercase()) {
                return Err(InventoryError::Duplicate(s.clone()));
            }
        }
        let (symbols, classes) = entries.into_iter().unzip();
        Ok(Self { symbols, classes })
    }

    /// 39 ARPAbet phonemes plus `SIL`, vowels first in alphabetical order.
    pub fn arpabet() -> Self {
        let mut entries = vec![(SILENCE.to_string(), PhoneClass::Silence)];
        entries.extend(ARPABET_VOWELS.iter().map(|s| (s.to_string(), PhoneClass::Vowel)));
        entries.extend(ARPABET_CONSONANTS.iter().map(|s| (s.to_string(), PhoneClass::Consonant)));
        Self::new(entries).expect("built-in inventory is valid")
    }

    /// Shared instance of [`PhoneInventory::arpabet`].
    pub fn default_shared() -> Arc<Self> {
        static DEFAULT: OnceLock<Arc<PhoneInventory>> = OnceLock::new();
        DEFAULT.get_or_init(|| Arc::new(Self::arpabet())).clone()
    }

    pub fn len(&self) -> usize {
        self.symbols.len()
    }

    pub fn is_empty(&self) -> bool {
        self.symbols.is_empty()
    }

    pub fn symbols(&self) -> &[String] {
        &self.symbols
    }

    pub fn symbol(&self, phone: Phone) -> &str {
        &self.symbols[phone.index()]
    }

    pub fn class(&self, phone: Phone) -> PhoneClass {
        self.classes[phone.index()]
    }

    pub fn is_vowel(&self, phone: Phone) -> bool {
        self.class(phone) == PhoneClass::Vowel
    }

    /// Case-insensitive lookup.
    pub fn lookup(&self, symbol: &str) -> Option<Phone> {
        self.symbols
            .iter()
            .position(|s| s.eq_ignore_ascii_case(symbol))
            .map(|i| Phone(i as u16))
    }

    pub fn phones(&self) -> impl Iterator<Item = Phone> {
        (0..self.symbols.len() as u16).map(Phone)
    }
}

/// Parses whitespace-separated phoneme labels. Positions in errors are 1-based.
pub fn parse_phoneme_string(s: &str, inv: &PhoneInventory) -> Result<Vec<Phone>, InventoryError> {
    s.split_whitespace()
        .enumerate()
        .map(|(i, token)| {
            inv.lookup(token).ok_or_else(|| InventoryError::UnknownSymbol {
                token: token.to_string(),
                position: i + 1,
            })
        })
        .collect()
}

/// Inclusive `[first, last]` index range, as authored in the catalog.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(from = "[usize; 2]", into = "[usize; 2]")]
pub struct Span {
    pub first: usize,
    pub last: usize,
}

impl Span {
    pub fn new(first: usize, last: usize) -> Self {
        Self { first, last }
    }

    pub fn contains(&self, i: usize) -> bool {
        self.first <= i && i <= self.last
    }

    pub fn indices(&self) -> std::ops::RangeInclusive<usize> {
        self.first..=self.last
    }
}

impl From<[usize; 2]> for Span {
    fn from([first, last]: [usize; 2]) -> Self {
        Self { first, last }
    }
}

impl From<Span> for [usize; 2] {
    fn from(s: Span) -> Self {
        [s.first, s.last]
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct WordScript {
    pub text: String,
    pub phonemes: Vec<Phone>,
    pub syllables: Vec<Span>,
    pub primary_stress: usize,
    pub content_word: bool,
}

impl WordScript {
    /// Syllable index holding phoneme position `pos`.
    pub fn syllable_of(&self, pos: usize) -> Option<usize> {
        self.syllables.iter().position(|s| s.contains(pos))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct MinimalPairSpec {
    pub word_index: usize,
    pub phoneme_index: usize,
    pub target: Phone,
    pub contrast: Phone,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExerciseScript {
    pub id: String,
    pub text: String,
    pub words: Vec<WordScript>,
    pub sentence_stress_words: Vec<usize>,
    pub breath_groups: Vec<Span>,
    pub minimal_pairs: Vec<MinimalPairSpec>,
    pub reference_audio: Vec<String>,
}

/// One expected phoneme in utterance order.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ExpectedPhone {
    pub phone: Phone,
    pub word_index: usize,
    /// Position within the word.
    pub position: usize,
    /// First phoneme of its word.
    pub word_start: bool,
}

impl ExerciseScript {
    /// Concatenates the words' phonemes, flagging the first phoneme of each word.
    pub fn flatten_expected(&self) -> Vec<ExpectedPhone> {
        self.words
            .iter()
            .enumerate()
            .flat_map(|(w, word)| {
                word.phonemes.iter().enumerate().map(move |(p, &phone)| ExpectedPhone {
                    phone,
                    word_index: w,
                    position: p,
                    word_start: p == 0,
                })
            })
            .collect()
    }

    pub fn phoneme_count(&self) -> usize {
        self.words.iter().map(|w| w.phonemes.len()).sum()
    }

    /// Flat index of the first phoneme of every word.
    pub fn word_offsets(&self) -> Vec<usize> {
        self.words
            .iter()
            .scan(0, |acc, w| {
                let start = *acc;
                *acc += w.phonemes.len();
                Some(start)
            })
            .collect()
    }

    /// Word indices after which an expected breath-group boundary falls.
    pub fn expected_boundaries(&self) -> Vec<usize> {
        let n = self.breath_groups.len();
        self.breath_groups.iter().take(n.saturating_sub(1)).map(|g| g.last).collect()
    }
}

// ── catalog file format ──────────────────────────────────────────────────────

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CatalogFile {
    pub exercises: Vec<ExerciseRecord>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExerciseRecord {
    pub id: String,
    pub text: String,
    pub words: Vec<WordRecord>,
    #[serde(default)]
    pub sentence_stress_words: Vec<usize>,
    pub breath_groups: Vec<Span>,
    #[serde(default)]
    pub minimal_pairs: Vec<MinimalPairRecord>,
    #[serde(default)]
    pub reference_audio: Vec<String>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct WordRecord {
    pub text: String,
    pub phonemes: Vec<String>,
    pub syllables: Vec<Span>,
    pub primary_stress: usize,
    pub content_word: bool,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MinimalPairRecord {
    pub word_index: usize,
    pub phoneme_index: usize,
    pub target: String,
    pub contrast: String,
}

#[derive(Debug, Error)]
pub enum CatalogError {
    #[error("cannot read catalog: {0}")]
    Io(#[from] std::io::Error),
    #[error("catalog parse error: {0}")]
    Parse(#[from] serde_json::Error),
    #[error("exercise '{exercise}', field '{field}': {message}")]
    Invalid {
        exercise: String,
        field: String,
        message: String,
    },
    #[error("duplicate exercise id '{0}'")]
    DuplicateId(String),
}

struct Checker<'a> {
    exercise: &'a str,
}

impl Checker<'_> {
    fn fail<T>(&self, field: impl Into<String>, message: impl Into<String>) -> Result<T, CatalogError> {
        Err(CatalogError::Invalid {
            exercise: self.exercise.to_string(),
            field: field.into(),
            message: message.into(),
        })
    }

    fn ensure(&self, cond: bool, field: impl Into<String>, message: impl Into<String>) -> Result<(), CatalogError> {
        if cond {
            Ok(())
        } else {
            self.fail(field, message)
        }
    }

    fn phone(&self, inv: &PhoneInventory, field: String, symbol: &str) -> Result<Phone, CatalogError> {
        match inv.lookup(symbol) {
            Some(p) if p.is_silence() => self.fail(field, format!("{SILENCE} cannot be scripted")),
            Some(p) => Ok(p),
            None => self.fail(field, format!("unknown phoneme '{symbol}'")),
        }
    }

    /// Ranges must cover `0..len` contiguously and in order.
    fn partition(&self, spans: &[Span], len: usize, field: &str) -> Result<(), CatalogError> {
        let mut next = 0;
        for (i, span) in spans.iter().enumerate() {
            self.ensure(
                span.first == next && span.first <= span.last,
                format!("{field}[{i}]"),
                format!("expected a range starting at {next}, got [{}, {}]", span.first, span.last),
            )?;
            next = span.last + 1;
        }
        self.ensure(next == len, field, format!("ranges cover {next} of {len} items"))
    }
}

impl ExerciseRecord {
    pub fn into_script(self, inv: &PhoneInventory) -> Result<ExerciseScript, CatalogError> {
        let check = Checker { exercise: &self.id };
        check.ensure(!self.id.trim().is_empty(), "id", "must not be empty")?;
        check.ensure(!self.words.is_empty(), "words", "must not be empty")?;

        let mut words = Vec::with_capacity(self.words.len());
        for (w, record) in self.words.into_iter().enumerate() {
            let field = |name: &str| format!("words[{w}].{name}");
            check.ensure(!record.phonemes.is_empty(), field("phonemes"), "must not be empty")?;
            let phonemes = record
                .phonemes
                .iter()
                .enumerate()
                .map(|(p, s)| check.phone(inv, format!("words[{w}].phonemes[{p}]"), s))
                .collect::<Result<Vec<_>, _>>()?;
            check.partition(&record.syllables, phonemes.len(), &field("syllables"))?;
            check.ensure(
                record.primary_stress < record.syllables.len(),
                field("primary_stress"),
                format!(
                    "syllable {} out of range for {} syllables",
                    record.primary_stress,
                    record.syllables.len()
                ),
            )?;
            if phonemes.iter().any(|&p| inv.is_vowel(p)) {
                for (s, span) in record.syllables.iter().enumerate() {
                    check.ensure(
                        span.indices().any(|i| inv.is_vowel(phonemes[i])),
                        format!("words[{w}].syllables[{s}]"),
                        "syllable has no vowel",
                    )?;
                }
            }
            words.push(WordScript {
                text: record.text,
                phonemes,
                syllables: record.syllables,
                primary_stress: record.primary_stress,
                content_word: record.content_word,
            });
        }

        check.partition(&self.breath_groups, words.len(), "breath_groups")?;

        let mut stress = self.sentence_stress_words;
        for &w in &stress {
            check.ensure(w < words.len(), "sentence_stress_words", format!("word {w} out of range"))?;
        }
        stress.sort_unstable();
        let before = stress.len();
        stress.dedup();
        check.ensure(stress.len() == before, "sentence_stress_words", "duplicate word index")?;

        let mut minimal_pairs = Vec::with_capacity(self.minimal_pairs.len());
        let mut pair_words = HashSet::new();
        for (i, mp) in self.minimal_pairs.into_iter().enumerate() {
            let field = |name: &str| format!("minimal_pairs[{i}].{name}");
            let word = words.get(mp.word_index);
            let Some(word) = word else {
                return check.fail(field("word_index"), format!("word {} out of range", mp.word_index));
            };
            check.ensure(
                pair_words.insert(mp.word_index),
                field("word_index"),
                "at most one minimal pair per word",
            )?;
            let Some(&scripted) = word.phonemes.get(mp.phoneme_index) else {
                return check.fail(field("phoneme_index"), format!("position {} out of range", mp.phoneme_index));
            };
            let target = check.phone(inv, field("target"), &mp.target)?;
            let contrast = check.phone(inv, field("contrast"), &mp.contrast)?;
            check.ensure(target != contrast, field("contrast"), "must differ from target")?;
            check.ensure(
                target == scripted,
                field("target"),
                format!("scripted phoneme is '{}'", inv.symbol(scripted)),
            )?;
            minimal_pairs.push(MinimalPairSpec {
                word_index: mp.word_index,
                phoneme_index: mp.phoneme_index,
                target,
                contrast,
            });
        }

        Ok(ExerciseScript {
            id: self.id,
            text: self.text,
            words,
            sentence_stress_words: stress,
            breath_groups: self.breath_groups,
            minimal_pairs,
            reference_audio: self.reference_audio,
        })
    }
}

impl ExerciseScript {
    /// Back to the catalog representation.
    pub fn to_record(&self, inv: &PhoneInventory) -> ExerciseRecord {
        ExerciseRecord {
            id: self.id.clone(),
            text: self.text.clone(),
            words: self
                .words
                .iter()
                .map(|w| WordRecord {
                    text: w.text.clone(),
                    phonemes: w.phonemes.iter().map(|&p| inv.symbol(p).to_string()).collect(),
                    syllables: w.syllables.clone(),
                    primary_stress: w.primary_stress,
                    content_word: w.content_word,
                })
                .collect(),
            sentence_stress_words: self.sentence_stress_words.clone(),
            breath_groups: self.breath_groups.clone(),
            minimal_pairs: self
                .minimal_pairs
                .iter()
                .map(|mp| MinimalPairRecord {
                    word_index: mp.word_index,
                    phoneme_index: mp.phoneme_index,
                    target: inv.symbol(mp.target).to_string(),
                    contrast: inv.symbol(mp.contrast).to_string(),
                })
                .collect(),
            reference_audio: self.reference_audio.clone(),
        }
    }
}

/// Parses and validates a catalog document, rejecting duplicate ids.
pub fn parse_exercise_catalog(json: &str, inv: &PhoneInventory) -> Result<Vec<ExerciseScript>, CatalogError> {
    let file: CatalogFile = serde_json::from_str(json)?;
    let mut ids = HashSet::new();
    file.exercises
        .into_iter()
        .map(|record| {
            if !ids.insert(record.id.clone()) {
                return Err(CatalogError::DuplicateId(record.id));
            }
            record.into_script(inv)
        })
        .collect()
}

pub fn load_exercise_catalog(path: impl AsRef<Path>, inv: &PhoneInventory) -> Result<Vec<ExerciseScript>, CatalogError> {
    let text = std::fs::read_to_string(path)?;
    parse_exercise_catalog(&text, inv)
}

impl fmt::Display for Span {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "[{}, {}]", self.first, self.last)
    }
}
