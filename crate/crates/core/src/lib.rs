//! Speech analysis backend for pronunciation training.
//!
//! A learner recording of a scripted utterance goes through:
//!
//! 1. [`audio`]: WAV decoding and resampling to 16 kHz mono.
//! 2. [`acoustic`]: a phoneme posteriorgram from a [`acoustic::PosteriorProvider`].
//! 3. [`validation`]: speech-rate, voicing and phonetic-proximity checks.
//! 4. [`alignment`]: forced alignment of the expected phonemes plus free decoding.
//! 5. [`scoring`]: goodness of pronunciation per phoneme and minimal pairs.
//! 6. [`prosody`]: pitch tracking, word and sentence stress, pauses.
//! 7. [`feedback`]: the per-word tables and feedback cards.
//!
//! [`pipeline::analyze`] chains all of it.

pub mod acoustic;
pub mod alignment;
pub mod audio;
pub mod exec;
pub mod feedback;
pub mod inventory;
pub mod pipeline;
pub mod prosody;
pub mod scoring;
pub mod validation;

pub use acoustic::{Posteriorgram, PosteriorProvider, ProviderKind};
pub use alignment::{forced_align, free_decode, levenshtein, AlignmentResult, PhoneSegment};
pub use audio::AudioBuffer;
pub use exec::Execution;
pub use feedback::{AnalysisResult, FeedbackCard};
pub use inventory::{ExerciseScript, Phone, PhoneInventory};
pub use pipeline::{analyze, Outcome, PipelineConfig, PipelineError};
pub use validation::ValidationReport;
