//! PCM audio buffers: WAV decoding, resampling, framing and frame levels.
//!
//! Everything downstream of ingest works on mono `f32` samples in `[-1, 1]`
//! at [`PROCESSING_RATE`].

use thiserror::Error;

/// Internal processing rate of the whole pipeline, in Hz.
pub const PROCESSING_RATE: u32 = 16_000;

/// Floor added to the RMS before taking the logarithm, keeps silence finite.
pub const DB_EPSILON: f64 = 1e-9;

const WAVE_FORMAT_PCM: u16 = 1;
const WAVE_FORMAT_IEEE_FLOAT: u16 = 3;
const WAVE_FORMAT_EXTENSIBLE: u16 = 0xFFFE;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum WavError {
    #[error("malformed WAV header: {0}")]
    MalformedHeader(String),
    #[error("unsupported WAV encoding: format tag {format}, {bits} bits, {channels} channels")]
    Unsupported { format: u16, bits: u16, channels: u16 },
    #[error("WAV data chunk is empty")]
    EmptyData,
}

/// Mono PCM samples with their sample rate.
#[derive(Debug, Clone, PartialEq)]
pub struct AudioBuffer {
    samples: Vec<f32>,
    sample_rate: u32,
}

impl AudioBuffer {
    /// Builds a buffer, clamping samples into `[-1, 1]`.
    ///
    /// # Panics
    /// If `sample_rate` is zero.
    pub fn new(mut samples: Vec<f32>, sample_rate: u32) -> Self {
        assert!(sample_rate > 0, "sample rate must be positive");
        for s in &mut samples {
            *s = if s.is_nan() { 0.0 } else { s.clamp(-1.0, 1.0) };
        }
        Self { samples, sample_rate }
    }

    pub fn samples(&self) -> &[f32] {
        &self.samples
    }

    pub fn sample_rate(&self) -> u32 {
        self.sample_rate
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn duration_ms(&self) -> f64 {
        1000.0 * self.samples.len() as f64 / self.sample_rate as f64
    }

    pub fn into_samples(self) -> Vec<f32> {
        self.samples
    }
}

/// Four-byte chunk id and its payload.
type Chunk<'a> = ([u8; 4], &'a [u8]);

struct ChunkReader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> ChunkReader<'a> {
    fn next_chunk(&mut self) -> Result<Option<Chunk<'a>>, WavError> {
        if self.pos + 8 > self.bytes.len() {
            return Ok(None);
        }
        let id: [u8; 4] = self.bytes[self.pos..self.pos + 4].try_into().unwrap();
        let size = u32::from_le_bytes(self.bytes[self.pos + 4..self.pos + 8].try_into().unwrap()) as usize;
        let start = self.pos + 8;
        // Some writers leave the data size at 0xFFFFFFFF or overshoot; clip to what is there.
        let end = start.saturating_add(size).min(self.bytes.len());
        self.pos = end + (size & 1);
        Ok(Some((id, &self.bytes[start..end])))
    }
}

struct Format {
    tag: u16,
    channels: u16,
    sample_rate: u32,
    bits: u16,
}

fn parse_fmt(body: &[u8]) -> Result<Format, WavError> {
    if body.len() < 16 {
        return Err(WavError::MalformedHeader("'fmt ' chunk shorter than 16 bytes".into()));
    }
    let u16_at = |i: usize| u16::from_le_bytes([body[i], body[i + 1]]);
    let mut tag = u16_at(0);
    let channels = u16_at(2);
    let sample_rate = u32::from_le_bytes(body[4..8].try_into().unwrap());
    let bits = u16_at(14);
    if tag == WAVE_FORMAT_EXTENSIBLE && body.len() >= 26 {
        // first two bytes of the subformat GUID carry the real tag
        tag = u16_at(24);
    }
    if sample_rate == 0 {
        return Err(WavError::MalformedHeader("sample rate is zero".into()));
    }
    Ok(Format { tag, channels, sample_rate, bits })
}

/// Decodes a RIFF/WAVE file holding 16-bit PCM or 32-bit float samples.
///
/// Stereo input is downmixed by averaging the two channels. Chunks other
/// than `fmt ` and `data` are skipped.
pub fn decode_wav(bytes: &[u8]) -> Result<AudioBuffer, WavError> {
    if bytes.len() < 12 || &bytes[0..4] != b"RIFF" || &bytes[8..12] != b"WAVE" {
        return Err(WavError::MalformedHeader("missing RIFF/WAVE magic".into()));
    }
    let mut reader = ChunkReader { bytes, pos: 12 };
    let mut format = None;
    let mut data = None;
    while let Some((id, body)) = reader.next_chunk()? {
        match &id {
            b"fmt " => format = Some(parse_fmt(body)?),
            b"data" => {
                data = Some(body);
                if format.is_some() {
                    break;
                }
            }
            _ => {}
        }
    }
    let format = format.ok_or_else(|| WavError::MalformedHeader("no 'fmt ' chunk".into()))?;
    let data = data.ok_or_else(|| WavError::MalformedHeader("no 'data' chunk".into()))?;

    let supported = matches!(
        (format.tag, format.bits),
        (WAVE_FORMAT_PCM, 16) | (WAVE_FORMAT_IEEE_FLOAT, 32)
    ) && (1..=2).contains(&format.channels);
    if !supported {
        return Err(WavError::Unsupported {
            format: format.tag,
            bits: format.bits,
            channels: format.channels,
        });
    }

    let channels = format.channels as usize;
    let bytes_per_sample = (format.bits / 8) as usize;
    let frame_bytes = bytes_per_sample * channels;
    let frames = data.len() / frame_bytes;
    if frames == 0 {
        return Err(WavError::EmptyData);
    }

    let read = |chunk: &[u8]| -> f32 {
        if format.tag == WAVE_FORMAT_PCM {
            i16::from_le_bytes([chunk[0], chunk[1]]) as f32 / 32768.0
        } else {
            f32::from_le_bytes(chunk.try_into().unwrap())
        }
    };
    let samples = data[..frames * frame_bytes]
        .chunks_exact(frame_bytes)
        .map(|frame| {
            let sum: f32 = frame.chunks_exact(bytes_per_sample).map(read).sum();
            sum / channels as f32
        })
        .collect();
    Ok(AudioBuffer::new(samples, format.sample_rate))
}

/// Encodes a buffer as 16-bit mono PCM WAV.
pub fn encode_wav_pcm16(buffer: &AudioBuffer) -> Vec<u8> {
    let data_len = buffer.len() * 2;
    let mut out = Vec::with_capacity(44 + data_len);
    out.extend_from_slice(b"RIFF");
    out.extend_from_slice(&((36 + data_len) as u32).to_le_bytes());
    out.extend_from_slice(b"WAVE");
    out.extend_from_slice(b"fmt ");
    out.extend_from_slice(&16u32.to_le_bytes());
    out.extend_from_slice(&WAVE_FORMAT_PCM.to_le_bytes());
    out.extend_from_slice(&1u16.to_le_bytes());
    out.extend_from_slice(&buffer.sample_rate.to_le_bytes());
    out.extend_from_slice(&(buffer.sample_rate * 2).to_le_bytes());
    out.extend_from_slice(&2u16.to_le_bytes());
    out.extend_from_slice(&16u16.to_le_bytes());
    out.extend_from_slice(b"data");
    out.extend_from_slice(&(data_len as u32).to_le_bytes());
    for &s in &buffer.samples {
        let q = (s * 32768.0).round().clamp(-32768.0, 32767.0) as i16;
        out.extend_from_slice(&q.to_le_bytes());
    }
    out
}

/// Linear-interpolation resampling to `target_rate`.
///
/// Output length is `round(len * target / source)`. Equal rates return a copy.
pub fn resample(buffer: &AudioBuffer, target_rate: u32) -> AudioBuffer {
    assert!(target_rate > 0, "target rate must be positive");
    if buffer.sample_rate == target_rate || buffer.is_empty() {
        return AudioBuffer {
            samples: buffer.samples.clone(),
            sample_rate: target_rate,
        };
    }
    let src = &buffer.samples;
    let ratio = buffer.sample_rate as f64 / target_rate as f64;
    let out_len = (src.len() as f64 * target_rate as f64 / buffer.sample_rate as f64).round() as usize;
    let last = src.len() - 1;
    let samples = (0..out_len)
        .map(|i| {
            let pos = i as f64 * ratio;
            let idx = pos.floor() as usize;
            if idx >= last {
                return src[last];
            }
            let frac = (pos - idx as f64) as f32;
            src[idx] + (src[idx + 1] - src[idx]) * frac
        })
        .collect();
    AudioBuffer::new(samples, target_rate)
}

/// Fixed-length windows over a sample slice at a regular hop.
#[derive(Debug, Clone, Copy)]
pub struct FrameSeries<'a> {
    samples: &'a [f32],
    window: usize,
    hop: usize,
    sample_rate: u32,
}

impl<'a> FrameSeries<'a> {
    pub fn len(&self) -> usize {
        frame_count(self.samples.len(), self.window, self.hop)
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Window length in samples.
    pub fn window(&self) -> usize {
        self.window
    }

    /// Hop length in samples.
    pub fn hop(&self) -> usize {
        self.hop
    }

    pub fn sample_rate(&self) -> u32 {
        self.sample_rate
    }

    pub fn get(&self, index: usize) -> Option<&'a [f32]> {
        (index < self.len()).then(|| {
            let start = index * self.hop;
            &self.samples[start..start + self.window]
        })
    }

    pub fn iter(&self) -> impl ExactSizeIterator<Item = &'a [f32]> + 'a {
        let Self { samples, window, hop, .. } = *self;
        (0..self.len()).map(move |i| &samples[i * hop..i * hop + window])
    }
}

/// `1 + (n - window) / hop` for `n >= window`, else 0.
pub fn frame_count(n: usize, window: usize, hop: usize) -> usize {
    if n < window || window == 0 || hop == 0 {
        0
    } else {
        1 + (n - window) / hop
    }
}

pub fn ms_to_samples(ms: f64, sample_rate: u32) -> usize {
    (ms * sample_rate as f64 / 1000.0).round() as usize
}

/// Frames a buffer with window and hop given in milliseconds. The trailing
/// partial window is dropped.
///
/// # Panics
/// Unless `window_ms >= hop_ms > 0`.
pub fn frame(buffer: &AudioBuffer, window_ms: f64, hop_ms: f64) -> FrameSeries<'_> {
    assert!(hop_ms > 0.0 && window_ms >= hop_ms, "need window_ms >= hop_ms > 0");
    let window = ms_to_samples(window_ms, buffer.sample_rate).max(1);
    let hop = ms_to_samples(hop_ms, buffer.sample_rate).max(1);
    FrameSeries {
        samples: &buffer.samples,
        window,
        hop,
        sample_rate: buffer.sample_rate,
    }
}

/// Level of a window in dBFS: `20 log10(rms + 1e-9)`.
pub fn rms_db(frame: &[f32]) -> f64 {
    debug_assert!(!frame.is_empty());
    let energy: f64 = frame.iter().map(|&s| (s as f64) * (s as f64)).sum();
    let rms = (energy / frame.len().max(1) as f64).sqrt();
    20.0 * (rms + DB_EPSILON).log10()
}
