mod common;

use capt_core::audio::{decode_wav, encode_wav_pcm16, frame, frame_count, resample, rms_db, AudioBuffer};
use common::*;
use proptest::prelude::*;
use rustfft::num_complex::Complex;
use rustfft::FftPlanner;

fn pearson(a: &[f32], b: &[f32]) -> f64 {
    let n = a.len().min(b.len());
    let (a, b) = (&a[..n], &b[..n]);
    let ma = a.iter().map(|&x| x as f64).sum::<f64>() / n as f64;
    let mb = b.iter().map(|&x| x as f64).sum::<f64>() / n as f64;
    let mut cov = 0.0;
    let mut va = 0.0;
    let mut vb = 0.0;
    for (&x, &y) in a.iter().zip(b) {
        let (dx, dy) = (x as f64 - ma, y as f64 - mb);
        cov += dx * dy;
        va += dx * dx;
        vb += dy * dy;
    }
    cov / (va * vb).sqrt()
}

/// Frequency of the largest DFT bin, in Hz.
fn dominant_frequency(samples: &[f32], rate: u32) -> f64 {
    let mut spectrum: Vec<Complex<f64>> = samples.iter().map(|&s| Complex::new(s as f64, 0.0)).collect();
    FftPlanner::new().plan_fft_forward(spectrum.len()).process(&mut spectrum);
    let half = spectrum.len() / 2;
    let bin = (1..half).max_by(|&a, &b| spectrum[a].norm().total_cmp(&spectrum[b].norm())).unwrap();
    bin as f64 * rate as f64 / samples.len() as f64
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn pcm16_round_trip_within_one_lsb(
        samples in prop::collection::vec(-1.0f32..=1.0, 1..2000),
        rate in prop::sample::select(vec![8000u32, 16000, 22050, 44100, 48000]),
    ) {
        let original = AudioBuffer::new(samples, rate);
        let decoded = decode_wav(&encode_wav_pcm16(&original)).unwrap();
        prop_assert_eq!(decoded.sample_rate(), rate);
        prop_assert_eq!(decoded.len(), original.len());
        for (a, b) in original.samples().iter().zip(decoded.samples()) {
            prop_assert!((a - b).abs() <= 1.0 / 32768.0, "{} vs {}", a, b);
        }
    }

    #[test]
    fn frame_count_formula(n in 0usize..1_000_000, w in 1usize..5000, h in 1usize..5000) {
        let expected = if n >= w { 1 + (n - w) / h } else { 0 };
        prop_assert_eq!(frame_count(n, w, h), expected);
    }

    #[test]
    fn framing_views_are_contiguous(n in 0usize..20_000, window_ms in 5u32..60, hop_ms in 1u32..30) {
        prop_assume!(hop_ms <= window_ms);
        let samples: Vec<f32> = (0..n).map(|i| (i % 1000) as f32 / 1000.0).collect();
        let buf = AudioBuffer::new(samples, 16_000);
        let series = frame(&buf, window_ms as f64, hop_ms as f64);
        let (w, h) = (window_ms as usize * 16, hop_ms as usize * 16);
        prop_assert_eq!(series.len(), if n >= w { 1 + (n - w) / h } else { 0 });
        for (i, f) in series.iter().enumerate() {
            prop_assert_eq!(f, &buf.samples()[i * h..i * h + w]);
        }
    }

    #[test]
    fn resample_down_and_up_keeps_band_limited_signal(
        rate in prop::sample::select(vec![8000u32, 16000, 22050]),
        tones in prop::collection::vec((0.02f64..0.25, 0.1f64..0.4, 0.0f64..std::f64::consts::TAU), 1..4),
    ) {
        // content below rate / 4
        let n = rate as usize / 4;
        let x: Vec<f32> = (0..n)
            .map(|i| tones.iter().map(|(f, a, p)| a * (2.0 * std::f64::consts::PI * f * i as f64 + p).sin()).sum::<f64>() as f32)
            .collect();
        let buf = AudioBuffer::new(x.clone(), rate);
        let up = resample(&buf, 2 * rate);
        let back = resample(&up, rate);
        prop_assert_eq!(back.len(), n);
        prop_assert!(pearson(&x, back.samples()) > 0.99);
    }
}

#[test]
fn resampled_tone_keeps_its_frequency() {
    // one second of 100 Hz at 44.1 kHz: the DFT peak of the 16 kHz copy is at bin 100
    let x: Vec<f32> = (0..44_100).map(|i| (0.5 * (2.0 * std::f64::consts::PI * 100.0 * i as f64 / 44_100.0).sin()) as f32).collect();
    let out = resample(&AudioBuffer::new(x, 44_100), 16_000);
    assert_eq!(out.len(), 16_000);
    assert_eq!(dominant_frequency(out.samples(), 16_000), 100.0);
}

#[test]
fn sine_level_matches_hand_computation() {
    let s = sine(440.0, 0.5, 1000.0);
    let want = 20.0 * (0.5 / 2f64.sqrt()).log10();
    assert!((rms_db(&s) - want).abs() < 0.01);
    assert!((want - -9.03).abs() < 0.01);
}

#[test]
fn stereo_float_is_averaged() {
    let mut bytes = Vec::new();
    let frames: [[f32; 2]; 3] = [[0.5, -0.5], [1.0, 0.0], [0.25, 0.75]];
    let data_len = frames.len() * 8;
    bytes.extend_from_slice(b"RIFF");
    bytes.extend_from_slice(&((36 + data_len) as u32).to_le_bytes());
    bytes.extend_from_slice(b"WAVEfmt ");
    bytes.extend_from_slice(&16u32.to_le_bytes());
    bytes.extend_from_slice(&3u16.to_le_bytes());
    bytes.extend_from_slice(&2u16.to_le_bytes());
    bytes.extend_from_slice(&8000u32.to_le_bytes());
    bytes.extend_from_slice(&(8000u32 * 8).to_le_bytes());
    bytes.extend_from_slice(&8u16.to_le_bytes());
    bytes.extend_from_slice(&32u16.to_le_bytes());
    bytes.extend_from_slice(b"LIST");
    bytes.extend_from_slice(&2u32.to_le_bytes());
    bytes.extend_from_slice(b"xx");
    bytes.extend_from_slice(b"data");
    bytes.extend_from_slice(&(data_len as u32).to_le_bytes());
    for [l, r] in frames {
        bytes.extend_from_slice(&l.to_le_bytes());
        bytes.extend_from_slice(&r.to_le_bytes());
    }
    let buf = decode_wav(&bytes).unwrap();
    assert_eq!(buf.samples(), &[0.0, 0.5, 0.5]);
    assert_eq!(buf.sample_rate(), 8000);
}
