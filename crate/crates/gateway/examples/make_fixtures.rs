//! Regenerates the recordings and posteriorgram under `tests/fixtures`.
//!
//! ```text
//! cargo run -p capt-gateway --example make_fixtures
//! ```
//!
//! The golden results are produced afterwards with `capt analyze`; see the
//! README.

use std::f64::consts::PI;
use std::path::{Path, PathBuf};

use capt_core::acoustic::{store_ppg, synth_posteriorgram, TimedPhone, DEFAULT_HOP_MS};
use capt_core::audio::{encode_wav_pcm16, AudioBuffer, PROCESSING_RATE};
use capt_core::inventory::PhoneInventory;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const PPG_PEAK: f64 = 0.9;

#[derive(Clone, Copy)]
enum Sound {
    Silence,
    /// Harmonic tone: f0 in Hz, level in dBFS.
    Voiced(f64, f64),
    /// White noise at the given dBFS.
    Noise(f64),
}

use Sound::*;

struct Synth {
    samples: Vec<f32>,
    phase: f64,
    rng: ChaCha8Rng,
    timeline: Vec<TimedPhone>,
    inv: std::sync::Arc<PhoneInventory>,
}

impl Synth {
    fn new(seed: u64) -> Self {
        Self {
            samples: Vec::new(),
            phase: 0.0,
            rng: ChaCha8Rng::seed_from_u64(seed),
            timeline: Vec::new(),
            inv: PhoneInventory::default_shared(),
        }
    }

    fn now_ms(&self) -> f64 {
        self.samples.len() as f64 * 1000.0 / PROCESSING_RATE as f64
    }

    fn push(&mut self, phone: Option<&str>, sound: Sound, ms: u32) {
        let start = self.now_ms();
        let n = (ms * PROCESSING_RATE / 1000) as usize;
        match sound {
            Silence => self.samples.extend(std::iter::repeat_n(0.0, n)),
            Voiced(f0, db) => {
                // three harmonics at 1, 1/2, 1/4 amplitude; rms of the sum is a·sqrt(21/32)
                let amp = 10f64.powf(db / 20.0) / (21.0f64 / 32.0).sqrt();
                for _ in 0..n {
                    self.phase += 2.0 * PI * f0 / PROCESSING_RATE as f64;
                    let p = self.phase;
                    let s = amp * (p.sin() + 0.5 * (2.0 * p).sin() + 0.25 * (3.0 * p).sin());
                    self.samples.push(s as f32);
                }
            }
            Noise(db) => {
                // uniform on [-a, a] has rms a/sqrt(3)
                let a = 10f64.powf(db / 20.0) * 3f64.sqrt();
                for _ in 0..n {
                    self.samples.push(self.rng.gen_range(-a..a) as f32);
                }
            }
        }
        if let Some(symbol) = phone {
            let p = self.inv.lookup(symbol).unwrap_or_else(|| panic!("unknown phoneme {symbol}"));
            self.timeline.push(TimedPhone::new(p, start, self.now_ms()));
        }
    }

    fn script(&mut self, items: &[(Option<&str>, Sound, u32)]) {
        for &(phone, sound, ms) in items {
            self.push(phone, sound, ms);
        }
    }

    fn write_wav(&self, path: &Path) {
        let buffer = AudioBuffer::new(self.samples.clone(), PROCESSING_RATE);
        std::fs::write(path, encode_wav_pcm16(&buffer)).expect("write wav");
        println!("wrote {}", path.display());
    }

    fn write_ppg(&self, path: &Path) {
        let ppg = synth_posteriorgram(&self.timeline, Some(self.now_ms()), DEFAULT_HOP_MS, PPG_PEAK, self.inv.clone())
            .expect("valid timeline");
        store_ppg(&ppg, path).expect("write ppg");
        println!("wrote {}", path.display());
    }
}

/// "Open the window, then sit down." with a pause after "window".
fn open_the_window(dir: &Path) {
    let mut s = Synth::new(1);
    s.script(&[
        (None, Silence, 300),
        // open
        (Some("OW"), Voiced(170.0, -14.0), 160),
        (Some("P"), Noise(-32.0), 60),
        (Some("AH"), Voiced(140.0, -22.0), 80),
        (Some("N"), Voiced(140.0, -26.0), 60),
        // the
        (Some("DH"), Voiced(140.0, -28.0), 60),
        (Some("AH"), Voiced(135.0, -24.0), 60),
        // window
        (Some("W"), Voiced(200.0, -24.0), 60),
        (Some("IH"), Voiced(230.0, -8.0), 180),
        (Some("N"), Voiced(200.0, -22.0), 60),
        (Some("D"), Voiced(180.0, -28.0), 40),
        (Some("OW"), Voiced(170.0, -16.0), 100),
        (None, Silence, 360),
        // then
        (Some("DH"), Voiced(140.0, -28.0), 60),
        (Some("EH"), Voiced(150.0, -20.0), 100),
        (Some("N"), Voiced(150.0, -26.0), 60),
        // sit
        (Some("S"), Noise(-28.0), 100),
        (Some("IH"), Voiced(150.0, -20.0), 80),
        (Some("T"), Noise(-30.0), 60),
        // down
        (Some("D"), Voiced(200.0, -28.0), 40),
        (Some("AW"), Voiced(230.0, -9.0), 180),
        (Some("N"), Voiced(200.0, -22.0), 80),
        (None, Silence, 300),
    ]);
    s.write_wav(&dir.join("audio/ex-001.wav"));
    s.write_ppg(&dir.join("ppg/ex-001.json"));
}

/// "Hello there." at an even pace, for the demo provider.
fn hello_there(dir: &Path) {
    let mut s = Synth::new(2);
    s.script(&[
        (None, Silence, 300),
        (Some("HH"), Noise(-30.0), 100),
        (Some("AH"), Voiced(150.0, -18.0), 100),
        (Some("L"), Voiced(170.0, -24.0), 100),
        (Some("OW"), Voiced(220.0, -8.0), 100),
        (Some("DH"), Voiced(150.0, -28.0), 100),
        (Some("EH"), Voiced(140.0, -22.0), 100),
        (Some("R"), Voiced(130.0, -26.0), 100),
        (None, Silence, 300),
    ]);
    s.write_wav(&dir.join("audio/ex-002.wav"));
}

fn short_clip(dir: &Path) {
    let mut s = Synth::new(3);
    s.push(None, Voiced(200.0, -12.0), 100);
    s.write_wav(&dir.join("audio/short-100ms.wav"));
}

fn silence(dir: &Path) {
    let mut s = Synth::new(4);
    s.push(None, Silence, 3000);
    s.write_wav(&dir.join("audio/silence-3s.wav"));
}

fn main() {
    let dir = std::env::args_os()
        .nth(1)
        .map(PathBuf::from)
        .unwrap_or_else(|| Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures"));
    for sub in ["audio", "ppg"] {
        std::fs::create_dir_all(dir.join(sub)).expect("create fixture dirs");
    }
    open_the_window(&dir);
    hello_there(&dir);
    short_clip(&dir);
    silence(&dir);
}
