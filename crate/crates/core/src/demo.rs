//! Synthetic cough recordings for exercising the full pipeline without
//! clinical data.
//!
//! Every patient coughs five times. A cough is an enveloped mix of
//! low-passed noise and a low voiced tone; coughs of "abnormal" patients
//! additionally carry a strong high-frequency noise band and tone, which
//! shifts centroid, roll-off and the upper filterbank channels. Clips are
//! written at 44.1 kHz with varying lengths so that resampling, trimming
//! and padding are all exercised.

use std::f64::consts::PI;
use std::fs;
use std::path::{Path, PathBuf};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::audio_io::{encode_wav_pcm16, AudioClip};
use crate::error::Result;

pub const DEMO_RATE_HZ: u32 = 44_100;
pub const DEMO_PATIENTS: usize = 8;
pub const DEMO_COUGHS_PER_PATIENT: usize = 5;

/// One synthetic cough. `abnormal` adds the high band.
pub fn synth_cough(rng: &mut impl Rng, abnormal: bool, voice_hz: f64) -> AudioClip {
    let duration = rng.gen_range(0.35..0.75);
    let n = (duration * f64::from(DEMO_RATE_HZ)) as usize;
    let onset = rng.gen_range(0.0..0.15 * duration);
    let decay = rng.gen_range(0.08..0.16);
    let gain = rng.gen_range(0.3..0.8);
    let high_hz = rng.gen_range(2800.0..3600.0);
    let dt = 1.0 / f64::from(DEMO_RATE_HZ);

    let mut lowpassed = 0.0;
    let mut prev_noise = 0.0;
    let samples = (0..n)
        .map(|i| {
            let t = i as f64 * dt;
            let env = if t < onset {
                0.0
            } else {
                let u = t - onset;
                (1.0 - (-u / 0.01).exp()) * (-u / decay).exp()
            };
            let white: f64 = rng.gen_range(-1.0..1.0);
            lowpassed += 0.08 * (white - lowpassed);
            let mut s = 0.6 * lowpassed + 0.3 * (2.0 * PI * voice_hz * t).sin();
            if abnormal {
                // first difference of white noise is high-pass
                let highpassed = 0.5 * (white - prev_noise);
                s += 0.5 * highpassed + 0.25 * (2.0 * PI * high_hz * t).sin();
            }
            prev_noise = white;
            let floor = 0.002 * rng.gen_range(-1.0..1.0);
            (gain * env * s + floor).clamp(-1.0, 1.0)
        })
        .collect();
    AudioClip {
        samples,
        sample_rate_hz: DEMO_RATE_HZ,
    }
}

/// Writes `wav/*.wav` and `manifest.csv` under `dir` and returns the
/// manifest path. Patients `p01..p04` are abnormal, `p05..p08` normal.
pub fn write_demo_dataset(dir: &Path, seed: u64) -> Result<PathBuf> {
    let wav_dir = dir.join("wav");
    fs::create_dir_all(&wav_dir)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut manifest = String::from("patient_id,cough_path,label\n");
    for p in 1..=DEMO_PATIENTS {
        let abnormal = p <= DEMO_PATIENTS / 2;
        let voice_hz = rng.gen_range(180.0..420.0);
        let label = if abnormal { "abnormal" } else { "normal" };
        for c in 1..=DEMO_COUGHS_PER_PATIENT {
            let clip = synth_cough(&mut rng, abnormal, voice_hz);
            let rel = format!("wav/p{p:02}_c{c}.wav");
            fs::write(dir.join(&rel), encode_wav_pcm16(&clip))?;
            manifest.push_str(&format!("p{p:02},{rel},{label}\n"));
        }
    }
    let path = dir.join("manifest.csv");
    fs::write(&path, manifest)?;
    Ok(path)
}
