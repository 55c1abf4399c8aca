//! Recording ingestion: RIFF/WAVE decoding, rational-ratio polyphase
//! resampling and fixed-length cough segments.

use std::f64::consts::PI;

use log::warn;

use crate::error::{Error, Result};

/// Rate every cough is analysed at.
pub const SEGMENT_RATE_HZ: u32 = 16_000;
/// Length of a cough segment.
pub const SEGMENT_MS: u32 = 500;

/// Taps contributing to each output sample of the resampler.
const TAPS_PER_PHASE: usize = 64;
const KAISER_BETA: f64 = 8.6;
/// Pass-band edge as a fraction of the lower of the two Nyquist rates.
const CUTOFF_FRACTION: f64 = 0.9;

const WAVE_FORMAT_PCM: u16 = 0x0001;
const WAVE_FORMAT_IEEE_FLOAT: u16 = 0x0003;
const WAVE_FORMAT_EXTENSIBLE: u16 = 0xFFFE;

/// Mono PCM audio with its sample rate.
#[derive(Debug, Clone, PartialEq)]
pub struct AudioClip {
    pub samples: Vec<f64>,
    pub sample_rate_hz: u32,
}

impl AudioClip {
    pub fn new(samples: Vec<f64>, sample_rate_hz: u32) -> Result<Self> {
        if sample_rate_hz == 0 {
            return Err(Error::invalid("sample rate must be positive"));
        }
        if samples.is_empty() {
            return Err(Error::EmptyAudio);
        }
        if samples.iter().any(|s| !s.is_finite()) {
            return Err(Error::invalid("audio contains non-finite samples"));
        }
        Ok(Self {
            samples,
            sample_rate_hz,
        })
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn duration_secs(&self) -> f64 {
        self.samples.len() as f64 / f64::from(self.sample_rate_hz)
    }
}

/// A fixed-length cough excerpt at [`SEGMENT_RATE_HZ`].
#[derive(Debug, Clone, PartialEq)]
pub struct CoughSegment {
    pub samples: Vec<f64>,
    pub sample_rate_hz: u32,
    pub source_id: String,
}

impl CoughSegment {
    /// Wraps raw samples, checking the length implied by `SEGMENT_MS`.
    pub fn from_samples(samples: Vec<f64>, source_id: impl Into<String>) -> Result<Self> {
        let expected = segment_len(SEGMENT_MS);
        if samples.len() != expected {
            return Err(Error::invalid(format!(
                "segment must hold {expected} samples, got {}",
                samples.len()
            )));
        }
        if samples.iter().any(|s| !s.is_finite()) {
            return Err(Error::invalid("segment contains non-finite samples"));
        }
        Ok(Self {
            samples,
            sample_rate_hz: SEGMENT_RATE_HZ,
            source_id: source_id.into(),
        })
    }

    pub fn with_source_id(mut self, id: impl Into<String>) -> Self {
        self.source_id = id.into();
        self
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }
}

fn segment_len(duration_ms: u32) -> usize {
    (u64::from(duration_ms) * u64::from(SEGMENT_RATE_HZ) / 1000) as usize
}

struct FmtChunk {
    format: u16,
    channels: u16,
    sample_rate: u32,
    bits: u16,
}

fn read_u16(b: &[u8], at: usize) -> u16 {
    u16::from_le_bytes([b[at], b[at + 1]])
}

fn read_u32(b: &[u8], at: usize) -> u32 {
    u32::from_le_bytes([b[at], b[at + 1], b[at + 2], b[at + 3]])
}

fn parse_fmt(body: &[u8]) -> Result<FmtChunk> {
    if body.len() < 16 {
        return Err(Error::Decode(format!(
            "fmt chunk is {} bytes, need at least 16",
            body.len()
        )));
    }
    let mut format = read_u16(body, 0);
    let channels = read_u16(body, 2);
    let sample_rate = read_u32(body, 4);
    let bits = read_u16(body, 14);
    if format == WAVE_FORMAT_EXTENSIBLE {
        // cbSize(2) validBits(2) channelMask(4) then the sub-format GUID,
        // whose first two bytes carry the actual format tag.
        if body.len() < 26 {
            return Err(Error::Decode("truncated WAVE_FORMAT_EXTENSIBLE header".into()));
        }
        format = read_u16(body, 24);
    }
    if channels == 0 {
        return Err(Error::Decode("channel count is zero".into()));
    }
    if sample_rate == 0 {
        return Err(Error::Decode("sample rate is zero".into()));
    }
    Ok(FmtChunk {
        format,
        channels,
        sample_rate,
        bits,
    })
}

/// Decodes a RIFF/WAVE byte stream into a mono clip.
///
/// Integer PCM (8, 16, 24 or 32 bit) is scaled by `2^(bits-1)`; IEEE float
/// (32 or 64 bit) is taken as-is and clamped to [-1, 1]. Multichannel audio
/// is averaged to mono.
pub fn decode_wav(bytes: &[u8]) -> Result<AudioClip> {
    if bytes.len() < 12 {
        return Err(Error::Decode("shorter than a RIFF header".into()));
    }
    if &bytes[0..4] != b"RIFF" {
        return Err(Error::Decode(format!(
            "expected RIFF magic, found {:?}",
            String::from_utf8_lossy(&bytes[0..4])
        )));
    }
    if &bytes[8..12] != b"WAVE" {
        return Err(Error::Decode("RIFF form type is not WAVE".into()));
    }

    let mut fmt: Option<FmtChunk> = None;
    let mut data: Option<&[u8]> = None;
    let mut pos = 12;
    while pos + 8 <= bytes.len() {
        let id = &bytes[pos..pos + 4];
        let declared = read_u32(bytes, pos + 4) as usize;
        let body_start = pos + 8;
        let available = bytes.len() - body_start;
        let size = if declared > available {
            if id == b"data" {
                warn!("data chunk declares {declared} bytes but only {available} remain");
                available
            } else {
                return Err(Error::Decode(format!(
                    "chunk {:?} overruns the file",
                    String::from_utf8_lossy(id)
                )));
            }
        } else {
            declared
        };
        let body = &bytes[body_start..body_start + size];
        match id {
            b"fmt " => fmt = Some(parse_fmt(body)?),
            b"data" => data = Some(body),
            _ => {}
        }
        // Chunks are word aligned.
        pos = body_start + size + (size & 1);
    }

    let fmt = fmt.ok_or_else(|| Error::Decode("missing fmt chunk".into()))?;
    let data = data.ok_or_else(|| Error::Decode("missing data chunk".into()))?;

    let sample_bytes = match (fmt.format, fmt.bits) {
        (WAVE_FORMAT_PCM, 8 | 16 | 24 | 32) | (WAVE_FORMAT_IEEE_FLOAT, 32 | 64) => {
            usize::from(fmt.bits / 8)
        }
        (WAVE_FORMAT_PCM, b) => {
            return Err(Error::UnsupportedFormat(format!("{b}-bit integer PCM")))
        }
        (WAVE_FORMAT_IEEE_FLOAT, b) => {
            return Err(Error::UnsupportedFormat(format!("{b}-bit float")))
        }
        (tag, _) => return Err(Error::UnsupportedFormat(format!("format tag {tag:#06x}"))),
    };
    let channels = usize::from(fmt.channels);
    let frame_bytes = sample_bytes * channels;
    let n_frames = data.len() / frame_bytes;
    if n_frames == 0 {
        return Err(Error::EmptyAudio);
    }

    let decode_one = |raw: &[u8]| -> f64 {
        match (fmt.format, sample_bytes) {
            (WAVE_FORMAT_PCM, 1) => (f64::from(raw[0]) - 128.0) / 128.0,
            (WAVE_FORMAT_PCM, 2) => f64::from(i16::from_le_bytes([raw[0], raw[1]])) / 32_768.0,
            (WAVE_FORMAT_PCM, 3) => {
                let v = i32::from_le_bytes([0, raw[0], raw[1], raw[2]]) >> 8;
                f64::from(v) / 8_388_608.0
            }
            (WAVE_FORMAT_PCM, 4) => {
                f64::from(i32::from_le_bytes([raw[0], raw[1], raw[2], raw[3]])) / 2_147_483_648.0
            }
            (_, 4) => f64::from(f32::from_le_bytes([raw[0], raw[1], raw[2], raw[3]])),
            _ => f64::from_le_bytes(raw[..8].try_into().expect("8-byte sample")),
        }
    };

    let mut samples = Vec::with_capacity(n_frames);
    for frame in data.chunks_exact(frame_bytes) {
        let mut acc = 0.0;
        for ch in frame.chunks_exact(sample_bytes) {
            let v = decode_one(ch);
            if !v.is_finite() {
                return Err(Error::Decode("non-finite float sample".into()));
            }
            acc += v;
        }
        samples.push((acc / channels as f64).clamp(-1.0, 1.0));
    }
    AudioClip::new(samples, fmt.sample_rate)
}

/// Encodes a clip as canonical 44-byte-header mono PCM16.
///
/// Samples are scaled by 32768, rounded and saturated.
pub fn encode_wav_pcm16(clip: &AudioClip) -> Vec<u8> {
    let data_len = clip.samples.len() * 2;
    let mut out = Vec::with_capacity(44 + data_len);
    out.extend_from_slice(b"RIFF");
    out.extend_from_slice(&((36 + data_len) as u32).to_le_bytes());
    out.extend_from_slice(b"WAVE");
    out.extend_from_slice(b"fmt ");
    out.extend_from_slice(&16u32.to_le_bytes());
    out.extend_from_slice(&WAVE_FORMAT_PCM.to_le_bytes());
    out.extend_from_slice(&1u16.to_le_bytes());
    out.extend_from_slice(&clip.sample_rate_hz.to_le_bytes());
    out.extend_from_slice(&(clip.sample_rate_hz * 2).to_le_bytes());
    out.extend_from_slice(&2u16.to_le_bytes());
    out.extend_from_slice(&16u16.to_le_bytes());
    out.extend_from_slice(b"data");
    out.extend_from_slice(&(data_len as u32).to_le_bytes());
    for &s in &clip.samples {
        let v = (s * 32_768.0).round().clamp(-32_768.0, 32_767.0) as i16;
        out.extend_from_slice(&v.to_le_bytes());
    }
    out
}

fn gcd(mut a: u64, mut b: u64) -> u64 {
    while b != 0 {
        (a, b) = (b, a % b);
    }
    a
}

/// Zeroth-order modified Bessel function of the first kind (power series).
fn bessel_i0(x: f64) -> f64 {
    let half_sq = x * x / 4.0;
    let mut term = 1.0;
    let mut sum = 1.0;
    let mut k = 1.0;
    while term > sum * 1e-17 {
        term *= half_sq / (k * k);
        sum += term;
        k += 1.0;
    }
    sum
}

fn sinc(x: f64) -> f64 {
    if x == 0.0 {
        1.0
    } else {
        (PI * x).sin() / (PI * x)
    }
}

/// Polyphase decomposition of a Kaiser-windowed sinc low-pass.
///
/// `phases[p]` holds `(offset, weight)` pairs: output sample `n` with
/// `n * down = q * up + p` reads input `q - offset`.
struct PolyphaseBank {
    up: u64,
    down: u64,
    phases: Vec<Vec<(i64, f64)>>,
}

impl PolyphaseBank {
    fn new(up: u64, down: u64) -> Self {
        let half_span = (TAPS_PER_PHASE / 2) as i64 * up as i64;
        // Cutoff in cycles per sample at the upsampled rate.
        let cutoff = CUTOFF_FRACTION * 0.5 / up.max(down) as f64;
        let i0_beta = bessel_i0(KAISER_BETA);
        let half = (TAPS_PER_PHASE / 2) as i64;

        let phases = (0..up as i64)
            .map(|p| {
                let mut taps: Vec<(i64, f64)> = (-half..=half)
                    .filter_map(|i| {
                        let t = i * up as i64 + p;
                        if t.abs() >= half_span {
                            return None;
                        }
                        let r = t as f64 / half_span as f64;
                        let window = bessel_i0(KAISER_BETA * (1.0 - r * r).sqrt()) / i0_beta;
                        Some((i, sinc(2.0 * cutoff * t as f64) * window))
                    })
                    .collect();
                // Unit DC gain per phase.
                let gain: f64 = taps.iter().map(|&(_, w)| w).sum();
                for tap in &mut taps {
                    tap.1 /= gain;
                }
                taps
            })
            .collect();
        Self { up, down, phases }
    }

    fn apply(&self, input: &[f64]) -> Vec<f64> {
        let n_in = input.len() as u64;
        let n_out = (n_in * self.up).div_ceil(self.down);
        (0..n_out)
            .map(|n| {
                let pos = n * self.down;
                let q = (pos / self.up) as i64;
                let p = (pos % self.up) as usize;
                self.phases[p]
                    .iter()
                    .filter_map(|&(i, w)| {
                        let j = q - i;
                        (j >= 0 && (j as u64) < n_in).then(|| w * input[j as usize])
                    })
                    .sum()
            })
            .collect()
    }
}

/// Converts `clip` to `target_rate_hz` with a rational polyphase filter.
///
/// The rate ratio is reduced to `up/down`; the output holds
/// `ceil(len * up / down)` samples and is time-aligned with the input
/// (zero-phase kernel, zero padding beyond the ends).
pub fn resample_polyphase(clip: &AudioClip, target_rate_hz: u32) -> Result<AudioClip> {
    if target_rate_hz == 0 {
        return Err(Error::invalid("target sample rate must be positive"));
    }
    if clip.sample_rate_hz == 0 || clip.samples.is_empty() {
        return Err(Error::invalid("input clip is not valid"));
    }
    if target_rate_hz == clip.sample_rate_hz {
        return Ok(clip.clone());
    }
    let src = u64::from(clip.sample_rate_hz);
    let dst = u64::from(target_rate_hz);
    let g = gcd(src, dst);
    let bank = PolyphaseBank::new(dst / g, src / g);
    let samples = bank.apply(&clip.samples);
    Ok(AudioClip {
        samples,
        sample_rate_hz: target_rate_hz,
    })
}

/// Cuts or pads a 16 kHz clip to exactly `duration_ms`.
///
/// Longer clips keep the window with the largest total energy (earliest on
/// ties); shorter clips are zero padded on both sides, the extra sample of
/// an odd remainder going to the right.
pub fn to_cough_segment(clip: &AudioClip, duration_ms: u32) -> Result<CoughSegment> {
    if clip.sample_rate_hz != SEGMENT_RATE_HZ {
        return Err(Error::RateMismatch {
            expected: SEGMENT_RATE_HZ,
            actual: clip.sample_rate_hz,
        });
    }
    let target = segment_len(duration_ms);
    if target == 0 {
        return Err(Error::invalid("segment duration must be positive"));
    }
    let n = clip.samples.len();
    let samples = if n == target {
        clip.samples.clone()
    } else if n < target {
        let left = (target - n) / 2;
        let mut out = vec![0.0; target];
        out[left..left + n].copy_from_slice(&clip.samples);
        out
    } else {
        let start = max_energy_window(&clip.samples, target);
        clip.samples[start..start + target].to_vec()
    };
    Ok(CoughSegment {
        samples,
        sample_rate_hz: SEGMENT_RATE_HZ,
        source_id: String::new(),
    })
}

/// Start index of the length-`width` window with the largest sum of squares.
fn max_energy_window(samples: &[f64], width: usize) -> usize {
    let mut prefix = Vec::with_capacity(samples.len() + 1);
    prefix.push(0.0);
    let mut acc = 0.0;
    for s in samples {
        acc += s * s;
        prefix.push(acc);
    }
    let mut best = 0;
    let mut best_energy = f64::NEG_INFINITY;
    for start in 0..=samples.len() - width {
        let e = prefix[start + width] - prefix[start];
        if e > best_energy {
            best_energy = e;
            best = start;
        }
    }
    best
}
