//! Frame-level acoustic features.
//!
//! A cough segment is cut into Hamming-windowed frames and every frame is
//! described by, in this order:
//!
//! | rows    | features                                                      |
//! |---------|---------------------------------------------------------------|
//! | 0..4    | zero-crossing rate, energy, energy entropy, intensity (dB)    |
//! | 4..9    | spectral centroid, spread, entropy, flux, 90% roll-off        |
//! | 9..49   | log mel filterbank energies                                   |
//! | 49..62  | MFCCs (0th coefficient included)                              |
//!
//! With the default [`FeatureConfig`] a 500 ms segment at 16 kHz yields a
//! 62 x 19 matrix.

use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::audio_io::{CoughSegment, SEGMENT_RATE_HZ};
use crate::dsp::{
    dct2_orthonormal, hamming_normalized, mel_filterbank, FilterbankMatrix, Spectrum,
    SpectrumAnalyzer, WindowVector,
};
use crate::error::{Error, Result};
use crate::EPS;

pub const N_TEMPORAL: usize = 4;
pub const N_SPECTRAL: usize = 5;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureConfig {
    pub frame_ms: u32,
    /// Fraction of a frame shared with its successor.
    pub frame_overlap: f64,
    pub n_fft: usize,
    pub n_filters: usize,
    pub n_mfcc: usize,
    pub energy_subframes: usize,
    pub rolloff_fraction: f64,
}

impl Default for FeatureConfig {
    fn default() -> Self {
        Self {
            frame_ms: 50,
            frame_overlap: 0.5,
            n_fft: 1024,
            n_filters: 40,
            n_mfcc: 13,
            energy_subframes: 10,
            rolloff_fraction: 0.9,
        }
    }
}

impl FeatureConfig {
    pub fn frame_samples(&self) -> usize {
        (u64::from(self.frame_ms) * u64::from(SEGMENT_RATE_HZ) / 1000) as usize
    }

    pub fn hop_samples(&self) -> usize {
        ((self.frame_samples() as f64) * (1.0 - self.frame_overlap)).round() as usize
    }

    pub fn n_features(&self) -> usize {
        N_TEMPORAL + N_SPECTRAL + self.n_filters + self.n_mfcc
    }

    /// Row names in matrix order.
    pub fn feature_names(&self) -> Vec<String> {
        let mut names: Vec<String> = [
            "zcr",
            "energy",
            "energy_entropy",
            "intensity",
            "centroid",
            "spread",
            "spectral_entropy",
            "flux",
        ]
        .iter()
        .map(|s| s.to_string())
        .collect();
        names.push(format!("rolloff{}", (self.rolloff_fraction * 100.0).round()));
        names.extend((1..=self.n_filters).map(|i| format!("fbank_{i}")));
        names.extend((1..=self.n_mfcc).map(|i| format!("mfcc_{i}")));
        names
    }

    pub fn validate(&self) -> Result<()> {
        let frame = self.frame_samples();
        if frame < 2 {
            return Err(Error::invalid("frame must span at least two samples"));
        }
        if !(0.0..1.0).contains(&self.frame_overlap) || self.hop_samples() == 0 {
            return Err(Error::invalid("frame overlap must lie in [0, 1)"));
        }
        if frame > self.n_fft {
            return Err(Error::invalid(format!(
                "frame of {frame} samples does not fit a {}-point FFT",
                self.n_fft
            )));
        }
        if self.n_mfcc > self.n_filters {
            return Err(Error::invalid("more MFCCs requested than filterbank channels"));
        }
        if self.energy_subframes == 0 || self.energy_subframes > frame {
            return Err(Error::invalid("energy sub-frame count out of range"));
        }
        if !(self.rolloff_fraction > 0.0 && self.rolloff_fraction <= 1.0) {
            return Err(Error::invalid("roll-off fraction must lie in (0, 1]"));
        }
        Ok(())
    }
}

/// Windowed, overlapping frames of one segment.
#[derive(Debug, Clone, PartialEq)]
pub struct FrameSeries {
    pub frames: Vec<Vec<f64>>,
    pub frame_samples: usize,
    pub hop_samples: usize,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TemporalFeatures {
    pub zcr: f64,
    pub energy: f64,
    pub energy_entropy: f64,
    pub intensity: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SpectralFeatures {
    pub centroid: f64,
    pub spread: f64,
    pub entropy: f64,
    pub flux: f64,
    pub rolloff: f64,
}

/// Feature-major matrix: `values[feature][frame]`.
#[derive(Debug, Clone, PartialEq)]
pub struct FrameFeatureMatrix {
    pub values: Vec<Vec<f64>>,
    pub feature_names: Vec<String>,
}

impl FrameFeatureMatrix {
    pub fn n_features(&self) -> usize {
        self.values.len()
    }

    pub fn n_frames(&self) -> usize {
        self.values.first().map_or(0, Vec::len)
    }

    pub fn row(&self, name: &str) -> Option<&[f64]> {
        self.feature_names
            .iter()
            .position(|n| n == name)
            .map(|i| self.values[i].as_slice())
    }

    /// CSV with a `feature` column followed by one column per frame.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        let mut header = vec!["feature".to_string()];
        header.extend((0..self.n_frames()).map(|i| format!("frame_{i}")));
        w.write_record(&header)?;
        for (name, row) in self.feature_names.iter().zip(&self.values) {
            let mut rec = vec![name.clone()];
            rec.extend(row.iter().map(|v| v.to_string()));
            w.write_record(&rec)?;
        }
        w.flush()?;
        Ok(())
    }
}

fn sign(x: f64) -> f64 {
    if x > 0.0 {
        1.0
    } else if x < 0.0 {
        -1.0
    } else {
        0.0
    }
}

/// Shannon entropy (bits) of `parts` after flooring each by `EPS` and
/// renormalising.
fn floored_entropy(parts: impl Iterator<Item = f64> + Clone) -> f64 {
    let total: f64 = parts.clone().map(|e| e + EPS).sum();
    -parts
        .map(|e| {
            let p = (e + EPS) / total;
            p * p.log2()
        })
        .sum::<f64>()
}

/// Zero-crossing rate, mean-square energy, sub-frame energy entropy and
/// intensity of one frame.
///
/// Energy entropy splits the frame into `subframes` equal blocks (trailing
/// remainder ignored) and measures the entropy of their energy shares.
pub fn temporal_features(frame: &[f64], subframes: usize) -> Result<TemporalFeatures> {
    let n = frame.len();
    if n < 2 {
        return Err(Error::invalid("temporal features need at least two samples"));
    }
    if subframes == 0 || subframes > n {
        return Err(Error::invalid("sub-frame count must lie in 1..=frame length"));
    }
    let crossings: f64 = frame
        .windows(2)
        .map(|w| (sign(w[1]) - sign(w[0])).abs())
        .sum();
    let zcr = crossings / (2.0 * (n - 1) as f64);

    let sum_sq: f64 = frame.iter().map(|x| x * x).sum();
    let energy = sum_sq / n as f64;

    let block = n / subframes;
    let block_energy = frame
        .chunks_exact(block)
        .take(subframes)
        .map(|b| b.iter().map(|x| x * x).sum::<f64>());
    let energy_entropy = floored_entropy(block_energy);

    Ok(TemporalFeatures {
        zcr,
        energy,
        energy_entropy,
        intensity: 10.0 * (energy + EPS).log10(),
    })
}

/// Sum-normalised magnitudes, the distribution used by centroid, spread and
/// flux.
fn normalized_magnitudes(spec: &Spectrum) -> Vec<f64> {
    let total: f64 = spec.magnitudes.iter().sum::<f64>() + EPS;
    spec.magnitudes.iter().map(|m| m / total).collect()
}

/// Spectral shape features. `prev` is the preceding frame's spectrum, `None`
/// for the first frame (flux 0).
pub fn spectral_features(
    spec: &Spectrum,
    prev: Option<&Spectrum>,
    rolloff_fraction: f64,
) -> Result<SpectralFeatures> {
    if spec.is_empty() {
        return Err(Error::invalid("empty spectrum"));
    }
    if let Some(p) = prev {
        if p.len() != spec.len() {
            return Err(Error::invalid("consecutive spectra differ in length"));
        }
    }
    let p = normalized_magnitudes(spec);
    let centroid: f64 = p.iter().enumerate().map(|(k, w)| spec.frequency(k) * w).sum();
    let spread = p
        .iter()
        .enumerate()
        .map(|(k, w)| (spec.frequency(k) - centroid).powi(2) * w)
        .sum::<f64>()
        .sqrt();

    let power = spec.power();
    let entropy = floored_entropy(power.iter().copied());

    let flux = prev.map_or(0.0, |prev| {
        normalized_magnitudes(prev)
            .iter()
            .zip(&p)
            .map(|(a, b)| (b - a).powi(2))
            .sum()
    });

    let total_power: f64 = power.iter().sum();
    let threshold = rolloff_fraction * total_power;
    let mut acc = 0.0;
    let mut rolloff_bin = power.len() - 1;
    for (k, pw) in power.iter().enumerate() {
        acc += pw;
        if acc >= threshold {
            rolloff_bin = k;
            break;
        }
    }

    Ok(SpectralFeatures {
        centroid,
        spread,
        entropy,
        flux,
        rolloff: spec.frequency(rolloff_bin),
    })
}

/// Natural-log filterbank energies `ln(fb * |X|^2 + EPS)`.
pub fn fbank_features(spec: &Spectrum, fb: &FilterbankMatrix) -> Result<Vec<f64>> {
    Ok(fb
        .apply(&spec.power())?
        .into_iter()
        .map(|e| (e + EPS).ln())
        .collect())
}

/// Leading `n_mfcc` orthonormal DCT-II coefficients of the log filterbank
/// energies.
pub fn mfcc_features(fbank: &[f64], n_mfcc: usize) -> Result<Vec<f64>> {
    dct2_orthonormal(fbank, n_mfcc)
}

/// Precomputed window, FFT plan and filterbank for one [`FeatureConfig`].
///
/// Immutable after construction; share it across threads freely.
#[derive(Debug, Clone)]
pub struct FeatureExtractor {
    config: FeatureConfig,
    window: WindowVector,
    analyzer: SpectrumAnalyzer,
    filterbank: FilterbankMatrix,
    names: Vec<String>,
}

impl FeatureExtractor {
    pub fn new(config: FeatureConfig) -> Result<Self> {
        config.validate()?;
        let window = hamming_normalized(config.frame_samples())?;
        let analyzer = SpectrumAnalyzer::new(config.n_fft, SEGMENT_RATE_HZ)?;
        let filterbank = mel_filterbank(config.n_filters, config.n_fft, SEGMENT_RATE_HZ)?;
        let names = config.feature_names();
        Ok(Self {
            config,
            window,
            analyzer,
            filterbank,
            names,
        })
    }

    pub fn config(&self) -> &FeatureConfig {
        &self.config
    }

    pub fn window(&self) -> &WindowVector {
        &self.window
    }

    pub fn filterbank(&self) -> &FilterbankMatrix {
        &self.filterbank
    }

    pub fn feature_names(&self) -> &[String] {
        &self.names
    }

    pub fn frame_signal(&self, segment: &CoughSegment) -> Result<FrameSeries> {
        let frame = self.config.frame_samples();
        let hop = self.config.hop_samples();
        let n = segment.samples.len();
        if n < frame {
            return Err(Error::invalid(format!(
                "segment of {n} samples is shorter than one frame ({frame})"
            )));
        }
        let count = (n - frame) / hop + 1;
        let frames = (0..count)
            .map(|i| {
                segment.samples[i * hop..i * hop + frame]
                    .iter()
                    .zip(&self.window.coefficients)
                    .map(|(x, w)| x * w)
                    .collect()
            })
            .collect();
        Ok(FrameSeries {
            frames,
            frame_samples: frame,
            hop_samples: hop,
        })
    }

    pub fn extract(&self, segment: &CoughSegment) -> Result<FrameFeatureMatrix> {
        let series = self.frame_signal(segment)?;
        let n_frames = series.frames.len();
        let mut values = vec![Vec::with_capacity(n_frames); self.config.n_features()];
        let mut prev: Option<Spectrum> = None;
        for frame in &series.frames {
            let t = temporal_features(frame, self.config.energy_subframes)?;
            let spec = self.analyzer.magnitude(frame)?;
            let s = spectral_features(&spec, prev.as_ref(), self.config.rolloff_fraction)?;
            let fbank = fbank_features(&spec, &self.filterbank)?;
            let mfcc = mfcc_features(&fbank, self.config.n_mfcc)?;

            let column = [
                t.zcr,
                t.energy,
                t.energy_entropy,
                t.intensity,
                s.centroid,
                s.spread,
                s.entropy,
                s.flux,
                s.rolloff,
            ]
            .into_iter()
            .chain(fbank)
            .chain(mfcc);
            for (row, v) in values.iter_mut().zip(column) {
                row.push(v);
            }
            prev = Some(spec);
        }
        Ok(FrameFeatureMatrix {
            values,
            feature_names: self.names.clone(),
        })
    }
}

/// Extracts features with the default configuration.
pub fn extract_frame_features(segment: &CoughSegment) -> Result<FrameFeatureMatrix> {
    FeatureExtractor::new(FeatureConfig::default())?.extract(segment)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dsp::SpectrumAnalyzer;

    fn segment(samples: Vec<f64>) -> CoughSegment {
        CoughSegment::from_samples(samples, "t").unwrap()
    }

    #[test]
    fn default_dimensions() {
        let cfg = FeatureConfig::default();
        assert_eq!(cfg.frame_samples(), 800);
        assert_eq!(cfg.hop_samples(), 400);
        assert_eq!(cfg.n_features(), 62);
        let names = cfg.feature_names();
        assert_eq!(names.len(), 62);
        assert_eq!(names[8], "rolloff90");
        assert_eq!(names[9], "fbank_1");
        assert_eq!(names[61], "mfcc_13");
    }

    #[test]
    fn framing() {
        let fx = FeatureExtractor::new(FeatureConfig::default()).unwrap();
        let ones = segment(vec![1.0; 8000]);
        let series = fx.frame_signal(&ones).unwrap();
        assert_eq!(series.frames.len(), 19);
        for f in &series.frames {
            assert_eq!(f, &fx.window().coefficients);
        }
        let ramp = segment((0..8000).map(|i| i as f64 / 8000.0).collect());
        let series = fx.frame_signal(&ramp).unwrap();
        for (i, f) in series.frames.iter().enumerate() {
            let w0 = fx.window().coefficients[0];
            assert_eq!(f[0], (400 * i) as f64 / 8000.0 * w0);
        }
    }

    #[test]
    fn temporal_constant_and_alternating() {
        let t = temporal_features(&[0.5; 800], 10).unwrap();
        assert_eq!(t.zcr, 0.0);
        assert!((t.energy - 0.25).abs() < 1e-15);
        assert!((t.energy_entropy - 10f64.log2()).abs() < 1e-9);

        let alt: Vec<f64> = (0..800).map(|i| if i % 2 == 0 { 0.3 } else { -0.3 }).collect();
        assert_eq!(temporal_features(&alt, 10).unwrap().zcr, 1.0);
    }

    #[test]
    fn temporal_zero_frame() {
        let t = temporal_features(&[0.0; 800], 10).unwrap();
        assert_eq!(t.zcr, 0.0);
        assert_eq!(t.energy, 0.0);
        assert!((t.energy_entropy - 10f64.log2()).abs() < 1e-12);
        assert!((t.intensity - 10.0 * EPS.log10()).abs() < 1e-12);
    }

    #[test]
    fn energy_entropy_of_single_burst() {
        let mut frame = vec![0.0; 800];
        for (i, v) in frame.iter_mut().enumerate().take(80) {
            *v = if i % 3 == 0 { 0.9 } else { -0.4 };
        }
        // direct evaluation of the floored entropy sum
        let e0: f64 = frame[..80].iter().map(|x| x * x).sum();
        let total = e0 + 10.0 * EPS;
        let mut h = -((e0 + EPS) / total) * ((e0 + EPS) / total).log2();
        h -= 9.0 * (EPS / total) * (EPS / total).log2();
        let t = temporal_features(&frame, 10).unwrap();
        assert!((t.energy_entropy - h).abs() < 1e-15);
        assert!(t.energy_entropy <= 1e-6);
    }

    #[test]
    fn temporal_rejects_short() {
        assert!(temporal_features(&[1.0], 1).is_err());
        assert!(temporal_features(&[1.0; 5], 10).is_err());
    }

    fn point_spectrum(bins: &[(usize, f64)]) -> Spectrum {
        let mut m = vec![0.0; 513];
        for &(k, v) in bins {
            m[k] = v;
        }
        Spectrum {
            magnitudes: m,
            bin_width_hz: 15.625,
        }
    }

    #[test]
    fn spectral_point_mass() {
        // bin 64 is exactly 1000 Hz
        let s = spectral_features(&point_spectrum(&[(64, 1.0)]), None, 0.9).unwrap();
        assert!((s.centroid - 1000.0).abs() < 1e-6);
        assert!(s.spread < 1e-3);
        assert_eq!(s.rolloff, 1000.0);
        assert_eq!(s.flux, 0.0);
    }

    #[test]
    fn spectral_two_bins() {
        let spec = point_spectrum(&[(64, 2.0), (192, 2.0)]);
        let s = spectral_features(&spec, Some(&spec), 0.9).unwrap();
        assert!((s.centroid - 2000.0).abs() < 1e-6);
        assert!((s.spread - 1000.0).abs() < 1e-6);
        assert_eq!(s.flux, 0.0);
        assert_eq!(s.rolloff, 3000.0);
    }

    #[test]
    fn spectral_zero() {
        let s = spectral_features(&point_spectrum(&[]), None, 0.9).unwrap();
        assert_eq!(s.centroid, 0.0);
        assert_eq!(s.spread, 0.0);
        assert!((s.entropy - 513f64.log2()).abs() < 1e-9);
        assert_eq!(s.rolloff, 0.0);
    }

    #[test]
    fn flux_against_previous() {
        let a = point_spectrum(&[(10, 1.0)]);
        let b = point_spectrum(&[(20, 1.0)]);
        let s = spectral_features(&b, Some(&a), 0.9).unwrap();
        assert!((s.flux - 2.0).abs() < 1e-9);
    }

    #[test]
    fn fbank_zero_and_scaling() {
        let fb = mel_filterbank(40, 1024, 16_000).unwrap();
        let zero = fbank_features(&point_spectrum(&[]), &fb).unwrap();
        assert!(zero.iter().all(|&v| v == EPS.ln()));

        let a = SpectrumAnalyzer::new(1024, 16_000).unwrap();
        let frame: Vec<f64> = (0..800).map(|i| ((i * 37 % 101) as f64 / 50.0) - 1.0).collect();
        let s1 = a.magnitude(&frame).unwrap();
        let s2 = a.magnitude(&frame.iter().map(|x| 2.0 * x).collect::<Vec<_>>()).unwrap();
        let f1 = fbank_features(&s1, &fb).unwrap();
        let f2 = fbank_features(&s2, &fb).unwrap();
        for (x, y) in f1.iter().zip(&f2) {
            assert!((y - x - 4f64.ln()).abs() < 1e-9);
        }
        let bad = Spectrum {
            magnitudes: vec![0.0; 100],
            bin_width_hz: 1.0,
        };
        assert!(fbank_features(&bad, &fb).is_err());
    }

    #[test]
    fn mfcc_constant() {
        let m = mfcc_features(&[-3.0; 40], 13).unwrap();
        assert!((m[0] + 3.0 * 40f64.sqrt()).abs() < 1e-12);
        assert!(m[1..].iter().all(|v| v.abs() < 1e-12));
        assert_eq!(m.len(), 13);
    }

    #[test]
    fn zero_segment_is_finite() {
        let m = extract_frame_features(&segment(vec![0.0; 8000])).unwrap();
        assert_eq!((m.n_features(), m.n_frames()), (62, 19));
        assert!(m.values.iter().flatten().all(|v| v.is_finite()));
    }

    #[test]
    fn tone_centroid() {
        let tone: Vec<f64> = (0..8000)
            .map(|t| 0.5 * (2.0 * std::f64::consts::PI * 1000.0 * t as f64 / 16_000.0).sin())
            .collect();
        let m = extract_frame_features(&segment(tone)).unwrap();
        // magnitude weighting lets the window sidelobes pull the centroid
        // upward by a few tens of Hz; power roll-off stays in the main lobe
        for &c in m.row("centroid").unwrap() {
            assert!((c - 1000.0).abs() <= 50.0, "centroid {c}");
        }
        for &r in m.row("rolloff90").unwrap() {
            assert!((r - 1000.0).abs() <= 2.0 * 15.625, "rolloff {r}");
        }
        assert!(m.row("flux").unwrap()[0] == 0.0);
    }

    #[test]
    fn csv_export() {
        let m = extract_frame_features(&segment(vec![0.1; 8000])).unwrap();
        let mut buf = Vec::new();
        m.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines.len(), 63);
        assert!(lines[0].starts_with("feature,frame_0,"));
        assert!(lines[1].starts_with("zcr,"));
    }
}
