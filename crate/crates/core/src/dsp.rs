//! Spectral kernels shared by the feature extractor.

use std::f64::consts::PI;
use std::sync::Arc;

use rustfft::num_complex::Complex;
use rustfft::{Fft, FftPlanner};

use crate::error::{Error, Result};

/// Window coefficients scaled to unit sum.
#[derive(Debug, Clone, PartialEq)]
pub struct WindowVector {
    pub coefficients: Vec<f64>,
}

impl WindowVector {
    pub fn len(&self) -> usize {
        self.coefficients.len()
    }

    pub fn is_empty(&self) -> bool {
        self.coefficients.is_empty()
    }
}

/// Unit-sum (unit DC gain) symmetric Hamming window of length `n`.
pub fn hamming_normalized(n: usize) -> Result<WindowVector> {
    if n == 0 {
        return Err(Error::invalid("window length must be at least 1"));
    }
    if n == 1 {
        return Ok(WindowVector {
            coefficients: vec![1.0],
        });
    }
    let denom = (n - 1) as f64;
    let raw: Vec<f64> = (0..n)
        .map(|k| 0.54 - 0.46 * (2.0 * PI * k as f64 / denom).cos())
        .collect();
    let total: f64 = raw.iter().sum();
    Ok(WindowVector {
        coefficients: raw.into_iter().map(|w| w / total).collect(),
    })
}

/// One-sided magnitude spectrum, bins `0..=n_fft/2`.
#[derive(Debug, Clone, PartialEq)]
pub struct Spectrum {
    pub magnitudes: Vec<f64>,
    pub bin_width_hz: f64,
}

impl Spectrum {
    pub fn len(&self) -> usize {
        self.magnitudes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.magnitudes.is_empty()
    }

    /// Squared magnitudes.
    pub fn power(&self) -> Vec<f64> {
        self.magnitudes.iter().map(|m| m * m).collect()
    }

    /// Center frequency of bin `k` in Hz.
    pub fn frequency(&self, k: usize) -> f64 {
        k as f64 * self.bin_width_hz
    }
}

/// Reusable FFT plan for a fixed transform size.
#[derive(Clone)]
pub struct SpectrumAnalyzer {
    n_fft: usize,
    sample_rate_hz: u32,
    fft: Arc<dyn Fft<f64>>,
}

impl std::fmt::Debug for SpectrumAnalyzer {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("SpectrumAnalyzer")
            .field("n_fft", &self.n_fft)
            .field("sample_rate_hz", &self.sample_rate_hz)
            .finish()
    }
}

impl SpectrumAnalyzer {
    pub fn new(n_fft: usize, sample_rate_hz: u32) -> Result<Self> {
        if n_fft < 2 || !n_fft.is_power_of_two() {
            return Err(Error::invalid(format!(
                "FFT size must be a power of two >= 2, got {n_fft}"
            )));
        }
        if sample_rate_hz == 0 {
            return Err(Error::invalid("sample rate must be positive"));
        }
        let fft = FftPlanner::new().plan_fft_forward(n_fft);
        Ok(Self {
            n_fft,
            sample_rate_hz,
            fft,
        })
    }

    pub fn n_fft(&self) -> usize {
        self.n_fft
    }

    pub fn n_bins(&self) -> usize {
        self.n_fft / 2 + 1
    }

    /// Magnitude spectrum of `frame`, zero padded to the transform size.
    ///
    /// Frames longer than the transform are rejected rather than truncated.
    pub fn magnitude(&self, frame: &[f64]) -> Result<Spectrum> {
        if frame.len() > self.n_fft {
            return Err(Error::invalid(format!(
                "frame of {} samples exceeds FFT size {}",
                frame.len(),
                self.n_fft
            )));
        }
        let mut buf: Vec<Complex<f64>> = frame
            .iter()
            .map(|&x| Complex::new(x, 0.0))
            .chain(std::iter::repeat(Complex::new(0.0, 0.0)))
            .take(self.n_fft)
            .collect();
        self.fft.process(&mut buf);
        Ok(Spectrum {
            magnitudes: buf[..self.n_bins()].iter().map(|c| c.norm()).collect(),
            bin_width_hz: f64::from(self.sample_rate_hz) / self.n_fft as f64,
        })
    }
}

/// One-shot magnitude spectrum; plans a fresh FFT on every call.
pub fn fft_magnitude(frame: &[f64], n_fft: usize, sample_rate_hz: u32) -> Result<Spectrum> {
    SpectrumAnalyzer::new(n_fft, sample_rate_hz)?.magnitude(frame)
}

pub fn hz_to_mel(hz: f64) -> f64 {
    2595.0 * (1.0 + hz / 700.0).log10()
}

pub fn mel_to_hz(mel: f64) -> f64 {
    700.0 * (10f64.powf(mel / 2595.0) - 1.0)
}

/// Triangular mel filters over the one-sided spectrum.
#[derive(Debug, Clone, PartialEq)]
pub struct FilterbankMatrix {
    /// `n_filters` rows of `n_fft/2 + 1` weights.
    pub weights: Vec<Vec<f64>>,
    pub center_freqs_hz: Vec<f64>,
}

impl FilterbankMatrix {
    pub fn n_filters(&self) -> usize {
        self.weights.len()
    }

    pub fn n_bins(&self) -> usize {
        self.weights.first().map_or(0, Vec::len)
    }

    /// `weights * power`.
    pub fn apply(&self, power: &[f64]) -> Result<Vec<f64>> {
        if power.len() != self.n_bins() {
            return Err(Error::invalid(format!(
                "filterbank expects {} bins, got {}",
                self.n_bins(),
                power.len()
            )));
        }
        Ok(self
            .weights
            .iter()
            .map(|row| row.iter().zip(power).map(|(w, p)| w * p).sum())
            .collect())
    }
}

/// HTK-style mel filterbank: `n_filters` unit-peak triangles whose edges are
/// equally spaced in mel between 0 Hz and Nyquist.
pub fn mel_filterbank(
    n_filters: usize,
    n_fft: usize,
    sample_rate_hz: u32,
) -> Result<FilterbankMatrix> {
    if n_filters == 0 {
        return Err(Error::invalid("need at least one mel filter"));
    }
    if n_fft < 2 || sample_rate_hz == 0 {
        return Err(Error::invalid("FFT size and sample rate must be positive"));
    }
    let nyquist = f64::from(sample_rate_hz) / 2.0;
    let mel_max = hz_to_mel(nyquist);
    let edges: Vec<f64> = (0..n_filters + 2)
        .map(|i| mel_to_hz(mel_max * i as f64 / (n_filters + 1) as f64))
        .collect();
    let n_bins = n_fft / 2 + 1;
    let bin_hz = f64::from(sample_rate_hz) / n_fft as f64;

    let mut weights = Vec::with_capacity(n_filters);
    for m in 0..n_filters {
        let (lo, mid, hi) = (edges[m], edges[m + 1], edges[m + 2]);
        let row: Vec<f64> = (0..n_bins)
            .map(|k| {
                let f = k as f64 * bin_hz;
                let rising = (f - lo) / (mid - lo);
                let falling = (hi - f) / (hi - mid);
                rising.min(falling).max(0.0)
            })
            .collect();
        if row.iter().all(|&w| w == 0.0) {
            return Err(Error::invalid(format!(
                "{n_filters} filters are too narrow for a {n_fft}-point FFT: filter {m} covers no bin"
            )));
        }
        weights.push(row);
    }
    Ok(FilterbankMatrix {
        weights,
        center_freqs_hz: edges[1..=n_filters].to_vec(),
    })
}

/// First `n_out` coefficients of the orthonormal DCT-II of `v`.
pub fn dct2_orthonormal(v: &[f64], n_out: usize) -> Result<Vec<f64>> {
    let n = v.len();
    if n == 0 {
        return Err(Error::invalid("DCT input is empty"));
    }
    if n_out > n {
        return Err(Error::invalid(format!(
            "cannot take {n_out} coefficients from a length-{n} DCT"
        )));
    }
    let nf = n as f64;
    Ok((0..n_out)
        .map(|k| {
            let scale = if k == 0 { (1.0 / nf).sqrt() } else { (2.0 / nf).sqrt() };
            let sum: f64 = v
                .iter()
                .enumerate()
                .map(|(i, x)| x * (PI * k as f64 * (2 * i + 1) as f64 / (2.0 * nf)).cos())
                .sum();
            scale * sum
        })
        .collect())
}

/// Inverse of the full orthonormal DCT-II (the orthonormal DCT-III).
pub fn idct2_orthonormal(coeffs: &[f64]) -> Vec<f64> {
    let n = coeffs.len();
    let nf = n as f64;
    (0..n)
        .map(|i| {
            coeffs
                .iter()
                .enumerate()
                .map(|(k, c)| {
                    let scale = if k == 0 { (1.0 / nf).sqrt() } else { (2.0 / nf).sqrt() };
                    scale * c * (PI * k as f64 * (2 * i + 1) as f64 / (2.0 * nf)).cos()
                })
                .sum()
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn hamming_small_cases() {
        assert_eq!(hamming_normalized(1).unwrap().coefficients, vec![1.0]);
        let w = hamming_normalized(3).unwrap().coefficients;
        let expected = [0.08 / 1.16, 1.0 / 1.16, 0.08 / 1.16];
        for (a, b) in w.iter().zip(expected) {
            assert!((a - b).abs() < 1e-15);
        }
        assert!(hamming_normalized(0).is_err());
    }

    #[test]
    fn hamming_unit_sum_and_symmetric() {
        for n in [2, 5, 64, 800, 1023] {
            let w = hamming_normalized(n).unwrap().coefficients;
            assert!((w.iter().sum::<f64>() - 1.0).abs() < 1e-12);
            for k in 0..n {
                assert!((w[k] - w[n - 1 - k]).abs() < 1e-15);
                assert!(w[k] > 0.0);
            }
        }
    }

    #[test]
    fn zero_frame_and_bin_aligned_cosine() {
        let a = SpectrumAnalyzer::new(1024, 16_000).unwrap();
        let zero = a.magnitude(&[0.0; 800]).unwrap();
        assert_eq!(zero.len(), 513);
        assert!(zero.magnitudes.iter().all(|&m| m == 0.0));

        let frame: Vec<f64> = (0..1024)
            .map(|t| (2.0 * PI * 4.0 * t as f64 / 1024.0).cos())
            .collect();
        let s = a.magnitude(&frame).unwrap();
        let peak = (0..s.len())
            .max_by(|&i, &j| s.magnitudes[i].total_cmp(&s.magnitudes[j]))
            .unwrap();
        assert_eq!(peak, 4);
        assert!((s.magnitudes[4] - 512.0).abs() < 1e-6);
        assert_eq!(s.bin_width_hz, 15.625);
    }

    #[test]
    fn rejects_long_frames_and_bad_sizes() {
        assert!(fft_magnitude(&[0.0; 1025], 1024, 16_000).is_err());
        assert!(SpectrumAnalyzer::new(1000, 16_000).is_err());
    }

    #[test]
    fn mel_formula() {
        assert!((hz_to_mel(700.0) - 2595.0 * 2f64.log10()).abs() < 1e-12);
        assert!((hz_to_mel(700.0) - 781.17).abs() < 0.01);
        for f in [0.0, 100.0, 1234.5, 8000.0] {
            assert!((mel_to_hz(hz_to_mel(f)) - f).abs() < 1e-9);
        }
    }

    #[test]
    fn filterbank_shape() {
        let fb = mel_filterbank(40, 1024, 16_000).unwrap();
        assert_eq!(fb.n_filters(), 40);
        assert_eq!(fb.n_bins(), 513);
        assert!(fb.center_freqs_hz[0] > 0.0);
        assert!(fb.center_freqs_hz[39] < 8000.0);
        assert!(fb.center_freqs_hz.windows(2).all(|w| w[0] < w[1]));
        for row in &fb.weights {
            assert!(row.iter().all(|&w| (0.0..=1.0).contains(&w)));
            // unimodal: non-decreasing up to the argmax, non-increasing after
            let peak = (0..row.len())
                .max_by(|&i, &j| row[i].total_cmp(&row[j]))
                .unwrap();
            assert!(row[..=peak].windows(2).all(|w| w[0] <= w[1]));
            assert!(row[peak..].windows(2).all(|w| w[0] >= w[1]));
            assert!(row[peak] > 0.0);
        }
    }

    #[test]
    fn filterbank_too_fine() {
        assert!(mel_filterbank(200, 64, 16_000).is_err());
        assert!(mel_filterbank(0, 1024, 16_000).is_err());
    }

    #[test]
    fn dct_constant_and_zero() {
        let c = 2.5;
        let out = dct2_orthonormal(&[c; 40], 13).unwrap();
        assert!((out[0] - c * 40f64.sqrt()).abs() < 1e-12);
        assert!(out[1..].iter().all(|v| v.abs() < 1e-12));
        assert!(dct2_orthonormal(&[0.0; 40], 13)
            .unwrap()
            .iter()
            .all(|&v| v == 0.0));
        assert!(dct2_orthonormal(&[0.0; 10], 11).is_err());
    }

    #[test]
    fn dct_round_trip() {
        let v: Vec<f64> = (0..40).map(|i| ((i * 7919) % 97) as f64 / 13.0 - 3.0).collect();
        let full = dct2_orthonormal(&v, 40).unwrap();
        let back = idct2_orthonormal(&full);
        for (a, b) in v.iter().zip(&back) {
            assert!((a - b).abs() < 1e-10);
        }
    }
}
