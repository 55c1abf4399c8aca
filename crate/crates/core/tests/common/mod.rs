//! Independent reference implementations shared by the integration tests.
//! Nothing here calls into the code under test except to build inputs.

#![allow(dead_code)]

pub mod checks;

use std::f64::consts::PI;
use std::path::Path;

use cough_triage::cli::{extract_features, load_manifest, RunConfig};
use cough_triage::demo::write_demo_dataset;
use cough_triage::evaluation::{CoughDataset, PatientRecord};
use nalgebra::{DMatrix, DVector};
use ndarray::Array2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// |X_k| of the real DFT of `x` zero-padded to `n`, bins `0..=n/2`, by the
/// O(n^2) definition.
pub fn direct_dft_magnitude(x: &[f64], n: usize) -> Vec<f64> {
    (0..=n / 2)
        .map(|k| {
            let (mut re, mut im) = (0.0, 0.0);
            for (t, &v) in x.iter().enumerate() {
                let phase = -2.0 * PI * (k * t % n) as f64 / n as f64;
                re += v * phase.cos();
                im += v * phase.sin();
            }
            re.hypot(im)
        })
        .collect()
}

/// Orthonormal DCT-II basis as an explicit `n_out x n` matrix.
pub fn dct_matrix(n: usize, n_out: usize) -> Vec<Vec<f64>> {
    (0..n_out)
        .map(|k| {
            let scale = if k == 0 { (1.0 / n as f64).sqrt() } else { (2.0 / n as f64).sqrt() };
            (0..n)
                .map(|i| scale * (PI * (i as f64 + 0.5) * k as f64 / n as f64).cos())
                .collect()
        })
        .collect()
}

pub fn matvec(m: &[Vec<f64>], v: &[f64]) -> Vec<f64> {
    m.iter()
        .map(|row| row.iter().zip(v).map(|(a, b)| a * b).sum())
        .collect()
}

pub fn max_abs_diff(a: &[f64], b: &[f64]) -> f64 {
    assert_eq!(a.len(), b.len());
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}

/// Relative error in the form used for gradient checks.
pub fn rel_error(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(1e-8)
}

pub fn central_difference(f: impl Fn(f64) -> f64, x: f64, h: f64) -> f64 {
    (f(x + h) - f(x - h)) / (2.0 * h)
}

pub fn uniform_matrix(rng: &mut impl Rng, rows: usize, cols: usize, scale: f64) -> Array2<f64> {
    Array2::from_shape_fn((rows, cols), |_| rng.gen_range(-scale..scale))
}

/// Optimum of the C-SVM dual found by enumerating every assignment of
/// points to {at 0, at C, free} and solving the equality-constrained KKT
/// system on the free set. Exponential, so only for a handful of points.
pub struct DualOracle {
    pub alpha: Vec<f64>,
    pub objective: f64,
    /// Bias when some multiplier is strictly inside (0, C).
    pub bias: Option<f64>,
}

pub fn brute_force_dual(gram: &[Vec<f64>], y: &[f64], c: f64) -> DualOracle {
    let n = y.len();
    assert!(n <= 8, "enumeration is 3^n");
    let q = |i: usize, j: usize| y[i] * y[j] * gram[i][j];
    let objective = |a: &[f64]| {
        let mut quad = 0.0;
        for i in 0..n {
            for j in 0..n {
                quad += a[i] * a[j] * q(i, j);
            }
        }
        a.iter().sum::<f64>() - 0.5 * quad
    };
    let feas = 1e-9;
    let mut best: Option<(f64, Vec<f64>, Option<f64>)> = None;
    for code in 0..3usize.pow(n as u32) {
        let mut state = vec![0u8; n];
        let mut rest = code;
        for s in state.iter_mut() {
            *s = (rest % 3) as u8;
            rest /= 3;
        }
        let free: Vec<usize> = (0..n).filter(|&i| state[i] == 2).collect();
        let mut alpha: Vec<f64> = state.iter().map(|&s| if s == 1 { c } else { 0.0 }).collect();
        let mut nu = None;
        if free.is_empty() {
            let balance: f64 = alpha.iter().zip(y).map(|(a, yi)| a * yi).sum();
            if balance.abs() > feas {
                continue;
            }
        } else {
            // [Q_FF y_F; y_F^T 0] [a_F; nu] = [1 - Q_FB a_B; -y_B^T a_B]
            let m = free.len();
            let mut lhs = DMatrix::zeros(m + 1, m + 1);
            let mut rhs = DVector::zeros(m + 1);
            for (r, &i) in free.iter().enumerate() {
                for (s, &j) in free.iter().enumerate() {
                    lhs[(r, s)] = q(i, j);
                }
                lhs[(r, m)] = y[i];
                lhs[(m, r)] = y[i];
                rhs[r] = 1.0 - (0..n).filter(|&j| state[j] == 1).map(|j| q(i, j) * c).sum::<f64>();
            }
            rhs[m] = -(0..n).filter(|&j| state[j] == 1).map(|j| y[j] * c).sum::<f64>();
            let sol = match lhs.clone().lu().solve(&rhs) {
                Some(s) if (&lhs * &s - &rhs).amax() < 1e-9 => s,
                _ => match lhs.clone().svd(true, true).solve(&rhs, 1e-12) {
                    Ok(s) if (&lhs * &s - &rhs).amax() < 1e-9 => s,
                    _ => continue,
                },
            };
            if free.iter().enumerate().any(|(r, _)| sol[r] < -feas || sol[r] > c + feas) {
                continue;
            }
            for (r, &i) in free.iter().enumerate() {
                alpha[i] = sol[r].clamp(0.0, c);
            }
            nu = Some(sol[m]);
        }
        // A stationary point of a face is the global optimum only if the
        // multipliers of the bound constraints have the right sign.
        let nu_val = nu.unwrap_or_else(|| {
            // no free point: any nu in the admissible interval works
            admissible_nu(&alpha, y, &q).unwrap_or(f64::NAN)
        });
        if nu_val.is_nan() {
            continue;
        }
        let ok = (0..n).all(|i| {
            let g: f64 = (0..n).map(|j| q(i, j) * alpha[j]).sum::<f64>() - 1.0 + nu_val * y[i];
            match state[i] {
                0 => g >= -1e-7,
                1 => g <= 1e-7,
                _ => g.abs() <= 1e-7,
            }
        });
        if !ok {
            continue;
        }
        let obj = objective(&alpha);
        let has_free = free.iter().any(|&i| alpha[i] > 1e-7 && alpha[i] < c - 1e-7);
        let bias = if has_free { Some(nu_val) } else { None };
        if best.as_ref().is_none_or(|(b, _, _)| obj > *b) {
            best = Some((obj, alpha, bias));
        }
    }
    let (objective, alpha, bias) = best.expect("the dual always has an optimum");
    DualOracle {
        alpha,
        objective,
        bias,
    }
}

/// Some `nu` satisfying the bound KKT conditions when no point is free.
fn admissible_nu(alpha: &[f64], y: &[f64], q: &impl Fn(usize, usize) -> f64) -> Option<f64> {
    let n = y.len();
    let (mut lo, mut hi) = (f64::NEG_INFINITY, f64::INFINITY);
    for i in 0..n {
        let base: f64 = (0..n).map(|j| q(i, j) * alpha[j]).sum::<f64>() - 1.0;
        // at 0: base + nu*y >= 0; at C: base + nu*y <= 0
        let at_zero = alpha[i] <= 0.0;
        let bound = -base / y[i];
        match (at_zero, y[i] > 0.0) {
            (true, true) | (false, false) => lo = lo.max(bound),
            (true, false) | (false, true) => hi = hi.min(bound),
        }
    }
    (lo <= hi + 1e-9).then(|| if lo.is_finite() { lo } else if hi.is_finite() { hi } else { 0.0 })
}

/// `n_abn` abnormal and `n_norm` normal patients with one cough id each.
pub fn patients(n_abn: usize, n_norm: usize) -> Vec<PatientRecord> {
    (0..n_abn + n_norm)
        .map(|i| PatientRecord {
            patient_id: format!("p{i:03}"),
            label: u8::from(i < n_abn),
            cough_ids: vec![format!("c{i}")],
        })
        .collect()
}

/// Extracted feature dataset of the synthetic demo cohort.
pub fn demo_dataset(dir: &Path, seed: u64) -> CoughDataset {
    let manifest = write_demo_dataset(dir, seed).unwrap();
    let manifest = load_manifest(&manifest).unwrap();
    let ex = extract_features(&manifest, &RunConfig::default()).unwrap();
    assert!(ex.failures.is_empty());
    CoughDataset::from_vectors(&ex.rows).unwrap()
}

/// Random labels with the same class balance, one per patient.
pub fn permuted_labels(ds: &CoughDataset, seed: u64) -> Vec<u8> {
    use rand::seq::SliceRandom;
    let mut labels: Vec<u8> = ds.patients.iter().map(|p| p.label).collect();
    labels.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    labels
}

/// Gaussian-ish blobs: class 1 centred at +shift on every axis.
pub fn blobs(rng: &mut impl Rng, n: usize, dims: usize, shift: f64) -> (Array2<f64>, Vec<u8>) {
    let y: Vec<u8> = (0..n).map(|i| (i % 2) as u8).collect();
    let x = Array2::from_shape_fn((n, dims), |(i, _)| {
        let noise: f64 = (0..4).map(|_| rng.gen_range(-1.0..1.0)).sum::<f64>() / 2.0;
        noise + if y[i] == 1 { shift } else { -shift }
    });
    (x, y)
}
