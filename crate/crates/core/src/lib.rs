//! Acoustic cough analysis for chest X-ray triage.
//!
//! The crate takes solicited cough recordings through a fixed chain:
//!
//! 1. [`audio_io`]: WAV decoding, polyphase resampling to 16 kHz and
//!    normalisation to a 500 ms segment.
//! 2. [`features`]: 50 ms Hamming-windowed frames with 50% overlap, each
//!    described by 62 temporal, spectral, filterbank and cepstral features.
//! 3. [`summarize`]: eight order-free statistics per feature row, giving a
//!    496-dimensional vector per cough.
//! 4. [`models`]: logistic regression, SMO-trained SVM and an MLP, all
//!    trained from scratch on standardised vectors.
//! 5. [`evaluation`]: stratified group k-fold cross-validation with nested
//!    tuning, per-patient probability averaging and triage metrics.
//!
//! [`cli`] wires these into the `cough-triage` binary.

pub mod audio_io;
pub mod cli;
pub mod demo;
pub mod dsp;
pub mod error;
pub mod evaluation;
pub mod features;
pub mod models;
pub mod summarize;

pub use error::{Error, Result};

/// Floor used by every logarithm and normalisation guard in the pipeline.
pub const EPS: f64 = 1e-10;
