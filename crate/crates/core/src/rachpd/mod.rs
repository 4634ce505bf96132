//! LTE random access preamble detection: Zadoff-Chu roots, slot synthesis,
//! preprocessing, correlation, noise floor and peak search, plus the
//! dataflow graph and runtime kernels of the detector.
//!
//! Transforms follow one convention everywhere: the forward DFT is
//! unnormalized and the inverse is scaled by `1/N`.

mod config;
mod detect;
mod dsp;
mod graph;
mod io;
mod kernels;
mod synth;
mod zc;

use thiserror::Error;

pub use config::RachConfig;
pub use detect::{
    calibrate_alpha, detect, distance_m, noise_floor_threshold, noise_only_ratios, peak_search, Detection,
    DetectionReport, NoiseEstimate, PowerProfile,
};
pub use dsp::{circ_correlate, dft, fir_taps, idft, power_accumulate, preprocess, FIR_TAPS};
pub use graph::rach_graph;
pub use io::{decode_report, read_stream, write_stream, STREAM_MAGIC};
pub use kernels::{
    antenna_inputs, decode_complex, decode_f64, encode_complex, encode_f64, rach_registry,
    REPORT_PORT,
};
pub use synth::{synth_slot, User};
pub use zc::{is_prime, root_spectrum, zc_root};

pub use num_complex::Complex64;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum RachError {
    #[error("root {u} is not in 1..{n_zc}")]
    InvalidRoot { u: u64, n_zc: u64 },
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
    #[error("delay {delay} exceeds the supported maximum {max}")]
    DelayOutOfRange { delay: usize, max: usize },
    #[error("stream has {len} samples, at least {need} needed")]
    StreamTooShort { len: usize, need: usize },
    #[error("length mismatch: expected {expected}, got {got}")]
    LengthMismatch { expected: usize, got: usize },
    #[error("malformed data: {0}")]
    Format(String),
    #[error("{0}")]
    Io(String),
}

pub type Result<T> = std::result::Result<T, RachError>;
