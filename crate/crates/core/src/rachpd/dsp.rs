use std::cell::RefCell;
use std::f64::consts::PI;

use num_complex::Complex64;
use rustfft::FftPlanner;

use super::{RachConfig, RachError, Result};

thread_local! {
    static PLANNER: RefCell<FftPlanner<f64>> = RefCell::new(FftPlanner::new());
}

/// Unnormalized forward DFT.
pub fn dft(x: &[Complex64]) -> Vec<Complex64> {
    let mut buf = x.to_vec();
    if buf.is_empty() {
        return buf;
    }
    let fft = PLANNER.with(|p| p.borrow_mut().plan_fft_forward(buf.len()));
    fft.process(&mut buf);
    buf
}

/// Inverse DFT scaled by `1/N`.
pub fn idft(x: &[Complex64]) -> Vec<Complex64> {
    let mut buf = x.to_vec();
    if buf.is_empty() {
        return buf;
    }
    let fft = PLANNER.with(|p| p.borrow_mut().plan_fft_inverse(buf.len()));
    fft.process(&mut buf);
    let scale = 1.0 / buf.len() as f64;
    buf.iter_mut().for_each(|v| *v *= scale);
    buf
}

pub const FIR_TAPS: usize = 63;

/// Hamming-windowed sinc low-pass with cutoff `pi/d` and unit DC gain.
/// Tap `k` sits at lag `k - 31`.
pub fn fir_taps(d: usize) -> Vec<f64> {
    let half = (FIR_TAPS / 2) as f64;
    let mut h: Vec<f64> = (0..FIR_TAPS)
        .map(|n| {
            let k = n as f64 - half;
            let x = k / d as f64;
            let sinc = if k == 0.0 { 1.0 } else { (PI * x).sin() / (PI * x) };
            sinc * (0.54 + 0.46 * (PI * k / half).cos())
        })
        .collect();
    let sum: f64 = h.iter().sum();
    h.iter_mut().for_each(|v| *v /= sum);
    h
}

/// Frequency response of the zero-phase filter (real because the taps are
/// symmetric).
fn response(h: &[f64], omega: f64) -> f64 {
    let half = (h.len() / 2) as f64;
    h.iter()
        .enumerate()
        .map(|(n, &c)| c * (omega * (n as f64 - half)).cos())
        .sum()
}

/// Subcarrier offset of demapped bin `j`: bins are centred on DC.
pub(crate) fn subcarrier(j: usize, n: usize) -> i64 {
    if j <= (n - 1) / 2 {
        j as i64
    } else {
        j as i64 - n as i64
    }
}

/// CP removal, low-pass decimation by D, DFT of each repetition and
/// extraction of the n_zc preamble subcarriers. The demapped bins are
/// equalized by the filter response so a clean preamble comes out with
/// the spectrum it was sent with.
pub fn preprocess(stream: &[Complex64], cfg: &RachConfig) -> Result<Vec<Vec<Complex64>>> {
    let need = cfg.cp_samples + cfg.repetitions * cfg.seq_samples;
    if stream.len() < need {
        return Err(RachError::StreamTooShort { len: stream.len(), need });
    }
    (0..cfg.repetitions)
        .map(|r| preprocess_repetition(stream, cfg, r))
        .collect()
}

/// One repetition of [`preprocess`].
pub(crate) fn preprocess_repetition(stream: &[Complex64], cfg: &RachConfig, r: usize) -> Result<Vec<Complex64>> {
    let (seq, d, n) = (cfg.seq_samples, cfg.downsample, cfg.n_zc);
    let m = cfg.decimated_len();
    let start = cfg.cp_samples + r * seq;
    if stream.len() < start + seq {
        return Err(RachError::StreamTooShort { len: stream.len(), need: start + seq });
    }
    let block = &stream[start..start + seq];
    let h = fir_taps(d);
    let half = (FIR_TAPS / 2) as i64;
    // Circular filtering, evaluated only at the kept samples.
    let decimated: Vec<Complex64> = (0..m)
        .map(|i| {
            let centre = (i * d) as i64;
            h.iter()
                .enumerate()
                .map(|(t, &c)| block[(centre - (t as i64 - half)).rem_euclid(seq as i64) as usize] * c)
                .sum()
        })
        .collect();
    let spec = dft(&decimated);
    Ok((0..n)
        .map(|j| {
            let s = subcarrier(j, n);
            let gain = response(&h, 2.0 * PI * s as f64 / seq as f64);
            spec[s.rem_euclid(m as i64) as usize] * (d as f64 / gain)
        })
        .collect())
}

/// Circular correlation of received bins with a conjugated root spectrum,
/// returned in the time (delay) domain.
pub fn circ_correlate(freq: &[Complex64], root_conj: &[Complex64]) -> Result<Vec<Complex64>> {
    if freq.len() != root_conj.len() {
        return Err(RachError::LengthMismatch {
            expected: root_conj.len(),
            got: freq.len(),
        });
    }
    let prod: Vec<Complex64> = freq.iter().zip(root_conj).map(|(a, b)| a * b).collect();
    Ok(idft(&prod))
}

/// Sum of squared magnitudes over several correlation outputs.
pub fn power_accumulate(corrs: &[Vec<Complex64>]) -> Result<Vec<f64>> {
    let Some(first) = corrs.first() else {
        return Ok(Vec::new());
    };
    let mut acc = vec![0.0; first.len()];
    for c in corrs {
        if c.len() != acc.len() {
            return Err(RachError::LengthMismatch {
                expected: acc.len(),
                got: c.len(),
            });
        }
        for (a, v) in acc.iter_mut().zip(c) {
            *a += v.norm_sqr();
        }
    }
    Ok(acc)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rachpd::zc::{root_spectrum, zc_root};

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    fn direct_dft(x: &[Complex64]) -> Vec<Complex64> {
        let n = x.len();
        (0..n)
            .map(|k| {
                (0..n)
                    .map(|t| x[t] * Complex64::from_polar(1.0, -2.0 * PI * (k * t % n) as f64 / n as f64))
                    .sum()
            })
            .collect()
    }

    #[test]
    fn dft_matches_direct_sum() {
        let x: Vec<Complex64> = (0..11).map(|i| c(i as f64, (i * i) as f64 * 0.1)).collect();
        let fast = dft(&x);
        let slow = direct_dft(&x);
        for (a, b) in fast.iter().zip(&slow) {
            assert!((a - b).norm() < 1e-9 * b.norm().max(1.0));
        }
        let back = idft(&fast);
        for (a, b) in back.iter().zip(&x) {
            assert!((a - b).norm() < 1e-12);
        }
    }

    #[test]
    fn filter_has_unit_dc_gain_and_rejects_stopband() {
        let h = fir_taps(8);
        assert_eq!(h.len(), FIR_TAPS);
        assert!((response(&h, 0.0) - 1.0).abs() < 1e-12);
        assert!(response(&h, PI / 2.0).abs() < 1e-2);
        assert!((h[0] - h[62]).abs() < 1e-15);
    }

    #[test]
    fn own_spectrum_peaks_at_zero() {
        let x = root_spectrum(7, 139).unwrap();
        let conj: Vec<Complex64> = x.iter().map(|v| v.conj()).collect();
        let e = power_accumulate(&[circ_correlate(&x, &conj).unwrap()]).unwrap();
        assert!((e[0] - 139.0f64.powi(2)).abs() < 1e-9 * 139.0f64.powi(2));
        assert!(e[1..].iter().all(|&v| v < 1e-12));
    }

    #[test]
    fn zero_inputs_give_zero_outputs() {
        let cfg = RachConfig::desk();
        let stream = vec![Complex64::default(); cfg.stream_len()];
        let bins = preprocess(&stream, &cfg).unwrap();
        assert_eq!(bins.len(), cfg.repetitions);
        assert!(bins.iter().flatten().all(|v| v.norm() == 0.0));
        let conj = zc_root(3, 139).unwrap();
        let e = power_accumulate(&[circ_correlate(&bins[0], &conj).unwrap()]).unwrap();
        assert!(e.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn errors() {
        let cfg = RachConfig::desk();
        assert!(matches!(preprocess(&[], &cfg), Err(RachError::StreamTooShort { .. })));
        assert!(matches!(
            circ_correlate(&[c(1.0, 0.0)], &[]),
            Err(RachError::LengthMismatch { .. })
        ));
    }
}
