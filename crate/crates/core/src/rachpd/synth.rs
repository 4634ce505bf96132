use num_complex::Complex64;
use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use super::dsp::{idft, subcarrier};
use super::zc::root_spectrum;
use super::{RachConfig, RachError, Result};

/// One transmitting user.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct User {
    pub root: u64,
    /// Round-trip delay in samples.
    pub delay: usize,
    pub amplitude: f64,
}

/// Time-domain preamble: the root spectrum on the centred subcarriers of a
/// `seq_samples` grid.
pub(crate) fn modulated_root(u: u64, cfg: &RachConfig) -> Result<Vec<Complex64>> {
    let (n, seq) = (cfg.n_zc, cfg.seq_samples);
    let x = root_spectrum(u, n)?;
    let mut grid = vec![Complex64::default(); seq];
    for (j, v) in x.iter().enumerate() {
        grid[subcarrier(j, n).rem_euclid(seq as i64) as usize] = *v;
    }
    let scale = seq as f64 / n as f64;
    Ok(idft(&grid).into_iter().map(|v| v * scale).collect())
}

/// One RACH slot as received on each antenna: cyclic prefix, repeated
/// preamble and guard period, every user shifted by its delay with an
/// independent phase per antenna, plus complex Gaussian noise of power
/// `noise_sigma^2`.
pub fn synth_slot<R: Rng>(
    cfg: &RachConfig,
    users: &[User],
    noise_sigma: f64,
    rng: &mut R,
) -> Result<Vec<Vec<Complex64>>> {
    cfg.validate()?;
    let len = cfg.stream_len();
    let (cp, seq) = (cfg.cp_samples as i64, cfg.seq_samples as i64);
    let active = cfg.cp_samples + cfg.repetitions * cfg.seq_samples;
    let mut preambles = Vec::with_capacity(users.len());
    for u in users {
        if u.delay > cfg.max_delay() {
            return Err(RachError::DelayOutOfRange {
                delay: u.delay,
                max: cfg.max_delay(),
            });
        }
        if u.root == 0 || u.root >= cfg.n_zc as u64 {
            return Err(RachError::InvalidRoot { u: u.root, n_zc: cfg.n_zc as u64 });
        }
        preambles.push(modulated_root(u.root, cfg)?);
    }
    let noise = Normal::new(0.0, noise_sigma / 2f64.sqrt())
        .map_err(|e| RachError::InvalidConfig(format!("noise sigma: {e}")))?;
    let mut streams = Vec::with_capacity(cfg.antennas);
    for _ in 0..cfg.antennas {
        let mut s = vec![Complex64::default(); len];
        for (u, p) in users.iter().zip(&preambles) {
            let phase = Complex64::from_polar(u.amplitude, rng.random_range(0.0..std::f64::consts::TAU));
            for t in 0..active {
                let k = (t as i64 - cp).rem_euclid(seq) as usize;
                s[t + u.delay] += p[k] * phase;
            }
        }
        if noise_sigma > 0.0 {
            for v in &mut s {
                *v += Complex64::new(noise.sample(rng), noise.sample(rng));
            }
        }
        streams.push(s);
    }
    Ok(streams)
}
