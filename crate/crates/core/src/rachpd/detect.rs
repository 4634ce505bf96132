use std::fmt;

use num_complex::Complex64;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::dsp::{circ_correlate, preprocess};
use super::synth::synth_slot;
use super::zc::root_spectrum;
use super::{RachConfig, RachError, Result};

/// Correlation energy per delay bin of one root, summed over repetitions
/// and antennas.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PowerProfile {
    pub root: u64,
    pub energies: Vec<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NoiseEstimate {
    pub root: u64,
    pub estimate: f64,
    pub threshold: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Detection {
    pub root: u64,
    pub delay_index: usize,
    pub timing_advance_samples: usize,
    pub peak_energy: f64,
    pub threshold: f64,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct DetectionReport {
    /// Strongest first.
    pub detections: Vec<Detection>,
    pub noise: Vec<NoiseEstimate>,
}

impl fmt::Display for DetectionReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "detections: {}", self.detections.len())?;
        for d in &self.detections {
            writeln!(
                f,
                "  root {:>4}  index {:>5}  ta {:>6}  energy {:.6e}  threshold {:.6e}",
                d.root, d.delay_index, d.timing_advance_samples, d.peak_energy, d.threshold
            )?;
        }
        writeln!(f, "noise estimates: {}", self.noise.len())?;
        for n in &self.noise {
            writeln!(f, "  root {:>4}  estimate {:.6e}  threshold {:.6e}", n.root, n.estimate, n.threshold)?;
        }
        Ok(())
    }
}

/// Round-trip distance in metres for a timing advance.
pub fn distance_m(ta_samples: usize, sample_rate_hz: f64) -> f64 {
    299_792_458.0 * ta_samples as f64 / sample_rate_hz / 2.0
}

/// Trimmed mean of the energies (the largest `ceil(n/8)` are left out),
/// floored at `1e-12` of the peak, and `alpha` times that as threshold.
pub fn noise_floor_threshold(profile: &PowerProfile, alpha: f64) -> NoiseEstimate {
    let mut e = profile.energies.clone();
    e.sort_by(f64::total_cmp);
    let n = e.len();
    let keep = n - n.div_ceil(8);
    let max = e.last().copied().unwrap_or(0.0);
    let mean = if keep == 0 {
        max
    } else {
        e[..keep].iter().sum::<f64>() / keep as f64
    };
    let estimate = mean.max(1e-12 * max);
    NoiseEstimate {
        root: profile.root,
        estimate,
        threshold: alpha * estimate,
    }
}

/// Local maxima within +-2 bins (circularly) above the root's threshold.
pub fn peak_search(profiles: &[PowerProfile], noise: &[NoiseEstimate], cfg: &RachConfig) -> DetectionReport {
    let mut detections = Vec::new();
    for (p, ne) in profiles.iter().zip(noise) {
        let e = &p.energies;
        let n = e.len() as i64;
        for i in 0..e.len() {
            if e[i] <= ne.threshold {
                continue;
            }
            let at = |off: i64| e[(i as i64 + off).rem_euclid(n) as usize];
            let peak = [-2, -1].iter().all(|&o| at(o) < e[i]) && [1, 2].iter().all(|&o| at(o) <= e[i]);
            if peak {
                detections.push(Detection {
                    root: p.root,
                    delay_index: i,
                    timing_advance_samples: cfg.timing_advance(i),
                    peak_energy: e[i],
                    threshold: ne.threshold,
                });
            }
        }
    }
    detections.sort_by(|a, b| {
        b.peak_energy
            .total_cmp(&a.peak_energy)
            .then(a.root.cmp(&b.root))
            .then(a.delay_index.cmp(&b.delay_index))
    });
    DetectionReport {
        detections,
        noise: noise.to_vec(),
    }
}

/// Power profiles of all configured roots. Accumulation order matches the
/// dataflow kernels: repetitions first, then antennas.
pub(crate) fn profiles(streams: &[Vec<Complex64>], cfg: &RachConfig) -> Result<Vec<PowerProfile>> {
    cfg.validate()?;
    if streams.len() != cfg.antennas {
        return Err(RachError::LengthMismatch {
            expected: cfg.antennas,
            got: streams.len(),
        });
    }
    let bins: Vec<Vec<Vec<Complex64>>> = streams.iter().map(|s| preprocess(s, cfg)).collect::<Result<_>>()?;
    let mut out = Vec::with_capacity(cfg.roots);
    for u in cfg.root_list() {
        let conj: Vec<Complex64> = root_spectrum(u, cfg.n_zc)?.iter().map(|v| v.conj()).collect();
        let mut total = vec![0.0; cfg.n_zc];
        for antenna in &bins {
            let mut reps = vec![0.0; cfg.n_zc];
            for rep in antenna {
                let c = circ_correlate(rep, &conj)?;
                for (a, v) in reps.iter_mut().zip(&c) {
                    *a = *a + 0.0 + v.norm_sqr();
                }
            }
            for (t, r) in total.iter_mut().zip(&reps) {
                *t += r;
            }
        }
        out.push(PowerProfile { root: u, energies: total });
    }
    Ok(out)
}

/// Full detection chain on the antenna streams of one slot.
pub fn detect(streams: &[Vec<Complex64>], cfg: &RachConfig) -> Result<(DetectionReport, Vec<PowerProfile>)> {
    let profiles = profiles(streams, cfg)?;
    let noise: Vec<NoiseEstimate> = profiles.iter().map(|p| noise_floor_threshold(p, cfg.alpha)).collect();
    Ok((peak_search(&profiles, &noise, cfg), profiles))
}

/// Ratio of the largest bin to the noise estimate for every root of
/// `slots` noise-only slots. Slot `i` is drawn from `seed + i`.
pub fn noise_only_ratios(cfg: &RachConfig, slots: usize, seed: u64) -> Result<Vec<f64>> {
    let workers = std::thread::available_parallelism().map_or(1, |n| n.get()).min(slots.max(1));
    let chunks: Vec<Result<Vec<f64>>> = std::thread::scope(|s| {
        let handles: Vec<_> = (0..workers)
            .map(|w| {
                s.spawn(move || {
                    let mut ratios = Vec::new();
                    for slot in (w..slots).step_by(workers) {
                        let mut rng = ChaCha8Rng::seed_from_u64(seed.wrapping_add(slot as u64));
                        let streams = synth_slot(cfg, &[], 1.0, &mut rng)?;
                        for p in profiles(&streams, cfg)? {
                            let est = noise_floor_threshold(&p, 1.0).estimate;
                            let max = p.energies.iter().copied().fold(0.0, f64::max);
                            ratios.push(max / est);
                        }
                    }
                    Ok(ratios)
                })
            })
            .collect();
        handles.into_iter().map(|h| h.join().expect("calibration worker")).collect()
    });
    let mut all = Vec::new();
    for c in chunks {
        all.extend(c?);
    }
    Ok(all)
}

/// Smallest threshold multiplier whose per-root false-alarm rate on
/// noise-only slots is at most `false_alarm`.
pub fn calibrate_alpha(cfg: &RachConfig, slots: usize, false_alarm: f64, seed: u64) -> Result<f64> {
    let mut ratios = noise_only_ratios(cfg, slots, seed)?;
    if ratios.is_empty() {
        return Err(RachError::InvalidConfig("calibration needs at least one slot".into()));
    }
    ratios.sort_by(f64::total_cmp);
    let allowed = (false_alarm * ratios.len() as f64).floor() as usize;
    Ok(ratios[ratios.len() - 1 - allowed.min(ratios.len() - 1)])
}
