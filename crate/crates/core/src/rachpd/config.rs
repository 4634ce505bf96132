use serde::{Deserialize, Serialize};

use super::zc::is_prime;
use super::{RachError, Result};

/// Detector geometry and threshold settings.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RachConfig {
    pub antennas: usize,
    /// Number of root sequences searched.
    pub roots: usize,
    /// First root index; roots are `first_root..first_root + roots`.
    #[serde(default = "one")]
    pub first_root: u64,
    pub repetitions: usize,
    pub n_zc: usize,
    pub cp_samples: usize,
    pub seq_samples: usize,
    pub gp_samples: usize,
    pub sample_rate_hz: f64,
    pub downsample: usize,
    /// Threshold multiplier over the noise estimate.
    pub alpha: f64,
}

fn one() -> u64 {
    1
}

/// Threshold multiplier from the noise-only calibration of the desk
/// configuration (false alarms per root below 1e-3).
pub(crate) const DEFAULT_ALPHA: f64 = 4.5;

impl RachConfig {
    /// Small geometry with the full actor counts: 4 antennas, 64 roots,
    /// 2 repetitions of a 139-point sequence, decimation by 8.
    pub fn desk() -> Self {
        RachConfig {
            antennas: 4,
            roots: 64,
            first_root: 1,
            repetitions: 2,
            n_zc: 139,
            cp_samples: 1200,
            seq_samples: 1112,
            gp_samples: 1200,
            sample_rate_hz: 1112.0 / 800e-6,
            downsample: 8,
            alpha: DEFAULT_ALPHA,
        }
    }

    /// Preamble format 3 at 30.72 MHz, sized for 115 km cells.
    pub fn cell_115km() -> Self {
        RachConfig {
            antennas: 4,
            roots: 64,
            first_root: 1,
            repetitions: 2,
            n_zc: 839,
            cp_samples: 21012,
            seq_samples: 24576,
            gp_samples: 21996,
            sample_rate_hz: 30.72e6,
            downsample: 24,
            alpha: DEFAULT_ALPHA,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(RachError::InvalidConfig(m));
        if self.antennas == 0 || self.roots == 0 || self.repetitions == 0 {
            return bad("antennas, roots and repetitions must be at least 1".into());
        }
        if self.n_zc < 3 || self.n_zc % 2 == 0 || !is_prime(self.n_zc as u64) {
            return bad(format!("n_zc = {} is not an odd prime", self.n_zc));
        }
        if self.downsample == 0 || self.seq_samples % self.downsample != 0 {
            return bad(format!(
                "seq_samples = {} is not divisible by the downsample factor {}",
                self.seq_samples, self.downsample
            ));
        }
        if self.decimated_len() < self.n_zc {
            return bad(format!(
                "{} decimated samples cannot hold {} subcarriers",
                self.decimated_len(),
                self.n_zc
            ));
        }
        if self.first_root == 0 || self.first_root + self.roots as u64 > self.n_zc as u64 {
            return bad(format!(
                "roots {}..{} fall outside 1..{}",
                self.first_root,
                self.first_root + self.roots as u64,
                self.n_zc
            ));
        }
        if !(self.sample_rate_hz > 0.0) || !(self.alpha > 0.0) {
            return bad("sample rate and alpha must be positive".into());
        }
        Ok(())
    }

    pub fn root_list(&self) -> Vec<u64> {
        (self.first_root..self.first_root + self.roots as u64).collect()
    }

    /// Samples per repetition after decimation.
    pub fn decimated_len(&self) -> usize {
        self.seq_samples / self.downsample
    }

    pub fn stream_len(&self) -> usize {
        self.cp_samples + self.repetitions * self.seq_samples + self.gp_samples
    }

    /// Largest user delay in samples that stays inside the cyclic prefix
    /// and the guard period.
    pub fn max_delay(&self) -> usize {
        self.cp_samples.min(self.gp_samples)
    }

    /// Timing advance in samples of a correlation delay index.
    pub fn timing_advance(&self, index: usize) -> usize {
        ((index * self.seq_samples) as f64 / self.n_zc as f64).round() as usize
    }
}
