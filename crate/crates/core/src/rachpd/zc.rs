use std::f64::consts::PI;

use num_complex::Complex64;

use super::dsp::dft;
use super::{RachError, Result};

pub fn is_prime(n: u64) -> bool {
    if n < 2 {
        return false;
    }
    let mut d = 2;
    while d * d <= n {
        if n % d == 0 {
            return false;
        }
        d += 1;
    }
    true
}

/// Zadoff-Chu root sequence `x_u(n) = exp(-j*pi*u*n*(n+1)/N)`.
pub fn zc_root(u: u64, n_zc: usize) -> Result<Vec<Complex64>> {
    let n = n_zc as u64;
    if u == 0 || u >= n {
        return Err(RachError::InvalidRoot { u, n_zc: n });
    }
    if n % 2 == 0 || !is_prime(n) {
        return Err(RachError::InvalidConfig(format!("n_zc = {n} is not an odd prime")));
    }
    Ok((0..n)
        .map(|k| {
            // Reduce the phase index modulo 2N before converting to float.
            let m = (u * (k * (k + 1) % (2 * n))) % (2 * n);
            Complex64::from_polar(1.0, -PI * m as f64 / n as f64)
        })
        .collect())
}

/// DFT of a root sequence.
pub fn root_spectrum(u: u64, n_zc: usize) -> Result<Vec<Complex64>> {
    Ok(dft(&zc_root(u, n_zc)?))
}
