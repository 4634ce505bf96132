use std::io::{Read, Write};
use std::path::Path;

use num_complex::Complex64;

use super::{DetectionReport, RachError, Result};

/// Header of sample stream files, followed by the sample count (u64 LE)
/// and interleaved f32 LE (re, im) pairs.
pub const STREAM_MAGIC: &[u8; 8] = b"SDFMIQ01";

pub fn write_stream(path: &Path, samples: &[Complex64]) -> Result<()> {
    let mut buf = Vec::with_capacity(16 + 8 * samples.len());
    buf.extend_from_slice(STREAM_MAGIC);
    buf.extend_from_slice(&(samples.len() as u64).to_le_bytes());
    for s in samples {
        buf.extend_from_slice(&(s.re as f32).to_le_bytes());
        buf.extend_from_slice(&(s.im as f32).to_le_bytes());
    }
    let mut f = std::fs::File::create(path).map_err(|e| RachError::Io(format!("{}: {e}", path.display())))?;
    f.write_all(&buf).map_err(|e| RachError::Io(format!("{}: {e}", path.display())))
}

pub fn read_stream(path: &Path) -> Result<Vec<Complex64>> {
    let mut buf = Vec::new();
    std::fs::File::open(path)
        .and_then(|mut f| f.read_to_end(&mut buf))
        .map_err(|e| RachError::Io(format!("{}: {e}", path.display())))?;
    if buf.len() < 16 || &buf[..8] != STREAM_MAGIC {
        return Err(RachError::Format(format!("{}: not a sample stream", path.display())));
    }
    let n = u64::from_le_bytes(buf[8..16].try_into().unwrap()) as usize;
    let body = &buf[16..];
    if body.len() != 8 * n {
        return Err(RachError::Format(format!(
            "{}: header announces {n} samples, file holds {} bytes",
            path.display(),
            body.len()
        )));
    }
    Ok(body
        .chunks_exact(8)
        .map(|c| {
            Complex64::new(
                f32::from_le_bytes(c[..4].try_into().unwrap()) as f64,
                f32::from_le_bytes(c[4..].try_into().unwrap()) as f64,
            )
        })
        .collect())
}

/// Parse the report emitted by the `peak_search` kernel.
pub fn decode_report(bytes: &[u8]) -> Result<DetectionReport> {
    serde_json::from_slice(bytes).map_err(|e| RachError::Format(format!("detection report: {e}")))
}
