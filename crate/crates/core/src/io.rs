//! On-disk formats: the flat binary dataset format, SHA-256 fingerprints for
//! frozen evaluation data, CSV export, and WAV ingestion.

use sha2::{Digest, Sha256};
use std::fmt::Write as _;
use std::path::Path;

use crate::basis::SignalMatrix;
use crate::error::{Error, Result};

/// Dataset files: this magic, u64 rows, u64 cols (little-endian), then
/// row-major little-endian f64 values.
const SIGNAL_MAGIC: &[u8; 8] = b"SIGMAT01";

pub fn write_signal_matrix(path: &Path, matrix: &SignalMatrix) -> Result<()> {
    let mut bytes =
        Vec::with_capacity(24 + matrix.rows() * matrix.cols() * std::mem::size_of::<f64>());
    bytes.extend_from_slice(SIGNAL_MAGIC);
    bytes.extend_from_slice(&(matrix.rows() as u64).to_le_bytes());
    bytes.extend_from_slice(&(matrix.cols() as u64).to_le_bytes());
    for v in matrix.array().iter() {
        bytes.extend_from_slice(&v.to_le_bytes());
    }
    std::fs::write(path, bytes)?;
    Ok(())
}

pub fn read_signal_matrix(path: &Path) -> Result<SignalMatrix> {
    let bytes = std::fs::read(path)?;
    let bad = |detail: String| Error::format(path, detail);
    if bytes.len() < 24 {
        return Err(bad(format!("only {} bytes, no room for a header", bytes.len())));
    }
    if &bytes[..8] != SIGNAL_MAGIC {
        return Err(bad(format!("bad magic {:02x?}", &bytes[..8])));
    }
    let rows = u64::from_le_bytes(bytes[8..16].try_into().expect("slice is 8 bytes")) as usize;
    let cols = u64::from_le_bytes(bytes[16..24].try_into().expect("slice is 8 bytes")) as usize;
    if rows == 0 || cols == 0 {
        return Err(bad(format!("degenerate shape {rows}x{cols}")));
    }
    let expected = rows
        .checked_mul(cols)
        .and_then(|n| n.checked_mul(8))
        .ok_or_else(|| bad(format!("shape {rows}x{cols} overflows")))?;
    if bytes.len() - 24 != expected {
        return Err(bad(format!(
            "payload is {} bytes, shape {rows}x{cols} needs {expected}",
            bytes.len() - 24
        )));
    }
    let values: Vec<f64> = bytes[24..]
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().expect("chunk is 8 bytes")))
        .collect();
    let array = ndarray::Array2::from_shape_vec((rows, cols), values)
        .expect("length checked against shape");
    SignalMatrix::new(array).map_err(|_| bad("non-finite entries".into()))
}

/// Hex SHA-256 of a file's bytes.
pub fn sha256_hex(path: &Path) -> Result<String> {
    let bytes = std::fs::read(path)?;
    let digest = Sha256::digest(&bytes);
    let mut hex = String::with_capacity(64);
    for byte in digest {
        write!(hex, "{byte:02x}").expect("string writes cannot fail");
    }
    Ok(hex)
}

/// Reads a dataset file only if its bytes still hash to `expected_sha256`.
/// Frozen evaluation data goes through this so silent modification is caught
/// before any model is scored against it.
pub fn read_signal_matrix_verified(path: &Path, expected_sha256: &str) -> Result<SignalMatrix> {
    let actual = sha256_hex(path)?;
    if actual != expected_sha256 {
        return Err(Error::HashMismatch { path: path.to_path_buf() });
    }
    read_signal_matrix(path)
}

/// Plain-text export: one CSV row per matrix row, 17 significant digits.
pub fn export_csv(path: &Path, matrix: &SignalMatrix) -> Result<()> {
    let mut out = String::new();
    for row in matrix.array().rows() {
        for (c, v) in row.iter().enumerate() {
            if c > 0 {
                out.push(',');
            }
            write!(out, "{v:.16e}").expect("string writes cannot fail");
        }
        out.push('\n');
    }
    std::fs::write(path, out)?;
    Ok(())
}

/// Reads a mono 48 kHz PCM WAV (16- or 24-bit) into samples scaled to
/// [-1, 1). Stereo files are rejected rather than mixed down, so a channel
/// mix-up fails loudly instead of producing quietly wrong data.
pub fn read_wav_mono_48k(path: &Path) -> Result<Vec<f64>> {
    let mut reader =
        hound::WavReader::open(path).map_err(|e| Error::format(path, e.to_string()))?;
    let spec = reader.spec();
    if spec.channels != 1 {
        return Err(Error::InvalidArgument(format!(
            "{} has {} channels; only mono tracks are accepted",
            path.display(),
            spec.channels
        )));
    }
    if spec.sample_rate != 48_000 {
        return Err(Error::InvalidArgument(format!(
            "{} is sampled at {} Hz, expected 48000",
            path.display(),
            spec.sample_rate
        )));
    }
    if spec.sample_format != hound::SampleFormat::Int
        || !matches!(spec.bits_per_sample, 16 | 24)
    {
        return Err(Error::InvalidArgument(format!(
            "{} is not 16- or 24-bit integer PCM",
            path.display()
        )));
    }
    let scale = 1.0 / f64::from(1u32 << (spec.bits_per_sample - 1));
    reader
        .samples::<i32>()
        .map(|s| {
            s.map(|v| f64::from(v) * scale)
                .map_err(|e| Error::format(path, e.to_string()))
        })
        .collect()
}
