//! Sample file formats: binary interleaved little-endian `f64` I/Q pairs, and
//! a CSV view for inspection.

use std::io::{Read, Write};
use std::path::Path;

use crate::error::{Error, Result};
use crate::C64;

const BYTES_PER_SAMPLE: usize = 16;

pub fn encode_iq(samples: &[C64]) -> Vec<u8> {
    let mut out = Vec::with_capacity(samples.len() * BYTES_PER_SAMPLE);
    for v in samples {
        out.extend_from_slice(&v.re.to_le_bytes());
        out.extend_from_slice(&v.im.to_le_bytes());
    }
    out
}

pub fn decode_iq(bytes: &[u8], path: &Path) -> Result<Vec<C64>> {
    if !bytes.len().is_multiple_of(BYTES_PER_SAMPLE) {
        return Err(Error::Format {
            path: path.to_path_buf(),
            reason: format!("{} bytes is not a whole number of f64 I/Q pairs", bytes.len()),
        });
    }
    Ok(bytes
        .chunks_exact(BYTES_PER_SAMPLE)
        .map(|c| {
            let re = f64::from_le_bytes(c[..8].try_into().expect("8 bytes"));
            let im = f64::from_le_bytes(c[8..].try_into().expect("8 bytes"));
            C64::new(re, im)
        })
        .collect())
}

pub fn read_iq(path: &Path) -> Result<Vec<C64>> {
    let mut bytes = Vec::new();
    std::fs::File::open(path)?.read_to_end(&mut bytes)?;
    decode_iq(&bytes, path)
}

pub fn write_iq(path: &Path, samples: &[C64]) -> Result<()> {
    std::fs::write(path, encode_iq(samples))?;
    Ok(())
}

/// `index,re,im` rows.
pub fn write_iq_csv(mut w: impl Write, samples: &[C64]) -> std::io::Result<()> {
    writeln!(w, "index,re,im")?;
    for (i, v) in samples.iter().enumerate() {
        writeln!(w, "{i},{},{}", v.re, v.im)?;
    }
    Ok(())
}
