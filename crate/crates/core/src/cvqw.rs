//! CVQW waveform file format.
//!
//! 16-byte header: magic "CVQW", version u16 LE, channel count u16 LE,
//! sample rate f64 LE; then interleaved little-endian f64
//! (Ix, Qx, Iy, Qy) per sample. Bit-exact across platforms.

use num_complex::Complex64;
use std::io::{self, Read, Write};
use std::path::Path;
use thiserror::Error;

use crate::txchain::WaveformBuffer;

pub const MAGIC: &[u8; 4] = b"CVQW";
pub const VERSION: u16 = 1;
const CHANNELS: u16 = 2;

#[derive(Debug, Error)]
pub enum CvqwError {
    #[error("io error: {0}")]
    Io(#[from] io::Error),
    #[error("not a CVQW file")]
    BadMagic,
    #[error("unsupported CVQW version {0}")]
    BadVersion(u16),
    #[error("unsupported channel count {0}")]
    BadChannels(u16),
    #[error("truncated sample data")]
    Truncated,
}

pub fn write<W: Write>(mut out: W, w: &WaveformBuffer) -> Result<(), CvqwError> {
    out.write_all(MAGIC)?;
    out.write_all(&VERSION.to_le_bytes())?;
    out.write_all(&CHANNELS.to_le_bytes())?;
    out.write_all(&w.sample_rate.to_le_bytes())?;
    let mut buf = Vec::with_capacity(w.len() * 32);
    for (x, y) in w.pol_x.iter().zip(&w.pol_y) {
        buf.extend_from_slice(&x.re.to_le_bytes());
        buf.extend_from_slice(&x.im.to_le_bytes());
        buf.extend_from_slice(&y.re.to_le_bytes());
        buf.extend_from_slice(&y.im.to_le_bytes());
    }
    out.write_all(&buf)?;
    Ok(())
}

pub fn read<R: Read>(mut input: R) -> Result<WaveformBuffer, CvqwError> {
    let mut header = [0u8; 16];
    input.read_exact(&mut header)?;
    if &header[0..4] != MAGIC {
        return Err(CvqwError::BadMagic);
    }
    let version = u16::from_le_bytes([header[4], header[5]]);
    if version != VERSION {
        return Err(CvqwError::BadVersion(version));
    }
    let channels = u16::from_le_bytes([header[6], header[7]]);
    if channels != CHANNELS {
        return Err(CvqwError::BadChannels(channels));
    }
    let sample_rate = f64::from_le_bytes(header[8..16].try_into().unwrap());
    let mut data = Vec::new();
    input.read_to_end(&mut data)?;
    if data.len() % 32 != 0 {
        return Err(CvqwError::Truncated);
    }
    let n = data.len() / 32;
    let mut pol_x = Vec::with_capacity(n);
    let mut pol_y = Vec::with_capacity(n);
    let f = |chunk: &[u8]| f64::from_le_bytes(chunk.try_into().unwrap());
    for s in data.chunks_exact(32) {
        pol_x.push(Complex64::new(f(&s[0..8]), f(&s[8..16])));
        pol_y.push(Complex64::new(f(&s[16..24]), f(&s[24..32])));
    }
    Ok(WaveformBuffer::new(sample_rate, pol_x, pol_y))
}

pub fn write_file<P: AsRef<Path>>(path: P, w: &WaveformBuffer) -> Result<(), CvqwError> {
    write(io::BufWriter::new(std::fs::File::create(path)?), w)
}

pub fn read_file<P: AsRef<Path>>(path: P) -> Result<WaveformBuffer, CvqwError> {
    read(io::BufReader::new(std::fs::File::open(path)?))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample_buffer() -> WaveformBuffer {
        let pol_x = (0..17)
            .map(|i| Complex64::new(i as f64 * 0.25, -(i as f64)))
            .collect();
        let pol_y = (0..17)
            .map(|i| Complex64::new(-0.5 * i as f64, 1.0 / (i + 1) as f64))
            .collect();
        WaveformBuffer::new(10e9, pol_x, pol_y)
    }

    #[test]
    fn round_trip_is_bit_exact() {
        let w = sample_buffer();
        let mut bytes = Vec::new();
        write(&mut bytes, &w).unwrap();
        assert_eq!(bytes.len(), 16 + 17 * 32);
        assert_eq!(&bytes[0..4], b"CVQW");
        let r = read(&bytes[..]).unwrap();
        assert_eq!(r, w);
    }

    #[test]
    fn rejects_corrupt_input() {
        let w = sample_buffer();
        let mut bytes = Vec::new();
        write(&mut bytes, &w).unwrap();

        let mut bad = bytes.clone();
        bad[0] = b'X';
        assert!(matches!(read(&bad[..]), Err(CvqwError::BadMagic)));

        let mut bad = bytes.clone();
        bad[4] = 9;
        assert!(matches!(read(&bad[..]), Err(CvqwError::BadVersion(_))));

        bytes.pop();
        assert!(matches!(read(&bytes[..]), Err(CvqwError::Truncated)));
    }
}
