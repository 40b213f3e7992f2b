//! Binary field files.
//!
//! Layout (all integers little-endian `u32`, all floats little-endian `f64`):
//!
//! ```text
//! offset  size  content
//! 0       4     magic "SNSF"
//! 4       4     format version (1)
//! 8       4     dim
//! 12      4     n_per_axis
//! 16      4     component count
//! 20      ...   for each component, for each flat mode index: re, im
//! ```
//!
//! Flat mode index `i` enumerates FFT order with axis 0 slowest; the FFT index
//! `m` on an axis carries wavenumber `m` for `m < n/2` and `m - n` otherwise.
//! Coefficients are normalized so `u(x) = Σ û(n) e^{i n·x}`.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use super::field::SpectralField;
use super::grid::Grid;
use crate::error::{Error, Result};

pub const MAGIC: &[u8; 4] = b"SNSF";
pub const VERSION: u32 = 1;
const HEADER_LEN: usize = 20;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FieldSidecar {
    pub format: String,
    pub version: u32,
    pub dim: usize,
    pub n_per_axis: usize,
    pub components: usize,
    pub index_order: String,
    pub normalization: String,
}

impl FieldSidecar {
    pub fn for_field(f: &SpectralField) -> Self {
        Self {
            format: "SNSF".into(),
            version: VERSION,
            dim: f.grid().dim(),
            n_per_axis: f.grid().n(),
            components: f.components(),
            index_order: "fft order, axis 0 slowest".into(),
            normalization: "u(x) = sum_n c(n) exp(i n.x)".into(),
        }
    }
}

pub fn encode(f: &SpectralField) -> Vec<u8> {
    let g = f.grid();
    let mut out = Vec::with_capacity(HEADER_LEN + 16 * g.len() * f.components());
    out.extend_from_slice(MAGIC);
    for v in [VERSION, g.dim() as u32, g.n() as u32, f.components() as u32] {
        out.extend_from_slice(&v.to_le_bytes());
    }
    for c in f.coefficients() {
        for z in c {
            out.extend_from_slice(&z.re.to_le_bytes());
            out.extend_from_slice(&z.im.to_le_bytes());
        }
    }
    out
}

pub fn decode(bytes: &[u8]) -> Result<SpectralField> {
    if bytes.len() < HEADER_LEN || &bytes[..4] != MAGIC {
        return Err(Error::Format("missing SNSF header".into()));
    }
    let word = |k: usize| u32::from_le_bytes(bytes[4 + 4 * k..8 + 4 * k].try_into().unwrap());
    let version = word(0);
    if version != VERSION {
        return Err(Error::Format(format!("unsupported version {version}")));
    }
    let (dim, n, comps) = (word(1) as usize, word(2) as usize, word(3) as usize);
    let grid = Grid::new(dim, n).map_err(|e| Error::Format(e.to_string()))?;
    let expected = HEADER_LEN + 16 * grid.len() * comps;
    if bytes.len() != expected {
        return Err(Error::Format(format!(
            "payload is {} bytes, header implies {expected}",
            bytes.len()
        )));
    }
    let mut data = bytes[HEADER_LEN..]
        .chunks_exact(16)
        .map(|c| {
            Complex64::new(
                f64::from_le_bytes(c[..8].try_into().unwrap()),
                f64::from_le_bytes(c[8..].try_into().unwrap()),
            )
        });
    let coeffs: Vec<Vec<Complex64>> = (0..comps)
        .map(|_| data.by_ref().take(grid.len()).collect())
        .collect();
    // Stored coefficients are taken verbatim.
    let mut f = SpectralField::zeros(&grid, comps);
    for (dst, src) in f.components_mut().iter_mut().zip(coeffs) {
        *dst = src;
    }
    Ok(f)
}

pub fn sidecar_path(path: &Path) -> PathBuf {
    let mut s = path.as_os_str().to_owned();
    s.push(".json");
    PathBuf::from(s)
}

/// Writes the binary file and its `.json` sidecar.
pub fn write_field(path: &Path, f: &SpectralField) -> Result<()> {
    fs::File::create(path)?.write_all(&encode(f))?;
    let side = serde_json::to_string_pretty(&FieldSidecar::for_field(f))?;
    fs::write(sidecar_path(path), side + "\n")?;
    Ok(())
}

pub fn read_field(path: &Path) -> Result<SpectralField> {
    decode(&fs::read(path)?)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn encode_decode_round_trip() {
        let g = Grid::new(2, 8).unwrap();
        let f = SpectralField::from_fn(&g, 2, |x| [x[1].sin(), (x[0] - x[1]).cos(), 0.0]);
        let bytes = encode(&f);
        assert_eq!(&bytes[..4], b"SNSF");
        assert_eq!(bytes.len(), 20 + 16 * 64 * 2);
        assert_eq!(decode(&bytes).unwrap(), f);
    }

    #[test]
    fn rejects_truncated_payload() {
        let g = Grid::new(2, 8).unwrap();
        let bytes = encode(&SpectralField::zero_vector(&g));
        assert!(matches!(decode(&bytes[..bytes.len() - 1]), Err(Error::Format(_))));
        assert!(matches!(decode(b"XXXX"), Err(Error::Format(_))));
    }
}
