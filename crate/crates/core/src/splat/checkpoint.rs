//! Binary model files: `"HSGS"`, version (u32), count (u64), SH degree (u32),
//! then `count × 23` little-endian f64 parameters.

use std::path::Path;

use super::gaussian::{GaussianCloud, N_PARAMS};
use crate::error::{Error, Result};

pub const MAGIC: &[u8; 4] = b"HSGS";
pub const FORMAT_VERSION: u32 = 1;
const HEADER_LEN: usize = 4 + 4 + 8 + 4;

pub fn encode_checkpoint(cloud: &GaussianCloud) -> Vec<u8> {
    let mut out = Vec::with_capacity(HEADER_LEN + cloud.len() * N_PARAMS * 8);
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&FORMAT_VERSION.to_le_bytes());
    out.extend_from_slice(&(cloud.len() as u64).to_le_bytes());
    out.extend_from_slice(&cloud.sh_degree().to_le_bytes());
    for v in cloud.to_flat() {
        out.extend_from_slice(&v.to_le_bytes());
    }
    out
}

pub fn decode_checkpoint(bytes: &[u8], path: &Path) -> Result<GaussianCloud> {
    if bytes.len() < HEADER_LEN || &bytes[..4] != MAGIC {
        return Err(Error::parse(path, "not a Gaussian checkpoint (bad magic)"));
    }
    let version = u32::from_le_bytes(bytes[4..8].try_into().expect("4 bytes"));
    if version != FORMAT_VERSION {
        return Err(Error::Unsupported(format!(
            "{}: checkpoint version {version}",
            path.display()
        )));
    }
    let count = u64::from_le_bytes(bytes[8..16].try_into().expect("8 bytes"));
    let degree = u32::from_le_bytes(bytes[16..20].try_into().expect("4 bytes"));
    let body = &bytes[HEADER_LEN..];
    let expected = (count as usize)
        .checked_mul(N_PARAMS * 8)
        .ok_or_else(|| Error::parse(path, "Gaussian count overflows"))?;
    if body.len() != expected {
        return Err(Error::parse(
            path,
            format!("expected {expected} parameter bytes for {count} Gaussians, found {}", body.len()),
        ));
    }
    let flat: Vec<f64> = body
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes")))
        .collect();
    GaussianCloud::from_flat(&flat, degree).map_err(|e| Error::parse(path, e.to_string()))
}

pub fn save_checkpoint(cloud: &GaussianCloud, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    std::fs::write(path, encode_checkpoint(cloud)).map_err(|e| Error::io(path, e))
}

pub fn load_checkpoint(path: impl AsRef<Path>) -> Result<GaussianCloud> {
    let path = path.as_ref();
    if !path.exists() {
        return Err(Error::MissingFile(path.to_path_buf()));
    }
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    decode_checkpoint(&bytes, path)
}
