//! Binary checkpoint: `"R4GS"`, then version, count and SH degree as u32,
//! then 65 little-endian f32 values per Gaussian in the flat parameter order.

use std::fs;
use std::path::Path;

use crate::gaussian::{Gaussian4D, GaussianStore, PARAM_COUNT};
use crate::io::IoError;

pub const CHECKPOINT_MAGIC: &[u8; 4] = b"R4GS";
pub const CHECKPOINT_VERSION: u32 = 1;
pub const CHECKPOINT_SH_DEGREE: u32 = 3;
const HEADER: usize = 16;

/// Serializes the parameters (not the optimizer state). Values are narrowed
/// to f32.
pub fn write_checkpoint(store: &GaussianStore) -> Vec<u8> {
    let mut out = Vec::with_capacity(HEADER + store.len() * PARAM_COUNT * 4);
    out.extend_from_slice(CHECKPOINT_MAGIC);
    out.extend_from_slice(&CHECKPOINT_VERSION.to_le_bytes());
    out.extend_from_slice(&(store.len() as u32).to_le_bytes());
    out.extend_from_slice(&CHECKPOINT_SH_DEGREE.to_le_bytes());
    for g in store.gaussians() {
        for v in g.to_flat() {
            out.extend_from_slice(&(v as f32).to_le_bytes());
        }
    }
    out
}

fn u32_at(bytes: &[u8], at: usize) -> u32 {
    u32::from_le_bytes(bytes[at..at + 4].try_into().unwrap())
}

pub fn read_checkpoint(bytes: &[u8]) -> Result<GaussianStore, IoError> {
    if bytes.len() < HEADER {
        return Err(IoError::Truncated { needed: HEADER, have: bytes.len() });
    }
    if &bytes[..4] != CHECKPOINT_MAGIC {
        return Err(IoError::BadMagic);
    }
    let version = u32_at(bytes, 4);
    if version != CHECKPOINT_VERSION {
        return Err(IoError::VersionMismatch { found: version, expected: CHECKPOINT_VERSION });
    }
    let count = u32_at(bytes, 8) as usize;
    let degree = u32_at(bytes, 12);
    if degree != CHECKPOINT_SH_DEGREE {
        return Err(IoError::ShDegree(degree));
    }
    let needed = HEADER + count * PARAM_COUNT * 4;
    if bytes.len() < needed {
        return Err(IoError::Truncated { needed, have: bytes.len() });
    }
    let gaussians = (0..count)
        .map(|i| {
            let base = HEADER + i * PARAM_COUNT * 4;
            let mut flat = [0.0; PARAM_COUNT];
            for (k, v) in flat.iter_mut().enumerate() {
                let at = base + 4 * k;
                *v = f32::from_le_bytes(bytes[at..at + 4].try_into().unwrap()) as f64;
            }
            Gaussian4D::from_flat(&flat)
        })
        .collect();
    Ok(GaussianStore::new(gaussians))
}

pub fn save_checkpoint(path: &Path, store: &GaussianStore) -> Result<(), IoError> {
    fs::write(path, write_checkpoint(store))?;
    Ok(())
}

pub fn load_checkpoint(path: &Path) -> Result<GaussianStore, IoError> {
    if !path.exists() {
        return Err(IoError::MissingFile(path.to_path_buf()));
    }
    read_checkpoint(&fs::read(path)?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gaussian::SH_COEFFS;
    use crate::rotor::Rotor4;

    fn store() -> GaussianStore {
        let mut sh = [[0.0; SH_COEFFS]; 3];
        sh[1][5] = 0.25;
        GaussianStore::new(vec![
            Gaussian4D::new([0.5, -1.0, 2.0, 0.75], [-2.0; 4], Rotor4::IDENTITY, 1.5, sh),
            Gaussian4D::new([0.0; 4], [0.125; 4], Rotor4::IDENTITY, -3.0, [[0.0; SH_COEFFS]; 3]),
        ])
    }

    #[test]
    fn header_layout() {
        let b = write_checkpoint(&store());
        assert_eq!(&b[..4], b"R4GS");
        assert_eq!(u32_at(&b, 4), 1);
        assert_eq!(u32_at(&b, 8), 2);
        assert_eq!(u32_at(&b, 12), 3);
        assert_eq!(b.len(), 16 + 2 * 65 * 4);
    }

    #[test]
    fn rejects_other_versions() {
        let mut b = write_checkpoint(&store());
        b[4] = 2;
        assert!(matches!(read_checkpoint(&b), Err(IoError::VersionMismatch { found: 2, .. })));
        b[0] = b'X';
        assert!(matches!(read_checkpoint(&b), Err(IoError::BadMagic)));
        let b = write_checkpoint(&store());
        assert!(matches!(read_checkpoint(&b[..100]), Err(IoError::Truncated { .. })));
    }

    #[test]
    fn representable_values_round_trip() {
        let s = store();
        assert_eq!(read_checkpoint(&write_checkpoint(&s)).unwrap().gaussians(), s.gaussians());
    }
}
