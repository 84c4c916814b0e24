//! TCUBE: the on-disk transient cube format.
//!
//! ```text
//! magic            4 bytes  "TCUB"
//! version          u32      1
//! kind             u8       CubeKind code
//! n_x, n_y, n_t    u32 x 3
//! bin_width_ps     f64
//! wall_extent_m    f64 x 2
//! detector_origin  f64 x 3
//! payload          f32 x n_x*n_y*n_t, scan-row-major then time
//! ```
//!
//! All fields little-endian. The payload is single precision, so a cube
//! read back from a file is exactly reproducible, but a freshly rendered
//! double-precision cube is rounded to `f32` on the first write.

use std::fs;
use std::io::{Read, Write};
use std::path::Path;

use nlos_core::{CubeKind, TimeAxis, TransientCube, WallGeometry};
use thiserror::Error;

pub const MAGIC: &[u8; 4] = b"TCUB";
pub const VERSION: u32 = 1;
pub const HEADER_LEN: usize = 4 + 4 + 1 + 12 + 8 + 16 + 24;

#[derive(Debug, Error)]
pub enum TcubeError {
    #[error("TCUBE field `magic`: expected \"TCUB\", found {0:?}")]
    Magic(String),

    #[error("TCUBE field `version`: unsupported version {0} (supported: {VERSION})")]
    Version(u32),

    #[error("TCUBE field `kind`: unknown cube kind code {0}")]
    Kind(u8),

    #[error("TCUBE header truncated: expected {HEADER_LEN} bytes, found {0}")]
    TruncatedHeader(usize),

    #[error("TCUBE payload truncated: expected {expected} bytes, found {actual}")]
    TruncatedPayload { expected: usize, actual: usize },

    #[error("TCUBE payload too long: expected {expected} bytes, found {actual}")]
    TrailingBytes { expected: usize, actual: usize },

    #[error("TCUBE cannot store {0}")]
    Unrepresentable(String),

    #[error("TCUBE header describes an invalid cube: {0}")]
    Invalid(#[from] nlos_core::CoreError),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Moves the decimal exponent of the shortest representation of `x`.
fn shift_exponent(x: f64, by: i32) -> f64 {
    let s = format!("{x:e}");
    let (mantissa, exp) = s.split_once('e').expect("exponent form");
    let exp: i32 = exp.parse().expect("integer exponent");
    format!("{mantissa}e{}", exp + by).parse().expect("valid float")
}

fn decode_bin_width(ps: f64) -> f64 {
    shift_exponent(ps, -12)
}

fn exact_ps(seconds: f64) -> Option<f64> {
    let ps = shift_exponent(seconds, 12);
    (0..=8u64)
        .flat_map(|k| [f64::from_bits(ps.to_bits() + k), f64::from_bits(ps.to_bits() - k)])
        .find(|&c| decode_bin_width(c) == seconds)
}

/// Picosecond value that reads back to exactly `seconds`. Widths written as
/// decimals (`2.41e-11`) always have one. Otherwise the width is rounded to
/// one that has, so files still re-encode to the same bytes.
fn encode_bin_width(seconds: f64) -> f64 {
    exact_ps(seconds).unwrap_or_else(|| {
        let ps = shift_exponent(seconds, 12);
        exact_ps(decode_bin_width(ps)).unwrap_or(ps)
    })
}

pub fn encode(cube: &TransientCube) -> Result<Vec<u8>, TcubeError> {
    let axis = cube.time_axis();
    if axis.origin != 0.0 {
        return Err(TcubeError::Unrepresentable(format!("a time origin of {} s", axis.origin)));
    }
    let mut out = Vec::with_capacity(HEADER_LEN + 4 * cube.data().len());
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&VERSION.to_le_bytes());
    out.push(cube.kind().code());
    for n in [cube.nx(), cube.ny(), cube.num_bins()] {
        let n = u32::try_from(n).map_err(|_| TcubeError::Unrepresentable(format!("dimension {n}")))?;
        out.extend_from_slice(&n.to_le_bytes());
    }
    out.extend_from_slice(&encode_bin_width(axis.bin_width).to_le_bytes());
    let wall = cube.wall();
    for v in wall.extent.iter().chain(&wall.detector_origin) {
        out.extend_from_slice(&v.to_le_bytes());
    }
    for &v in cube.data() {
        out.extend_from_slice(&(v as f32).to_le_bytes());
    }
    Ok(out)
}

pub fn decode(bytes: &[u8]) -> Result<TransientCube, TcubeError> {
    if bytes.len() < 4 || &bytes[..4] != MAGIC {
        let shown = String::from_utf8_lossy(&bytes[..bytes.len().min(4)]).into_owned();
        return Err(TcubeError::Magic(shown));
    }
    if bytes.len() < 8 {
        return Err(TcubeError::TruncatedHeader(bytes.len()));
    }
    let u32_at = |o: usize| u32::from_le_bytes(bytes[o..o + 4].try_into().expect("4 bytes"));
    let f64_at = |o: usize| f64::from_le_bytes(bytes[o..o + 8].try_into().expect("8 bytes"));
    let version = u32_at(4);
    if version != VERSION {
        return Err(TcubeError::Version(version));
    }
    if bytes.len() < HEADER_LEN {
        return Err(TcubeError::TruncatedHeader(bytes.len()));
    }
    let kind = CubeKind::from_code(bytes[8]).ok_or(TcubeError::Kind(bytes[8]))?;
    let (nx, ny, nt) = (u32_at(9) as usize, u32_at(13) as usize, u32_at(17) as usize);
    let bin_width = decode_bin_width(f64_at(21));
    let extent = [f64_at(29), f64_at(37)];
    let origin = [f64_at(45), f64_at(53), f64_at(61)];
    let expected = nx
        .checked_mul(ny)
        .and_then(|v| v.checked_mul(nt))
        .and_then(|v| v.checked_mul(4))
        .ok_or_else(|| TcubeError::Unrepresentable(format!("dimensions {nx}x{ny}x{nt}")))?;
    let actual = bytes.len() - HEADER_LEN;
    if actual < expected {
        return Err(TcubeError::TruncatedPayload { expected, actual });
    }
    if actual > expected {
        return Err(TcubeError::TrailingBytes { expected, actual });
    }
    let wall = WallGeometry::new(extent, [nx, ny], origin)?;
    let axis = TimeAxis::new(nt, bin_width)?;
    let data = bytes[HEADER_LEN..]
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes(c.try_into().expect("4 bytes")) as f64)
        .collect();
    Ok(TransientCube::new(wall, axis, kind, data)?)
}

pub fn write_tcube(path: &Path, cube: &TransientCube) -> Result<(), TcubeError> {
    let bytes = encode(cube)?;
    let mut f = fs::File::create(path)?;
    f.write_all(&bytes)?;
    Ok(())
}

pub fn read_tcube(path: &Path) -> Result<TransientCube, TcubeError> {
    let mut bytes = Vec::new();
    fs::File::open(path)?.read_to_end(&mut bytes)?;
    decode(&bytes)
}
