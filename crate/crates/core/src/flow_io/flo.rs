//! Middlebury `.flo` reader and writer.
//!
//! Layout: the float `202021.25` (bytes `PIEH`), width and height as
//! little-endian `i32`, then `width * height` interleaved `(u, v)` pairs of
//! little-endian `f32`, row-major.

use std::fs;
use std::io::{Cursor, Read};
use std::path::Path;

use byteorder::{LittleEndian, ReadBytesExt, WriteBytesExt};

use super::{write_atomic, FlowIoError, MotionField};

pub const FLO_MAGIC: f32 = 202021.25;
/// Written in both components for invalid or non-finite pixels.
pub const UNKNOWN_FLOW: f32 = 1e10;
/// Components above this magnitude mark a pixel invalid on read.
pub const UNKNOWN_FLOW_THRESHOLD: f32 = 1e9;
pub const MAX_SIDE: i64 = 1 << 16;

const HEADER_LEN: usize = 12;

pub fn read_flow_file(path: impl AsRef<Path>) -> Result<MotionField, FlowIoError> {
    let bytes = fs::read(path)?;
    decode_flo(&bytes)
}

pub fn write_flow_file(field: &MotionField, path: impl AsRef<Path>) -> Result<(), FlowIoError> {
    let bytes = encode_flo(field)?;
    write_atomic(path.as_ref(), &bytes)
}

pub fn decode_flo(bytes: &[u8]) -> Result<MotionField, FlowIoError> {
    if bytes.len() < HEADER_LEN {
        return Err(FlowIoError::TruncatedFile {
            expected: HEADER_LEN,
            actual: bytes.len(),
        });
    }
    let mut rdr = Cursor::new(bytes);
    let magic = rdr.read_f32::<LittleEndian>()?;
    if magic.to_bits() != FLO_MAGIC.to_bits() {
        return Err(FlowIoError::BadMagic(magic));
    }
    let width = rdr.read_i32::<LittleEndian>()? as i64;
    let height = rdr.read_i32::<LittleEndian>()? as i64;
    if width > MAX_SIDE || height > MAX_SIDE {
        return Err(FlowIoError::DimensionOverflow { width, height });
    }
    if width <= 0 || height <= 0 {
        return Err(FlowIoError::InvalidDimensions { width, height });
    }
    let (width, height) = (width as usize, height as usize);
    let n = width * height;
    let expected = HEADER_LEN + n * 8;
    if bytes.len() < expected {
        return Err(FlowIoError::TruncatedFile {
            expected,
            actual: bytes.len(),
        });
    }

    let mut payload = vec![0f32; 2 * n];
    rdr.read_f32_into::<LittleEndian>(&mut payload)?;
    let mut field = MotionField::zeros(width, height);
    for i in 0..n {
        let (u, v) = (payload[2 * i], payload[2 * i + 1]);
        // Unknown pixels decode as zero flow so the sentinel never reaches arithmetic.
        if is_known(u) && is_known(v) {
            field.u[i] = u as f64;
            field.v[i] = v as f64;
        } else {
            field.valid[i] = false;
        }
    }
    Ok(field)
}

fn is_known(c: f32) -> bool {
    c.is_finite() && c.abs() <= UNKNOWN_FLOW_THRESHOLD
}

pub fn encode_flo(field: &MotionField) -> Result<Vec<u8>, FlowIoError> {
    if !field.is_consistent() {
        return Err(FlowIoError::InconsistentField);
    }
    let (w, h) = (field.width as i64, field.height as i64);
    if w > MAX_SIDE || h > MAX_SIDE {
        return Err(FlowIoError::DimensionOverflow {
            width: w,
            height: h,
        });
    }
    let mut out = Vec::with_capacity(HEADER_LEN + field.len() * 8);
    out.write_f32::<LittleEndian>(FLO_MAGIC)?;
    out.write_i32::<LittleEndian>(w as i32)?;
    out.write_i32::<LittleEndian>(h as i32)?;
    for i in 0..field.len() {
        let (u, v) = (field.u[i] as f32, field.v[i] as f32);
        if field.valid[i] && u.is_finite() && v.is_finite() {
            out.write_f32::<LittleEndian>(u)?;
            out.write_f32::<LittleEndian>(v)?;
        } else {
            out.write_f32::<LittleEndian>(UNKNOWN_FLOW)?;
            out.write_f32::<LittleEndian>(UNKNOWN_FLOW)?;
        }
    }
    Ok(out)
}

/// Reads just the header; useful for validating large directories cheaply.
pub fn read_flo_dimensions(path: impl AsRef<Path>) -> Result<(usize, usize), FlowIoError> {
    let mut header = [0u8; HEADER_LEN];
    let mut f = fs::File::open(path)?;
    f.read_exact(&mut header).map_err(|_| FlowIoError::TruncatedFile {
        expected: HEADER_LEN,
        actual: 0,
    })?;
    let mut rdr = Cursor::new(&header[..]);
    let magic = rdr.read_f32::<LittleEndian>()?;
    if magic.to_bits() != FLO_MAGIC.to_bits() {
        return Err(FlowIoError::BadMagic(magic));
    }
    let w = rdr.read_i32::<LittleEndian>()? as i64;
    let h = rdr.read_i32::<LittleEndian>()? as i64;
    if w > MAX_SIDE || h > MAX_SIDE {
        return Err(FlowIoError::DimensionOverflow {
            width: w,
            height: h,
        });
    }
    if w <= 0 || h <= 0 {
        return Err(FlowIoError::InvalidDimensions {
            width: w,
            height: h,
        });
    }
    Ok((w as usize, h as usize))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn header(w: i32, h: i32) -> Vec<u8> {
        let mut b = Vec::new();
        b.write_f32::<LittleEndian>(FLO_MAGIC).unwrap();
        b.write_i32::<LittleEndian>(w).unwrap();
        b.write_i32::<LittleEndian>(h).unwrap();
        b
    }

    #[test]
    fn magic_is_pieh() {
        assert_eq!(&FLO_MAGIC.to_le_bytes(), b"PIEH");
    }

    #[test]
    fn rejects_other_magic() {
        let mut b = header(1, 1);
        b[0] ^= 1;
        b.extend_from_slice(&[0; 8]);
        assert!(matches!(decode_flo(&b), Err(FlowIoError::BadMagic(_))));
    }

    #[test]
    fn two_by_one_round_trip_bytes() {
        let mut f = MotionField::zeros(2, 1);
        f.u = vec![0.0, 1.0];
        f.v = vec![0.0, -1.0];
        let bytes = encode_flo(&f).unwrap();
        let back = decode_flo(&bytes).unwrap();
        assert_eq!(back, f);
        assert_eq!(encode_flo(&back).unwrap(), bytes);
    }

    #[test]
    fn one_scalar_short_is_truncated() {
        let mut b = header(3, 2);
        b.extend(std::iter::repeat_n(0u8, 3 * 2 * 2 * 4 - 4));
        assert!(matches!(
            decode_flo(&b),
            Err(FlowIoError::TruncatedFile {
                expected: 60,
                actual: 56
            })
        ));
    }

    #[test]
    fn oversized_dimensions_rejected() {
        let b = header((1 << 16) + 1, 1);
        assert!(matches!(
            decode_flo(&b),
            Err(FlowIoError::DimensionOverflow { .. })
        ));
        let b = header(0, 5);
        assert!(matches!(
            decode_flo(&b),
            Err(FlowIoError::InvalidDimensions { .. })
        ));
    }

    #[test]
    fn zero_field_size() {
        let bytes = encode_flo(&MotionField::zeros(4, 4)).unwrap();
        assert_eq!(bytes.len(), 4 + 8 + 128);
    }

    #[test]
    fn nan_written_as_sentinel_and_read_invalid() {
        let mut f = MotionField::zeros(2, 2);
        f.u[3] = f64::NAN;
        let bytes = encode_flo(&f).unwrap();
        let px = &bytes[HEADER_LEN + 3 * 8..];
        assert_eq!(&px[..4], &UNKNOWN_FLOW.to_le_bytes());
        assert_eq!(&px[4..8], &UNKNOWN_FLOW.to_le_bytes());
        let back = decode_flo(&bytes).unwrap();
        assert_eq!(back.valid, vec![true, true, true, false]);
    }

    #[test]
    fn large_component_marks_invalid() {
        let mut b = header(2, 1);
        for c in [1.0f32, 2e9, 0.5, -0.5] {
            b.write_f32::<LittleEndian>(c).unwrap();
        }
        let f = decode_flo(&b).unwrap();
        assert_eq!(f.valid, vec![false, true]);
        assert_eq!(f.u[1], 0.5);
    }
}
