//! Depth artifacts: PFM (little-endian, scale -1.0) and 16-bit grayscale PNG.

use std::fs;
use std::io::{BufRead, Cursor, Read};
use std::path::{Path, PathBuf};

use byteorder::{LittleEndian, ReadBytesExt, WriteBytesExt};
use image::{ImageBuffer, Luma};

use super::{write_atomic, DepthMap, FlowIoError, RelativeDepthMap};

/// `base` with `ext` appended, keeping any dots already in the file name.
pub fn with_suffix(base: &Path, ext: &str) -> PathBuf {
    let mut s = base.as_os_str().to_owned();
    s.push(".");
    s.push(ext);
    PathBuf::from(s)
}

/// Writes `<base>.pfm` (r, NaN where invalid) and `<base>.png` (16-bit, 0 where invalid).
pub fn write_depth_outputs(rel: &RelativeDepthMap, base: impl AsRef<Path>) -> Result<(), FlowIoError> {
    let base = base.as_ref();
    let values: Vec<f32> = rel
        .r
        .iter()
        .zip(&rel.valid)
        .map(|(&r, &ok)| if ok { r as f32 } else { f32::NAN })
        .collect();
    write_atomic(
        &with_suffix(base, "pfm"),
        &encode_pfm(rel.width, rel.height, &values)?,
    )?;
    let png: Vec<u16> = rel
        .r
        .iter()
        .zip(&rel.valid)
        .map(|(&r, &ok)| if ok { quantize_relative(r) } else { 0 })
        .collect();
    write_atomic(
        &with_suffix(base, "png"),
        &encode_png16(rel.width, rel.height, png)?,
    )
}

/// `round(r * 65535)` with ties rounded up; valid pixels never map to the
/// invalid code 0.
pub fn quantize_relative(r: f64) -> u16 {
    let q = (r.clamp(0.0, 1.0) * 65535.0 + 0.5).floor() as u16;
    q.max(1)
}

pub fn dequantize_relative(q: u16) -> Option<f64> {
    (q != 0).then(|| q as f64 / 65535.0)
}

pub fn encode_png16(width: usize, height: usize, data: Vec<u16>) -> Result<Vec<u8>, FlowIoError> {
    let img: ImageBuffer<Luma<u16>, Vec<u16>> =
        ImageBuffer::from_raw(width as u32, height as u32, data).ok_or(FlowIoError::InconsistentField)?;
    let mut out = Cursor::new(Vec::new());
    img.write_to(&mut out, image::ImageFormat::Png)?;
    Ok(out.into_inner())
}

pub fn read_relative_png(path: impl AsRef<Path>) -> Result<RelativeDepthMap, FlowIoError> {
    let img = image::open(path)?.into_luma16();
    let (w, h) = (img.width() as usize, img.height() as usize);
    let decoded: Vec<Option<f64>> = img.into_raw().into_iter().map(dequantize_relative).collect();
    Ok(RelativeDepthMap {
        width: w,
        height: h,
        r: decoded.iter().map(|r| r.unwrap_or(0.0)).collect(),
        valid: decoded.iter().map(Option::is_some).collect(),
    })
}

/// Single-channel PFM, little-endian, rows stored bottom to top.
pub fn encode_pfm(width: usize, height: usize, values: &[f32]) -> Result<Vec<u8>, FlowIoError> {
    if values.len() != width * height {
        return Err(FlowIoError::InconsistentField);
    }
    let mut out = format!("Pf\n{width} {height}\n-1.0\n").into_bytes();
    out.reserve(values.len() * 4);
    for row in values.chunks(width.max(1)).rev() {
        for &v in row {
            out.write_f32::<LittleEndian>(v)?;
        }
    }
    Ok(out)
}

pub fn decode_pfm(bytes: &[u8]) -> Result<(usize, usize, Vec<f32>), FlowIoError> {
    let mut rdr = Cursor::new(bytes);
    let mut tokens = Vec::with_capacity(4);
    // Header is three whitespace-separated tokens plus the dims pair.
    let mut line = String::new();
    while tokens.len() < 4 {
        line.clear();
        if rdr.read_line(&mut line)? == 0 {
            return Err(FlowIoError::BadPfm("header ended early".into()));
        }
        tokens.extend(line.split_whitespace().map(str::to_owned));
    }
    if tokens.len() != 4 {
        return Err(FlowIoError::BadPfm("malformed header".into()));
    }
    if tokens[0] != "Pf" {
        return Err(FlowIoError::BadPfm(format!(
            "unsupported PFM type {:?}",
            tokens[0]
        )));
    }
    let parse = |s: &str| {
        s.parse::<usize>()
            .map_err(|_| FlowIoError::BadPfm(format!("bad dimension {s:?}")))
    };
    let (width, height) = (parse(&tokens[1])?, parse(&tokens[2])?);
    let scale: f64 = tokens[3]
        .parse()
        .map_err(|_| FlowIoError::BadPfm(format!("bad scale {:?}", tokens[3])))?;
    let n = width * height;
    let start = rdr.position() as usize;
    if bytes.len() < start + n * 4 {
        return Err(FlowIoError::TruncatedFile {
            expected: start + n * 4,
            actual: bytes.len(),
        });
    }
    let mut raw = vec![0f32; n];
    if scale < 0.0 {
        rdr.read_f32_into::<LittleEndian>(&mut raw)?;
    } else {
        rdr.read_f32_into::<byteorder::BigEndian>(&mut raw)?;
    }
    let mut values = Vec::with_capacity(n);
    for row in raw.chunks(width.max(1)).rev() {
        values.extend_from_slice(row);
    }
    Ok((width, height, values))
}

pub fn write_depth_pfm(depth: &DepthMap, path: impl AsRef<Path>) -> Result<(), FlowIoError> {
    let values: Vec<f32> = depth
        .z
        .iter()
        .zip(&depth.valid)
        .map(|(&z, &ok)| if ok { z as f32 } else { f32::NAN })
        .collect();
    write_atomic(path.as_ref(), &encode_pfm(depth.width, depth.height, &values)?)
}

/// Non-finite and non-positive samples are invalid.
pub fn read_depth_pfm(path: impl AsRef<Path>) -> Result<DepthMap, FlowIoError> {
    let mut bytes = Vec::new();
    fs::File::open(path)?.read_to_end(&mut bytes)?;
    let (w, h, values) = decode_pfm(&bytes)?;
    Ok(DepthMap::from_values(
        w,
        h,
        values.into_iter().map(f64::from).collect(),
    ))
}

pub fn read_relative_pfm(path: impl AsRef<Path>) -> Result<RelativeDepthMap, FlowIoError> {
    let d = read_depth_pfm(path)?;
    Ok(RelativeDepthMap {
        width: d.width,
        height: d.height,
        r: d.z,
        valid: d.valid,
    })
}
