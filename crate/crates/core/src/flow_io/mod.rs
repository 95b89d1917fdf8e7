//! On-disk artifacts and the grid types shared by every stage.

mod depth_out;
mod field;
mod flo;
mod pairs;

use std::fs;
use std::io::Write;
use std::path::Path;

pub use depth_out::{
    decode_pfm, dequantize_relative, encode_pfm, quantize_relative, read_depth_pfm,
    read_relative_pfm, read_relative_png, with_suffix, write_depth_outputs, write_depth_pfm,
};
pub use field::{DepthMap, Intrinsics, MotionField, RelativeDepthMap};
pub(crate) use field::median_in_place;
pub use flo::{
    decode_flo, encode_flo, read_flo_dimensions, read_flow_file, write_flow_file, FLO_MAGIC,
    UNKNOWN_FLOW, UNKNOWN_FLOW_THRESHOLD,
};
pub use pairs::{
    read_pair_manifest, select_pairs, write_pair_manifest, EstimateRecord, PairEntry,
    PairManifest, PairStatus, SelectError, SelectionConfig,
};

#[derive(Debug, thiserror::Error)]
pub enum FlowIoError {
    #[error("bad .flo magic {0} (expected 202021.25)")]
    BadMagic(f32),
    #[error("truncated file: need {expected} bytes, found {actual}")]
    TruncatedFile { expected: usize, actual: usize },
    #[error("dimensions {width}x{height} exceed 65536 per side")]
    DimensionOverflow { width: i64, height: i64 },
    #[error("non-positive dimensions {width}x{height}")]
    InvalidDimensions { width: i64, height: i64 },
    #[error("field buffers do not match its dimensions")]
    InconsistentField,
    #[error("malformed PFM: {0}")]
    BadPfm(String),
    #[error(transparent)]
    Image(#[from] image::ImageError),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
    #[error("i/o failure: {0}")]
    Io(#[from] std::io::Error),
}

/// Writes to a hidden sibling and renames it over `path`, so concurrent
/// readers never see a partial file.
pub(crate) fn write_atomic(path: &Path, bytes: &[u8]) -> Result<(), FlowIoError> {
    let name = path
        .file_name()
        .ok_or_else(|| std::io::Error::other(format!("no file name in {}", path.display())))?;
    let mut tmp_name = std::ffi::OsString::from(".");
    tmp_name.push(name);
    tmp_name.push(".tmp");
    let tmp = path.with_file_name(tmp_name);
    {
        let mut f = fs::File::create(&tmp)?;
        f.write_all(bytes)?;
    }
    fs::rename(&tmp, path)?;
    Ok(())
}
