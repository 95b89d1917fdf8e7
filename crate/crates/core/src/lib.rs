//! Self-supervised relative depth labels from egomotion video.
//!
//! A frame pair's optical flow is decomposed into a rotational part and a
//! translational part by fitting the camera rotation so that the remaining
//! flow is radial about the focus of expansion. Depth is then recovered (up
//! to the unknown speed) from the translational flow magnitude and turned into
//! per-pixel depth percentiles, which do not depend on that unknown scale.
//!
//! Module map:
//!
//! * [`flow_io`]: field types, `.flo`/PFM/PNG artifacts and frame-pair selection
//! * [`synth`]: closed-form scenes that render exact depth and motion fields
//! * [`baseline_flow`]: coarse-to-fine variational flow for raw frames
//! * [`egomotion`]: rotation and translation-direction estimation
//! * [`depth`]: depth recovery and percentile conversion
//! * [`eval`]: ordinal agreement and absolute-depth error metrics
//! * [`pipeline`]: configuration, presets and the batch driver

pub mod baseline_flow;
pub mod depth;
pub mod egomotion;
pub mod eval;
pub mod flow_io;
pub mod imageops;
pub mod pipeline;
pub mod synth;

pub use depth::{recover_depth, to_relative, DepthError};
pub use egomotion::{
    estimate_rotation, estimate_translation_direction, rotational_field, EgomotionConfig,
    EgomotionError, EgomotionEstimate,
};
pub use flow_io::{DepthMap, Intrinsics, MotionField, RelativeDepthMap};
pub use synth::{CameraMotion, Primitive, SceneSpec};
