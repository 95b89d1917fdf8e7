//! Batch labeling: frames and flow in, relative-depth labels and manifests out.

mod config;
mod run;

pub use config::{ConfigOverrides, FlowSource, IntrinsicsOverride, PipelineConfig, Preset};
pub use run::{
    list_frames, make_dataset_manifest, run_pipeline, DatasetRecord, RunCounts, RunSummary,
    DATASET_MANIFEST, PAIR_MANIFEST, RUN_SUMMARY,
};

use crate::flow_io::FlowIoError;

#[derive(Debug, thiserror::Error)]
pub enum PipelineError {
    #[error("invalid configuration: {0}")]
    ConfigInvalid(String),
    #[error("no usable input: {0}")]
    InputEmpty(String),
    #[error(transparent)]
    Output(#[from] FlowIoError),
}

impl From<std::io::Error> for PipelineError {
    fn from(e: std::io::Error) -> Self {
        PipelineError::Output(FlowIoError::Io(e))
    }
}
