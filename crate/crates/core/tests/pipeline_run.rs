use std::fs;
use std::path::Path;

use egodepth_core::flow_io::{read_relative_png, Intrinsics};
use egodepth_core::pipeline::{
    run_pipeline, DatasetRecord, FlowSource, PipelineConfig, PipelineError, DATASET_MANIFEST,
    PAIR_MANIFEST, RUN_SUMMARY,
};
use egodepth_core::synth::{write_sequence, CameraMotion, Primitive, SceneSpec, SequenceOptions};
use nalgebra::Vector3;

fn street(width: usize, height: usize) -> SceneSpec {
    SceneSpec {
        primitives: vec![
            Primitive::GroundPlane {
                height: 1.5,
                horizon_row: None,
            },
            Primitive::FrontoWall { z0: 25.0 },
            Primitive::Slab {
                z0: 8.0,
                rect: [10, 20, 40, 60],
            },
        ],
        intrinsics: Intrinsics::from_size(width, height),
        motion: CameraMotion {
            t_dir: Vector3::new(0.1, 0.0, 1.0).normalize(),
            speed: 1.5,
            omega: Vector3::new(0.0, -0.01, 0.0),
        },
    }
}

fn synth_sequence(dir: &Path, frames: usize) {
    write_sequence(&street(96, 64), &SequenceOptions { frames, seed: 3 }, dir).unwrap();
}

#[test]
fn external_flow_run_writes_labels_and_manifests() {
    let tmp = tempfile::tempdir().unwrap();
    let seq = tmp.path().join("seq");
    synth_sequence(&seq, 5);
    let mut cfg = PipelineConfig::new(seq.join("frames"), tmp.path().join("out"));
    cfg.flow_dir = Some(seq.join("flow"));
    let summary = run_pipeline(&cfg).unwrap();

    assert_eq!(summary.counts.pairs, 4);
    assert_eq!(summary.counts.accepted, 2);
    assert_eq!(summary.counts.labeled, 2);
    assert_eq!(summary.records.len(), 2);
    for name in [PAIR_MANIFEST, DATASET_MANIFEST, RUN_SUMMARY] {
        assert!(cfg.output_dir.join(name).is_file(), "{name}");
    }
    let pairs = fs::read_to_string(cfg.output_dir.join(PAIR_MANIFEST)).unwrap();
    assert_eq!(pairs.lines().count(), 4);

    let dataset = fs::read_to_string(cfg.output_dir.join(DATASET_MANIFEST)).unwrap();
    let records: Vec<DatasetRecord> = dataset.lines().map(|l| serde_json::from_str(l).unwrap()).collect();
    assert_eq!(records.len(), 2);
    for r in &records {
        let depth = read_relative_png(cfg.output_dir.join(&r.relative_depth_path)).unwrap();
        assert_eq!((depth.width, depth.height), (96, 64));
        assert!(depth.r.iter().zip(&depth.valid).filter(|(_, &v)| v).all(|(&x, _)| (0.0..=1.0).contains(&x)));
        assert!(cfg.output_dir.join(&r.image_path).is_file());
        let t = Vector3::from(r.t_dir);
        assert!(t.normalize().dot(&street(96, 64).motion.t_dir) > 0.9999);
    }
}

#[test]
fn rerun_is_byte_identical() {
    let tmp = tempfile::tempdir().unwrap();
    let seq = tmp.path().join("seq");
    synth_sequence(&seq, 4);
    let mut bytes = Vec::new();
    for run in 0..2 {
        let mut cfg = PipelineConfig::new(seq.join("frames"), tmp.path().join(format!("out{run}")));
        cfg.flow_dir = Some(seq.join("flow"));
        run_pipeline(&cfg).unwrap();
        bytes.push(fs::read(cfg.output_dir.join(DATASET_MANIFEST)).unwrap());
    }
    assert_eq!(bytes[0], bytes[1]);
}

#[test]
fn baseline_flow_run_completes() {
    let tmp = tempfile::tempdir().unwrap();
    let seq = tmp.path().join("seq");
    synth_sequence(&seq, 3);
    let mut cfg = PipelineConfig::new(seq.join("frames"), tmp.path().join("out"));
    cfg.flow_source = FlowSource::Baseline;
    let summary = run_pipeline(&cfg).unwrap();
    assert_eq!(summary.counts.pairs, 2);
    assert!(cfg.output_dir.join(PAIR_MANIFEST).is_file());
}

#[test]
fn empty_input_is_reported() {
    let tmp = tempfile::tempdir().unwrap();
    let input = tmp.path().join("empty");
    fs::create_dir_all(&input).unwrap();
    let cfg = PipelineConfig::new(&input, tmp.path().join("out"));
    assert!(matches!(run_pipeline(&cfg), Err(PipelineError::InputEmpty(_))));
}

#[test]
fn invalid_config_is_reported() {
    let tmp = tempfile::tempdir().unwrap();
    let mut cfg = PipelineConfig::new(tmp.path(), tmp.path().join("out"));
    cfg.worker_count = 0;
    assert!(matches!(run_pipeline(&cfg), Err(PipelineError::ConfigInvalid(_))));
}
