//! Frame-pair selection and the line-delimited pair manifest.

use std::fs;
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::{write_atomic, FlowIoError};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PairStatus {
    Accepted,
    TooSlow,
    TooFast,
    Duplicate,
    /// Flow for the pair could not be read or computed.
    Failed,
}

/// Egomotion summary attached to processed pairs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EstimateRecord {
    pub omega: [f64; 3],
    pub t_dir: [f64; 3],
    pub objective: f64,
    pub n_inliers: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PairEntry {
    pub frame_a: PathBuf,
    pub frame_b: PathBuf,
    pub frame_gap: u32,
    pub flow_path: Option<PathBuf>,
    pub status: PairStatus,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub median_flow_px: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub outcome: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub estimate: Option<EstimateRecord>,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct PairManifest {
    pub entries: Vec<PairEntry>,
}

impl PairManifest {
    pub fn accepted(&self) -> impl Iterator<Item = (usize, &PairEntry)> {
        self.entries
            .iter()
            .enumerate()
            .filter(|(_, e)| e.status == PairStatus::Accepted)
    }

    pub fn count(&self, status: PairStatus) -> usize {
        self.entries.iter().filter(|e| e.status == status).count()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SelectionConfig {
    /// Minimum median flow magnitude in native-resolution pixels.
    pub lo_px: f64,
    pub hi_px: f64,
    /// After accepting the pair starting at frame `i`, the next pair may
    /// start no earlier than `i + dedup_gap`.
    pub dedup_gap: usize,
}

impl Default for SelectionConfig {
    fn default() -> Self {
        Self {
            lo_px: 1.0,
            hi_px: 30.0,
            dedup_gap: 3,
        }
    }
}

#[derive(Debug, thiserror::Error, PartialEq)]
pub enum SelectError {
    #[error("frame index has fewer than two frames")]
    EmptyIndex,
    #[error("{stats} flow statistics for {frames} frames (expected one per consecutive pair)")]
    StatsMismatch { frames: usize, stats: usize },
    #[error("invalid selection config: {0}")]
    InvalidConfig(&'static str),
}

impl SelectionConfig {
    pub fn validate(&self) -> Result<(), SelectError> {
        if !(self.lo_px.is_finite() && self.hi_px.is_finite() && self.lo_px >= 0.0) {
            return Err(SelectError::InvalidConfig("thresholds must be finite and non-negative"));
        }
        if self.lo_px > self.hi_px {
            return Err(SelectError::InvalidConfig("lo_px exceeds hi_px"));
        }
        if self.dedup_gap < 3 {
            return Err(SelectError::InvalidConfig("dedup_gap must be at least 3"));
        }
        Ok(())
    }
}

/// Labels each consecutive pair `(frames[i], frames[i + 1])`.
///
/// `median_px[i]` is the median valid flow magnitude of pair `i`, `None` when
/// its flow is unavailable. The motion test takes precedence: a pair is
/// only a duplicate if it would otherwise have been accepted.
pub fn select_pairs(
    frames: &[PathBuf],
    median_px: &[Option<f64>],
    cfg: &SelectionConfig,
) -> Result<PairManifest, SelectError> {
    cfg.validate()?;
    if frames.len() < 2 {
        return Err(SelectError::EmptyIndex);
    }
    if median_px.len() != frames.len() - 1 {
        return Err(SelectError::StatsMismatch {
            frames: frames.len(),
            stats: median_px.len(),
        });
    }
    let mut next_allowed = 0;
    let entries = median_px
        .iter()
        .enumerate()
        .map(|(i, m)| {
            let status = match *m {
                Some(m) if m.is_nan() => PairStatus::Failed,
                None => PairStatus::Failed,
                Some(m) if m < cfg.lo_px => PairStatus::TooSlow,
                Some(m) if m > cfg.hi_px => PairStatus::TooFast,
                Some(_) if i < next_allowed => PairStatus::Duplicate,
                Some(_) => {
                    next_allowed = i + cfg.dedup_gap;
                    PairStatus::Accepted
                }
            };
            PairEntry {
                frame_a: frames[i].clone(),
                frame_b: frames[i + 1].clone(),
                frame_gap: 1,
                flow_path: None,
                status,
                median_flow_px: m.filter(|m| m.is_finite()),
                outcome: None,
                estimate: None,
            }
        })
        .collect();
    Ok(PairManifest { entries })
}

pub fn write_pair_manifest(manifest: &PairManifest, path: impl AsRef<Path>) -> Result<(), FlowIoError> {
    let mut buf = Vec::new();
    for e in &manifest.entries {
        serde_json::to_writer(&mut buf, e)?;
        buf.write_all(b"\n")?;
    }
    write_atomic(path.as_ref(), &buf)
}

pub fn read_pair_manifest(path: impl AsRef<Path>) -> Result<PairManifest, FlowIoError> {
    let rdr = BufReader::new(fs::File::open(path)?);
    let mut entries = Vec::new();
    for line in rdr.lines() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        entries.push(serde_json::from_str(&line)?);
    }
    Ok(PairManifest { entries })
}

#[cfg(test)]
mod tests {
    use super::*;
    use PairStatus::*;

    fn frames(n: usize) -> Vec<PathBuf> {
        (0..n).map(|i| PathBuf::from(format!("f{i:03}.png"))).collect()
    }

    fn statuses(m: &PairManifest) -> Vec<PairStatus> {
        m.entries.iter().map(|e| e.status).collect()
    }

    #[test]
    fn hand_traced_example() {
        let medians = [0.2, 5.0, 5.0, 40.0].map(Some);
        let m = select_pairs(&frames(5), &medians, &SelectionConfig::default()).unwrap();
        assert_eq!(statuses(&m), vec![TooSlow, Accepted, Duplicate, TooFast]);
    }

    #[test]
    fn single_frame_is_empty_index() {
        assert_eq!(
            select_pairs(&frames(1), &[], &SelectionConfig::default()),
            Err(SelectError::EmptyIndex)
        );
    }

    #[test]
    fn ten_moderate_pairs_accept_every_third() {
        let m = select_pairs(&frames(11), &[Some(5.0); 10], &SelectionConfig::default()).unwrap();
        let accepted: Vec<_> = m.accepted().map(|(i, _)| i).collect();
        assert_eq!(accepted, vec![0, 3, 6, 9]);
        for (i, e) in m.accepted() {
            assert_eq!(e.frame_a, frames(11)[i]);
            assert_eq!(e.frame_b, frames(11)[i + 1]);
        }
    }

    #[test]
    fn failed_pairs_do_not_open_a_dedup_window() {
        let medians = [None, Some(5.0), Some(f64::NAN), Some(5.0)];
        let m = select_pairs(&frames(5), &medians, &SelectionConfig::default()).unwrap();
        assert_eq!(statuses(&m), vec![Failed, Accepted, Failed, Duplicate]);
    }

    #[test]
    fn small_gap_rejected() {
        let cfg = SelectionConfig {
            dedup_gap: 2,
            ..Default::default()
        };
        assert!(matches!(
            select_pairs(&frames(3), &[Some(2.0); 2], &cfg),
            Err(SelectError::InvalidConfig(_))
        ));
    }

    #[test]
    fn manifest_jsonl_field_names() {
        let m = select_pairs(&frames(3), &[Some(2.0), Some(0.1)], &SelectionConfig::default()).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("pairs.jsonl");
        write_pair_manifest(&m, &p).unwrap();
        let text = fs::read_to_string(&p).unwrap();
        let first: serde_json::Value = serde_json::from_str(text.lines().next().unwrap()).unwrap();
        for key in ["frame_a", "frame_b", "frame_gap", "flow_path", "status"] {
            assert!(first.get(key).is_some(), "missing {key}");
        }
        assert_eq!(first["status"], "accepted");
        assert_eq!(read_pair_manifest(&p).unwrap(), m);
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        proptest! {
            #[test]
            fn prefix_stable_and_spaced(
                medians in proptest::collection::vec(0.0f64..40.0, 1..40),
                cut in 0usize..40,
            ) {
                let cfg = SelectionConfig::default();
                let stats: Vec<_> = medians.iter().copied().map(Some).collect();
                let full = select_pairs(&frames(stats.len() + 1), &stats, &cfg).unwrap();
                prop_assert_eq!(full.entries.len(), stats.len());

                let cut = cut.min(stats.len()).max(1);
                let prefix = select_pairs(&frames(cut + 1), &stats[..cut], &cfg).unwrap();
                prop_assert_eq!(statuses(&prefix), statuses(&full)[..cut].to_vec());

                let acc: Vec<usize> = full.accepted().map(|(i, _)| i).collect();
                for w in acc.windows(2) {
                    prop_assert!(w[1] - w[0] >= cfg.dedup_gap);
                }
            }
        }
    }
}
