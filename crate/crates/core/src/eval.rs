//! Depth-map quality: pairwise ordinal agreement for relative depth and the
//! usual absolute-depth error/accuracy metrics.

use std::fmt;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::flow_io::{DepthMap, RelativeDepthMap};

pub const DEFAULT_CAP_M: f64 = 80.0;
pub const DEFAULT_MIN_M: f64 = 1e-3;
pub const DEFAULT_ORDINAL_MARGIN: f64 = 0.05;
pub const DEFAULT_ORDINAL_PAIRS: usize = 50_000;

#[derive(Debug, thiserror::Error, PartialEq)]
pub enum EvalError {
    #[error("no pixels valid in both maps")]
    EmptySupport,
    #[error("maps are {0:?} and {1:?}")]
    DimensionMismatch((usize, usize), (usize, usize)),
    #[error("no pixel pair differs by more than the ordinal margin")]
    NoComparablePairs,
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct EvalReport {
    pub abs_rel: f64,
    pub sq_rel: f64,
    pub rmse: f64,
    pub rmse_log: f64,
    pub delta1: f64,
    pub delta2: f64,
    pub delta3: f64,
    pub ordinal_agreement: Option<f64>,
    pub l1_relative: Option<f64>,
    pub n_valid: usize,
}

impl EvalReport {
    pub const COLUMNS: [&'static str; 7] = [
        "Abs Rel",
        "Sq Rel",
        "RMSE",
        "RMSE log",
        "d<1.25",
        "d<1.25^2",
        "d<1.25^3",
    ];

    fn values(&self) -> [f64; 7] {
        [
            self.abs_rel,
            self.sq_rel,
            self.rmse,
            self.rmse_log,
            self.delta1,
            self.delta2,
            self.delta3,
        ]
    }

    /// Pools per-image reports, weighting each by its pixel count.
    pub fn pooled(reports: &[EvalReport]) -> Option<EvalReport> {
        let n: usize = reports.iter().map(|r| r.n_valid).sum();
        if n == 0 {
            return None;
        }
        let w = |r: &EvalReport| r.n_valid as f64 / n as f64;
        let mean = |f: fn(&EvalReport) -> f64| reports.iter().map(|r| w(r) * f(r)).sum::<f64>();
        let opt_mean = |f: fn(&EvalReport) -> Option<f64>| {
            let vals: Vec<(f64, f64)> = reports.iter().filter_map(|r| f(r).map(|v| (w(r), v))).collect();
            let tw: f64 = vals.iter().map(|p| p.0).sum();
            (tw > 0.0).then(|| vals.iter().map(|(w, v)| w * v).sum::<f64>() / tw)
        };
        Some(EvalReport {
            abs_rel: mean(|r| r.abs_rel),
            sq_rel: mean(|r| r.sq_rel),
            // Root of the pooled mean square, not the mean of roots.
            rmse: mean(|r| r.rmse * r.rmse).sqrt(),
            rmse_log: mean(|r| r.rmse_log * r.rmse_log).sqrt(),
            delta1: mean(|r| r.delta1),
            delta2: mean(|r| r.delta2),
            delta3: mean(|r| r.delta3),
            ordinal_agreement: opt_mean(|r| r.ordinal_agreement),
            l1_relative: opt_mean(|r| r.l1_relative),
            n_valid: n,
        })
    }
}

impl fmt::Display for EvalReport {
    /// Aligned two-line table: error metrics then accuracy metrics.
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for c in Self::COLUMNS {
            write!(f, "{c:>10}")?;
        }
        writeln!(f)?;
        for v in self.values() {
            write!(f, "{v:>10.4}")?;
        }
        writeln!(f)?;
        if let Some(a) = self.ordinal_agreement {
            writeln!(f, "ordinal agreement {a:.4}")?;
        }
        if let Some(l1) = self.l1_relative {
            writeln!(f, "relative L1 {l1:.4}")?;
        }
        write!(f, "valid pixels {}", self.n_valid)
    }
}

fn check_dims(a: (usize, usize), b: (usize, usize)) -> Result<(), EvalError> {
    if a != b {
        return Err(EvalError::DimensionMismatch(a, b));
    }
    Ok(())
}

/// Error and accuracy metrics over pixels valid in both maps, after clamping
/// both to `[min_m, cap_m]`.
pub fn eigen_metrics(pred: &DepthMap, gt: &DepthMap, min_m: f64, cap_m: f64) -> Result<EvalReport, EvalError> {
    check_dims((pred.width, pred.height), (gt.width, gt.height))?;
    let pairs: Vec<(f64, f64)> = (0..gt.len())
        .filter(|&i| pred.valid[i] && gt.valid[i] && pred.z[i].is_finite() && gt.z[i].is_finite())
        .map(|i| (pred.z[i].clamp(min_m, cap_m), gt.z[i].clamp(min_m, cap_m)))
        .collect();
    if pairs.is_empty() {
        return Err(EvalError::EmptySupport);
    }
    let n = pairs.len() as f64;
    let mean = |f: &dyn Fn(f64, f64) -> f64| pairs.iter().map(|&(p, g)| f(p, g)).sum::<f64>() / n;
    let within = |k: i32| mean(&|p, g| if (p / g).max(g / p) < 1.25f64.powi(k) { 1.0 } else { 0.0 });
    Ok(EvalReport {
        abs_rel: mean(&|p, g| (p - g).abs() / g),
        sq_rel: mean(&|p, g| (p - g).powi(2) / g),
        rmse: mean(&|p, g| (p - g).powi(2)).sqrt(),
        rmse_log: mean(&|p, g| (p.ln() - g.ln()).powi(2)).sqrt(),
        delta1: within(1),
        delta2: within(2),
        delta3: within(3),
        ordinal_agreement: None,
        l1_relative: None,
        n_valid: pairs.len(),
    })
}

/// Fraction of sampled pixel pairs whose predicted order matches ground truth.
///
/// Pairs are drawn uniformly with replacement from the shared support and
/// kept only when `|g_a - g_b| > margin * g_b`. Equal predictions count as
/// disagreement.
pub fn ordinal_agreement(
    pred_rel: &RelativeDepthMap,
    gt: &DepthMap,
    n_pairs: usize,
    margin: f64,
    seed: u64,
) -> Result<f64, EvalError> {
    check_dims((pred_rel.width, pred_rel.height), (gt.width, gt.height))?;
    let support: Vec<usize> = (0..gt.len())
        .filter(|&i| pred_rel.valid[i] && gt.valid[i])
        .collect();
    if support.len() < 2 {
        return Err(EvalError::EmptySupport);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let max_draws = n_pairs.saturating_mul(100).max(1000);
    let (mut kept, mut agree, mut draws) = (0usize, 0usize, 0usize);
    while kept < n_pairs && draws < max_draws {
        draws += 1;
        let a = support[rng.random_range(0..support.len())];
        let b = support[rng.random_range(0..support.len())];
        let (ga, gb) = (gt.z[a], gt.z[b]);
        if !((ga - gb).abs() > margin * gb) {
            continue;
        }
        kept += 1;
        let dp = pred_rel.r[a] - pred_rel.r[b];
        if dp != 0.0 && (dp > 0.0) == (ga > gb) {
            agree += 1;
        }
    }
    if kept == 0 {
        return Err(EvalError::NoComparablePairs);
    }
    Ok(agree as f64 / kept as f64)
}

/// Mean absolute difference over pixels valid in both maps.
pub fn l1_relative(a: &RelativeDepthMap, b: &RelativeDepthMap) -> Result<f64, EvalError> {
    check_dims((a.width, a.height), (b.width, b.height))?;
    let diffs: Vec<f64> = (0..a.len())
        .filter(|&i| a.valid[i] && b.valid[i])
        .map(|i| (a.r[i] - b.r[i]).abs())
        .collect();
    if diffs.is_empty() {
        return Err(EvalError::EmptySupport);
    }
    Ok(diffs.iter().sum::<f64>() / diffs.len() as f64)
}
