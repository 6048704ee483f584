//! Detection and convergence metrics: empirical thresholds, ROC/AUC, T*.

use std::io::Write;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::consensus::ConvergenceTrace;

#[derive(Debug, Error, PartialEq)]
pub enum MetricsError {
    #[error("{0} score set is empty")]
    Empty(&'static str),
    #[error("false-alarm level must lie in (0, 1), got {0}")]
    InvalidLevel(f64),
    #[error("non-finite score {0}")]
    NonFinite(f64),
}

/// Default absolute band used when the convergence target is exactly zero.
pub const DEFAULT_ATOL: f64 = 1e-3;

/// Smallest empirical threshold `t` with `#{s > t} / n ≤ delta`: the
/// `⌈(1 − δ)n⌉`-th smallest H0 score.
pub fn calibrate_threshold(h0_scores: &[f64], delta: f64) -> Result<f64, MetricsError> {
    if h0_scores.is_empty() {
        return Err(MetricsError::Empty("h0"));
    }
    if !(delta > 0.0 && delta < 1.0) {
        return Err(MetricsError::InvalidLevel(delta));
    }
    let mut sorted = h0_scores.to_vec();
    sorted.sort_by(f64::total_cmp);
    let n = sorted.len();
    // ⌈(1−δ)n⌉ = n − ⌊δn⌋; the epsilon absorbs representation error in δn.
    let allowed = ((delta * n as f64) + 1e-9).floor() as usize;
    let rank = (n - allowed.min(n)).max(1);
    Ok(sorted[rank - 1])
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RocPoint {
    pub pfa: f64,
    pub pd: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RocCurve {
    /// Ordered by non-decreasing `pfa`, from (0, 0) to (1, 1).
    pub points: Vec<RocPoint>,
    pub auc: f64,
    pub n_h0: usize,
    pub n_h1: usize,
}

impl RocCurve {
    /// Minimum error probability under equal priors over the operating points.
    pub fn min_error_probability(&self) -> f64 {
        self.points
            .iter()
            .map(|p| 0.5 * p.pfa + 0.5 * (1.0 - p.pd))
            .fold(1.0, f64::min)
    }

    /// `pfa,pd` rows followed by a `# auc=<value>` comment line.
    pub fn write_csv<W: Write>(&self, writer: W) -> std::io::Result<()> {
        let mut out = csv::Writer::from_writer(writer);
        out.write_record(["pfa", "pd"])?;
        for p in &self.points {
            out.write_record([p.pfa.to_string(), p.pd.to_string()])?;
        }
        out.flush()?;
        let mut inner = out.into_inner().map_err(|e| e.into_error())?;
        writeln!(inner, "# auc={}", self.auc)?;
        Ok(())
    }
}

fn check_scores(scores: &[f64], label: &'static str) -> Result<(), MetricsError> {
    if scores.is_empty() {
        return Err(MetricsError::Empty(label));
    }
    if let Some(&bad) = scores.iter().find(|s| !s.is_finite()) {
        return Err(MetricsError::NonFinite(bad));
    }
    Ok(())
}

/// Empirical ROC from scores where larger means "source present".
///
/// Sweeps the threshold over the pooled distinct scores from the top down.
/// Tied H0/H1 scores produce a diagonal segment, so the trapezoid AUC equals
/// the Mann–Whitney statistic with half credit for ties.
pub fn empirical_roc(h0_scores: &[f64], h1_scores: &[f64]) -> Result<RocCurve, MetricsError> {
    check_scores(h0_scores, "h0")?;
    check_scores(h1_scores, "h1")?;
    let mut pooled: Vec<(f64, bool)> = h0_scores
        .iter()
        .map(|&s| (s, false))
        .chain(h1_scores.iter().map(|&s| (s, true)))
        .collect();
    pooled.sort_by(|a, b| b.0.total_cmp(&a.0));

    let n0 = h0_scores.len() as f64;
    let n1 = h1_scores.len() as f64;
    let mut points = vec![RocPoint { pfa: 0.0, pd: 0.0 }];
    let (mut false_alarms, mut detections) = (0usize, 0usize);
    let mut auc = 0.0;
    let mut idx = 0;
    while idx < pooled.len() {
        let value = pooled[idx].0;
        while idx < pooled.len() && pooled[idx].0 == value {
            if pooled[idx].1 {
                detections += 1;
            } else {
                false_alarms += 1;
            }
            idx += 1;
        }
        let prev = *points.last().expect("non-empty");
        let next = RocPoint {
            pfa: false_alarms as f64 / n0,
            pd: detections as f64 / n1,
        };
        auc += (next.pfa - prev.pfa) * (next.pd + prev.pd) / 2.0;
        points.push(next);
    }
    Ok(RocCurve {
        points,
        auc,
        n_h0: h0_scores.len(),
        n_h1: h1_scores.len(),
    })
}

/// First iteration from which every honest node stays within
/// `(1 − fraction)·|target|` of `target` through the end of the trace.
/// A zero target uses the absolute band `atol` instead.
pub fn iterations_to_within(
    trace: &ConvergenceTrace,
    target: f64,
    fraction: f64,
    atol: f64,
) -> Option<usize> {
    let band = if target == 0.0 {
        atol
    } else {
        (1.0 - fraction) * target.abs()
    };
    let mut first_ok = None;
    for k in (0..trace.states.len()).rev() {
        if trace.max_honest_deviation(k, target) <= band {
            first_ok = Some(k);
        } else {
            break;
        }
    }
    first_ok
}

/// `T*/N`.
pub fn relative_convergence_rate(t_star: Option<usize>, n_nodes: usize) -> Option<f64> {
    assert!(n_nodes >= 1, "relative rate needs at least one node");
    t_star.map(|t| t as f64 / n_nodes as f64)
}
