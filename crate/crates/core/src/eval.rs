//! Absolute pose error: timestamp association, rigid alignment, and the
//! Max/Mean/Min/RMSE/SSE/STD summary.
//!
//! Errors are translational distances in meters. STD is the population
//! standard deviation, so `rmse^2 = mean^2 + std^2` and `sse = n * rmse^2`.

use std::fmt::Write as _;

use nalgebra::{Matrix3, Vector3};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geometry::{FrameId, Pose};
use crate::trajectory::Trajectory;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum EvalError {
    #[error("association failure: no timestamp pairs within {max_dt} s")]
    EmptyAssociation { max_dt: f64 },
    #[error("max_dt must be positive, got {0}")]
    InvalidMaxDt(f64),
    #[error("degenerate alignment: {0}")]
    DegenerateAlignment(&'static str),
    #[error("no error samples")]
    NoSamples,
    #[error("baseline must be positive, got {0}")]
    NonPositiveBaseline(f64),
    #[error("rmse must be positive")]
    ZeroRmse,
}

pub const DEFAULT_MAX_DT: f64 = 0.02;

/// Greedy nearest-timestamp matching.
///
/// All candidate pairs within `max_dt` are visited in order of increasing
/// `|dt|` (ties by index) and accepted when both samples are still free.
/// The result is sorted by estimate index.
pub fn associate(est: &Trajectory, gt: &Trajectory, max_dt: f64) -> Result<Vec<(usize, usize)>, EvalError> {
    if !(max_dt > 0.0) {
        return Err(EvalError::InvalidMaxDt(max_dt));
    }
    let gt_t: Vec<f64> = gt.stamps().collect();
    let mut candidates = Vec::new();
    for (i, t) in est.stamps().enumerate() {
        let start = gt_t.partition_point(|g| *g < t - max_dt);
        for (j, g) in gt_t.iter().enumerate().skip(start) {
            if *g > t + max_dt {
                break;
            }
            candidates.push(((g - t).abs(), i, j));
        }
    }
    candidates.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)).then(a.2.cmp(&b.2)));
    let mut est_used = vec![false; est.len()];
    let mut gt_used = vec![false; gt.len()];
    let mut pairs = Vec::new();
    for (_, i, j) in candidates {
        if !est_used[i] && !gt_used[j] {
            est_used[i] = true;
            gt_used[j] = true;
            pairs.push((i, j));
        }
    }
    if pairs.is_empty() {
        return Err(EvalError::EmptyAssociation { max_dt });
    }
    pairs.sort_unstable();
    Ok(pairs)
}

/// Similarity taking estimate positions onto ground truth:
/// `gt ~ scale * R * est + t`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Alignment {
    /// World-to-world rigid part.
    pub transform: Pose,
    pub scale: f64,
}

impl Alignment {
    pub fn identity() -> Self {
        Self { transform: Pose::identity(FrameId::World, FrameId::World), scale: 1.0 }
    }

    pub fn apply(&self, p: &Vector3<f64>) -> Vector3<f64> {
        self.transform.rotation() * (p * self.scale) + self.transform.translation()
    }
}

fn paired_positions(
    est: &Trajectory,
    gt: &Trajectory,
    pairs: &[(usize, usize)],
) -> (Vec<Vector3<f64>>, Vec<Vector3<f64>>) {
    pairs.iter().map(|&(i, j)| (est.samples()[i].pose.translation(), gt.samples()[j].pose.translation())).unzip()
}

/// Closed-form least-squares alignment of paired positions. Scale stays 1
/// unless `with_scale` is set.
pub fn align_umeyama(
    est: &Trajectory,
    gt: &Trajectory,
    pairs: &[(usize, usize)],
    with_scale: bool,
) -> Result<Alignment, EvalError> {
    let (src, dst) = paired_positions(est, gt, pairs);
    align_points(&src, &dst, with_scale)
}

pub fn align_points(src: &[Vector3<f64>], dst: &[Vector3<f64>], with_scale: bool) -> Result<Alignment, EvalError> {
    if src.len() < 3 {
        return Err(EvalError::DegenerateAlignment("fewer than 3 correspondences"));
    }
    let n = src.len() as f64;
    let mu_s = src.iter().sum::<Vector3<f64>>() / n;
    let mu_d = dst.iter().sum::<Vector3<f64>>() / n;
    let mut cov = Matrix3::zeros();
    let mut scatter = Matrix3::zeros();
    let mut var_s = 0.0;
    for (s, d) in src.iter().zip(dst) {
        let (cs, cd) = (s - mu_s, d - mu_d);
        cov += cd * cs.transpose();
        scatter += cs * cs.transpose();
        var_s += cs.norm_squared();
    }
    cov /= n;
    var_s /= n;

    let mut eig = scatter.symmetric_eigenvalues().as_slice().to_vec();
    eig.sort_by(|a, b| b.total_cmp(a));
    if eig[0] <= 1e-18 {
        return Err(EvalError::DegenerateAlignment("coincident points"));
    }
    if eig[1] <= 1e-12 * eig[0] {
        return Err(EvalError::DegenerateAlignment("collinear points"));
    }

    let svd = cov.svd(true, true);
    let u = svd.u.expect("requested");
    let v_t = svd.v_t.expect("requested");
    let mut s = Matrix3::identity();
    if (u.determinant() * v_t.determinant()) < 0.0 {
        s[(2, 2)] = -1.0;
    }
    let rot = u * s * v_t;
    let scale = if with_scale { (Matrix3::from_diagonal(&svd.singular_values) * s).trace() / var_s } else { 1.0 };
    let translation = mu_d - rot * mu_s * scale;
    let q = nalgebra::UnitQuaternion::from_matrix(&rot);
    Ok(Alignment { transform: Pose::new(q, translation, FrameId::World, FrameId::World), scale })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ApeStats {
    pub max: f64,
    pub mean: f64,
    pub min: f64,
    pub rmse: f64,
    pub sse: f64,
    pub std: f64,
    pub count: usize,
}

impl ApeStats {
    pub fn from_errors(errors: &[f64]) -> Result<Self, EvalError> {
        if errors.is_empty() {
            return Err(EvalError::NoSamples);
        }
        let n = errors.len() as f64;
        let mean = errors.iter().sum::<f64>() / n;
        let sse = errors.iter().map(|e| e * e).sum::<f64>();
        let rmse = (sse / n).sqrt();
        let std = (errors.iter().map(|e| (e - mean).powi(2)).sum::<f64>() / n).sqrt();
        let min = errors.iter().copied().fold(f64::INFINITY, f64::min);
        let max = errors.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        Ok(Self { max, mean, min, rmse, sse, std, count: errors.len() })
    }
}

/// Per-pair translational errors `(gt stamp, error)` after optional rigid
/// alignment.
pub fn ape_errors(
    est: &Trajectory,
    gt: &Trajectory,
    pairs: &[(usize, usize)],
    aligned: bool,
) -> Result<(Vec<(f64, f64)>, Alignment), EvalError> {
    if pairs.is_empty() {
        return Err(EvalError::NoSamples);
    }
    let alignment = if aligned { align_umeyama(est, gt, pairs, false)? } else { Alignment::identity() };
    let errors = pairs
        .iter()
        .map(|&(i, j)| {
            let e = alignment.apply(&est.samples()[i].pose.translation());
            let g = &gt.samples()[j];
            (g.t, (g.pose.translation() - e).norm())
        })
        .collect();
    Ok((errors, alignment))
}

pub fn ape_stats(
    est: &Trajectory,
    gt: &Trajectory,
    pairs: &[(usize, usize)],
    aligned: bool,
) -> Result<ApeStats, EvalError> {
    let (errors, _) = ape_errors(est, gt, pairs, aligned)?;
    let values: Vec<f64> = errors.iter().map(|e| e.1).collect();
    ApeStats::from_errors(&values)
}

#[derive(Debug, Clone)]
pub struct Evaluation {
    pub stats: ApeStats,
    pub per_frame: Vec<(f64, f64)>,
    pub pairs: Vec<(usize, usize)>,
    pub alignment: Alignment,
}

/// Association, alignment, and statistics in one call.
pub fn evaluate(est: &Trajectory, gt: &Trajectory, max_dt: f64, aligned: bool) -> Result<Evaluation, EvalError> {
    let pairs = associate(est, gt, max_dt)?;
    let (per_frame, alignment) = ape_errors(est, gt, &pairs, aligned)?;
    let values: Vec<f64> = per_frame.iter().map(|e| e.1).collect();
    Ok(Evaluation { stats: ApeStats::from_errors(&values)?, per_frame, pairs, alignment })
}

/// Relative improvement of `ours` over `baseline`, in percent.
pub fn improvement_percent(ours: f64, baseline: f64) -> Result<f64, EvalError> {
    if !(baseline > 0.0) {
        return Err(EvalError::NonPositiveBaseline(baseline));
    }
    Ok(100.0 * (baseline - ours) / baseline)
}

/// Rounds half-up (towards +inf) at the given number of decimals.
pub fn round_half_up(value: f64, decimals: u32) -> f64 {
    let k = 10f64.powi(decimals as i32);
    // Absorb representation error so 12.205 rounds as written.
    ((value * k) + 0.5 + 1e-9).floor() / k
}

/// Number of samples implied by a summary, `sse / rmse^2`, rounded.
pub fn implied_sample_count(stats: &ApeStats) -> Result<u64, EvalError> {
    if !(stats.rmse > 0.0) {
        return Err(EvalError::ZeroRmse);
    }
    Ok((stats.sse / (stats.rmse * stats.rmse)).round() as u64)
}

/// Unweighted column means across sequences.
pub fn column_means(rows: &[ApeStats]) -> Option<ApeStats> {
    if rows.is_empty() {
        return None;
    }
    let n = rows.len() as f64;
    let avg = |f: fn(&ApeStats) -> f64| rows.iter().map(f).sum::<f64>() / n;
    Some(ApeStats {
        max: avg(|s| s.max),
        mean: avg(|s| s.mean),
        min: avg(|s| s.min),
        rmse: avg(|s| s.rmse),
        sse: avg(|s| s.sse),
        std: avg(|s| s.std),
        count: rows.iter().map(|s| s.count).sum::<usize>() / rows.len(),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TableFormat {
    Text,
    Csv,
    Json,
}

/// Metrics table with one row per sequence.
pub fn format_table(rows: &[(String, ApeStats)], format: TableFormat) -> String {
    let mut out = String::new();
    match format {
        TableFormat::Text => {
            let _ = writeln!(
                out,
                "{:<16} {:>9} {:>9} {:>9} {:>9} {:>11} {:>9}",
                "Sequence", "Max", "Mean", "Min", "RMSE", "SSE", "STD"
            );
            for (name, s) in rows {
                let _ = writeln!(
                    out,
                    "{:<16} {:>9.4} {:>9.4} {:>9.4} {:>9.4} {:>11.4} {:>9.4}",
                    name, s.max, s.mean, s.min, s.rmse, s.sse, s.std
                );
            }
        }
        TableFormat::Csv => {
            out.push_str("sequence,max,mean,min,rmse,sse,std,count\n");
            for (name, s) in rows {
                let _ =
                    writeln!(out, "{},{},{},{},{},{},{},{}", name, s.max, s.mean, s.min, s.rmse, s.sse, s.std, s.count);
            }
        }
        TableFormat::Json => {
            #[derive(Serialize)]
            struct Row<'a> {
                sequence: &'a str,
                #[serde(flatten)]
                stats: &'a ApeStats,
            }
            let rows: Vec<_> = rows.iter().map(|(n, s)| Row { sequence: n, stats: s }).collect();
            out = serde_json::to_string_pretty(&rows).expect("rows serialize");
            out.push('\n');
        }
    }
    out
}
