//! Pose and reconstruction error metrics and their dataset-level summaries.

use std::collections::BTreeMap;

use nalgebra::{Matrix3, Vector3};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::RigidTransform;
use crate::par;

pub const ROTATION_THRESHOLDS_DEG: [f64; 3] = [5.0, 10.0, 45.0];
pub const TRANSLATION_THRESHOLDS_CM: [f64; 3] = [5.0, 10.0, 25.0];
pub const CHAMFER_THRESHOLDS_CM: [f64; 3] = [1.0, 5.0, 10.0];
pub const DEFAULT_CHAMFER_MAX_POINTS: usize = 20_000;

const ACOS_WARN_TOL: f64 = 1e-9;

/// Angle of `r_pred * r_gtᵀ` in degrees.
pub fn rotation_error(r_pred: &Matrix3<f64>, r_gt: &Matrix3<f64>) -> f64 {
    let arg = ((r_pred * r_gt.transpose()).trace() - 1.0) / 2.0;
    if arg.abs() > 1.0 + ACOS_WARN_TOL {
        log::warn!("rotation error: arccos argument {arg} outside [-1, 1]; inputs may not be rotations");
    }
    arg.clamp(-1.0, 1.0).acos().to_degrees()
}

/// Euclidean distance in centimeters between translations given in meters.
pub fn translation_error(t_pred: &Vector3<f64>, t_gt: &Vector3<f64>) -> f64 {
    (t_pred - t_gt).norm() * 100.0
}

fn mean_nearest_distance(from: &[Vector3<f64>], to: &[Vector3<f64>]) -> f64 {
    // Coordinates split per axis and scanned in lanes so the loop vectorizes;
    // the minimum does not depend on scan order.
    const LANES: usize = 4;
    let padded = to.len().div_ceil(LANES) * LANES;
    let axis = |a: usize| {
        let mut v: Vec<f64> = to.iter().map(|p| p[a]).collect();
        v.resize(padded, f64::INFINITY);
        v
    };
    let (xs, ys, zs) = (axis(0), axis(1), axis(2));
    let nearest = par::map_slice(from, |a| {
        let mut best = [f64::INFINITY; LANES];
        for ((x, y), z) in xs
            .chunks_exact(LANES)
            .zip(ys.chunks_exact(LANES))
            .zip(zs.chunks_exact(LANES))
        {
            for l in 0..LANES {
                let (dx, dy, dz) = (a.x - x[l], a.y - y[l], a.z - z[l]);
                let d = dx * dx + dy * dy + dz * dz;
                best[l] = if d < best[l] { d } else { best[l] };
            }
        }
        best.iter().fold(f64::INFINITY, |m, d| m.min(*d)).sqrt()
    });
    nearest.iter().sum::<f64>() / from.len() as f64
}

/// Symmetric mean nearest-neighbor distance, in centimeters for inputs in
/// meters. Exhaustive search.
pub fn chamfer_error(p: &[Vector3<f64>], q: &[Vector3<f64>]) -> Result<f64> {
    if p.is_empty() || q.is_empty() {
        return Err(Error::Empty("chamfer point cloud"));
    }
    Ok((mean_nearest_distance(p, q) + mean_nearest_distance(q, p)) * 100.0)
}

/// Chamfer error between the scene assembled with the ground-truth pose and
/// with the predicted one: `gt(cloud0) ∪ cloud1` versus `pred(cloud0) ∪
/// cloud1`, both in frame-1 coordinates. When the union exceeds
/// `max_points`, the same seeded uniform subset of indices is taken from both.
pub fn reconstruction_chamfer(
    cloud0: &[Vector3<f64>],
    cloud1: &[Vector3<f64>],
    predicted: &RigidTransform,
    ground_truth: &RigidTransform,
    max_points: usize,
    seed: u64,
) -> Result<f64> {
    let assemble = |t: &RigidTransform| -> Vec<Vector3<f64>> {
        cloud0
            .iter()
            .map(|x| t.apply(x))
            .chain(cloud1.iter().copied())
            .collect()
    };
    let mut reference = assemble(ground_truth);
    let mut reconstruction = assemble(predicted);
    if reference.len() > max_points {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut idx = rand::seq::index::sample(&mut rng, reference.len(), max_points).into_vec();
        idx.sort_unstable();
        reference = idx.iter().map(|i| reference[*i]).collect();
        reconstruction = idx.iter().map(|i| reconstruction[*i]).collect();
    }
    chamfer_error(&reference, &reconstruction)
}

fn accuracy_key(metric: &str, threshold: f64) -> String {
    format!("{metric}_{threshold}")
}

/// Per-pair errors (degrees and centimeters), threshold hits, and stage timings.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegistrationReport {
    pub rot_err_deg: f64,
    pub trans_err_cm: f64,
    pub chamfer_cm: f64,
    /// `rot_5`, `trans_10`, `chamfer_1`, ...: error strictly below the threshold.
    pub acc: BTreeMap<String, bool>,
    pub time_ms: BTreeMap<String, f64>,
}

impl RegistrationReport {
    pub fn new(rot_err_deg: f64, trans_err_cm: f64, chamfer_cm: f64) -> Self {
        let mut acc = BTreeMap::new();
        for t in ROTATION_THRESHOLDS_DEG {
            acc.insert(accuracy_key("rot", t), rot_err_deg < t);
        }
        for t in TRANSLATION_THRESHOLDS_CM {
            acc.insert(accuracy_key("trans", t), trans_err_cm < t);
        }
        for t in CHAMFER_THRESHOLDS_CM {
            acc.insert(accuracy_key("chamfer", t), chamfer_cm < t);
        }
        Self {
            rot_err_deg,
            trans_err_cm,
            chamfer_cm,
            acc,
            time_ms: BTreeMap::new(),
        }
    }

    /// Rotation and translation errors of `predicted` against `ground_truth`,
    /// with a precomputed chamfer error.
    pub fn from_poses(predicted: &RigidTransform, ground_truth: &RigidTransform, chamfer_cm: f64) -> Self {
        Self::new(
            rotation_error(predicted.rotation(), ground_truth.rotation()),
            translation_error(predicted.translation(), ground_truth.translation()),
            chamfer_cm,
        )
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricSummary {
    pub mean: f64,
    pub median: f64,
    /// Fraction of pairs strictly below each threshold, keyed by threshold.
    pub accuracy: BTreeMap<String, f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SummaryTable {
    pub pairs: usize,
    pub rotation_deg: MetricSummary,
    pub translation_cm: MetricSummary,
    pub chamfer_cm: MetricSummary,
}

pub fn median(values: &[f64]) -> f64 {
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n == 0 {
        f64::NAN
    } else if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}

pub fn mean(values: &[f64]) -> f64 {
    values.iter().sum::<f64>() / values.len() as f64
}

fn summarize(values: &[f64], thresholds: &[f64]) -> MetricSummary {
    let accuracy = thresholds
        .iter()
        .map(|t| {
            let hits = values.iter().filter(|v| **v < *t).count();
            (format!("{t}"), hits as f64 / values.len() as f64)
        })
        .collect();
    MetricSummary {
        mean: mean(values),
        median: median(values),
        accuracy,
    }
}

pub fn aggregate(reports: &[RegistrationReport]) -> Result<SummaryTable> {
    if reports.is_empty() {
        return Err(Error::Empty("report list"));
    }
    let column = |f: fn(&RegistrationReport) -> f64| reports.iter().map(f).collect::<Vec<_>>();
    Ok(SummaryTable {
        pairs: reports.len(),
        rotation_deg: summarize(&column(|r| r.rot_err_deg), &ROTATION_THRESHOLDS_DEG),
        translation_cm: summarize(&column(|r| r.trans_err_cm), &TRANSLATION_THRESHOLDS_CM),
        chamfer_cm: summarize(&column(|r| r.chamfer_cm), &CHAMFER_THRESHOLDS_CM),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rotation_error_examples() {
        let id = Matrix3::identity();
        assert_eq!(rotation_error(&id, &id), 0.0);
        let flip = RigidTransform::from_axis_angle(Vector3::z(), std::f64::consts::PI, Vector3::zeros());
        assert!((rotation_error(flip.rotation(), &id) - 180.0).abs() < 1e-12);
    }

    #[test]
    fn translation_error_is_in_centimeters() {
        let e = translation_error(&Vector3::new(1.03, 2.04, 3.0), &Vector3::new(1.0, 2.0, 3.0));
        assert!((e - 5.0).abs() < 1e-12);
        assert_eq!(translation_error(&Vector3::zeros(), &Vector3::zeros()), 0.0);
    }

    #[test]
    fn chamfer_examples() {
        let a = vec![Vector3::new(0.1, 0.2, 0.3), Vector3::new(1.0, 0.0, 2.0)];
        assert_eq!(chamfer_error(&a, &a).unwrap(), 0.0);
        assert!(chamfer_error(&a, &[]).is_err());
    }

    #[test]
    fn aggregate_two_reports() {
        let reports = vec![
            RegistrationReport::new(2.0, 1.0, 0.5),
            RegistrationReport::new(8.0, 30.0, 6.0),
        ];
        let s = aggregate(&reports).unwrap();
        assert_eq!(s.rotation_deg.mean, 5.0);
        assert_eq!(s.rotation_deg.median, 5.0);
        assert_eq!(s.rotation_deg.accuracy["5"], 0.5);
        assert_eq!(s.rotation_deg.accuracy["10"], 1.0);
        assert_eq!(s.translation_cm.accuracy["25"], 0.5);
        assert_eq!(s.chamfer_cm.accuracy["1"], 0.5);
        assert_eq!(s.chamfer_cm.accuracy["10"], 1.0);
    }

    #[test]
    fn single_report_summary() {
        let s = aggregate(&[RegistrationReport::new(3.0, 4.0, 0.2)]).unwrap();
        assert_eq!((s.rotation_deg.mean, s.rotation_deg.median), (3.0, 3.0));
        assert_eq!((s.translation_cm.mean, s.translation_cm.median), (4.0, 4.0));
        assert_eq!((s.chamfer_cm.mean, s.chamfer_cm.median), (0.2, 0.2));
        assert!(aggregate(&[]).is_err());
    }

    #[test]
    fn threshold_columns() {
        let r = RegistrationReport::new(7.0, 7.0, 7.0);
        let keys: Vec<_> = r.acc.keys().cloned().collect();
        for k in ["rot_5", "rot_10", "rot_45", "trans_5", "trans_10", "trans_25", "chamfer_1", "chamfer_5", "chamfer_10"] {
            assert!(keys.contains(&k.to_string()), "{k}");
        }
        assert!(!r.acc["rot_5"] && r.acc["rot_10"]);
    }

    #[test]
    fn json_keys() {
        let json = serde_json::to_value(RegistrationReport::new(1.0, 2.0, 3.0)).unwrap();
        for key in ["rot_err_deg", "trans_err_cm", "chamfer_cm", "acc", "time_ms"] {
            assert!(json.get(key).is_some(), "{key}");
        }
    }

    #[test]
    fn reconstruction_chamfer_is_zero_at_truth() {
        let c0: Vec<_> = (0..50).map(|i| Vector3::new(i as f64 * 0.1, (i % 7) as f64, 2.0)).collect();
        let c1: Vec<_> = (0..40).map(|i| Vector3::new(1.0, i as f64 * 0.05, 3.0)).collect();
        let gt = RigidTransform::from_axis_angle(Vector3::y(), 0.2, Vector3::new(0.1, 0.0, 0.0));
        assert_eq!(reconstruction_chamfer(&c0, &c1, &gt, &gt, 60, 1).unwrap(), 0.0);
        let off = RigidTransform::from_translation(Vector3::new(0.0, 0.0, 0.5)).compose(&gt);
        assert!(reconstruction_chamfer(&c0, &c1, &off, &gt, 60, 1).unwrap() > 0.0);
    }
}
