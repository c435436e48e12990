//! Weighted Procrustes fitting over a correspondence set.
//!
//! The fitted transform maps each correspondence's `target` (Q side) onto its
//! `source` (P side), minimizing
//!
//! ```text
//! E(M, T) = |M|^-1 * sum_i w_i * |p_i - T(q_i)|^2
//! ```
//!
//! [`randomized_fit`] fits many small random subsets and keeps the candidate
//! with the lowest `E` on the full set. [`error_weight_gradient`] gives
//! `dE(M, T*(w)) / dw` through the closed-form minimizer.

use nalgebra::{Matrix3, Vector3, SVD};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::correspondence::CorrespondenceSet;
use crate::error::{Error, Result};
use crate::geometry::RigidTransform;
use crate::par;

/// Second-to-first singular value ratio under which a fit counts as collinear.
pub const DEGENERACY_RATIO: f64 = 1e-9;

/// Normalizer of the weighted error.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
pub enum ErrorNormalization {
    /// Divide by the number of correspondences.
    #[default]
    Count,
    /// Divide by the sum of weights.
    WeightSum,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FitConfig {
    pub num_subsets: usize,
    pub subset_size: usize,
    pub rng_seed: u64,
    pub use_randomization: bool,
    pub normalization: ErrorNormalization,
}

impl FitConfig {
    /// 10 subsets of 80 correspondences.
    pub fn training() -> Self {
        Self {
            num_subsets: 10,
            subset_size: 80,
            ..Self::inference()
        }
    }

    /// 100 subsets of 20 correspondences.
    pub fn inference() -> Self {
        Self {
            num_subsets: 100,
            subset_size: 20,
            rng_seed: 0,
            use_randomization: true,
            normalization: ErrorNormalization::Count,
        }
    }

    pub fn validate(&self, set_len: usize) -> Result<()> {
        if !self.use_randomization {
            return Ok(());
        }
        if self.num_subsets == 0 {
            return Err(Error::Config("number of subsets must be positive".into()));
        }
        if self.subset_size < 3 {
            return Err(Error::Config(format!(
                "subset size must be at least 3, got {}",
                self.subset_size
            )));
        }
        if self.subset_size > set_len {
            return Err(Error::Config(format!(
                "subset size {} exceeds correspondence count {set_len}",
                self.subset_size
            )));
        }
        Ok(())
    }
}

impl Default for FitConfig {
    fn default() -> Self {
        Self::inference()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FitResult {
    pub transform: RigidTransform,
    pub full_set_weighted_error: f64,
    /// Full-set error of each subset's candidate; infinite for degenerate subsets.
    pub per_subset_errors: Vec<f64>,
    pub degenerate_flags: Vec<bool>,
    /// Index of the winning subset.
    pub best_subset: usize,
}

pub fn weighted_error(set: &CorrespondenceSet, transform: &RigidTransform) -> Result<f64> {
    weighted_error_with(set, transform, ErrorNormalization::Count)
}

pub fn weighted_error_with(
    set: &CorrespondenceSet,
    transform: &RigidTransform,
    normalization: ErrorNormalization,
) -> Result<f64> {
    if set.is_empty() {
        return Err(Error::Empty("correspondence set"));
    }
    let mut total = 0.0;
    let mut weight_sum = 0.0;
    for c in &set.entries {
        total += c.weight * (c.source - transform.apply(&c.target)).norm_squared();
        weight_sum += c.weight;
    }
    match normalization {
        ErrorNormalization::Count => Ok(total / set.len() as f64),
        ErrorNormalization::WeightSum if weight_sum > 0.0 => Ok(total / weight_sum),
        ErrorNormalization::WeightSum => Err(Error::DegenerateFit("weight sum is zero".into())),
    }
}

/// Closed-form solution plus the SVD pieces the gradient needs.
struct KabschSolution {
    transform: RigidTransform,
    u: Matrix3<f64>,
    v: Matrix3<f64>,
    singular: Vector3<f64>,
    signs: Vector3<f64>,
    centroid_p: Vector3<f64>,
    centroid_q: Vector3<f64>,
    weight_sum: f64,
}

fn solve_kabsch(set: &CorrespondenceSet) -> Result<KabschSolution> {
    let mut weight_sum = 0.0;
    let mut support = 0;
    for c in &set.entries {
        if !c.weight.is_finite() || c.weight < 0.0 {
            return Err(Error::Config(format!("invalid correspondence weight {}", c.weight)));
        }
        weight_sum += c.weight;
        if c.weight > 0.0 {
            support += 1;
        }
    }
    if weight_sum <= 0.0 {
        return Err(Error::DegenerateFit("weight sum is zero".into()));
    }
    if support < 3 {
        return Err(Error::DegenerateFit(format!(
            "{support} correspondences with nonzero weight, need 3"
        )));
    }

    let mut centroid_p = Vector3::zeros();
    let mut centroid_q = Vector3::zeros();
    for c in &set.entries {
        centroid_p += c.weight * c.source;
        centroid_q += c.weight * c.target;
    }
    centroid_p /= weight_sum;
    centroid_q /= weight_sum;

    let mut covariance = Matrix3::zeros();
    for c in &set.entries {
        covariance += c.weight * (c.source - centroid_p) * (c.target - centroid_q).transpose();
    }

    // Singular values come back sorted in decreasing order.
    let svd = SVD::new(covariance, true, true);
    let u = svd.u.expect("svd u");
    let v = svd.v_t.expect("svd v_t").transpose();
    let singular = svd.singular_values;
    if singular[0].is_nan() || singular[0] <= 0.0 || singular[1] < DEGENERACY_RATIO * singular[0] {
        return Err(Error::DegenerateFit(format!(
            "collinear support (singular values {:.3e}, {:.3e}, {:.3e})",
            singular[0], singular[1], singular[2]
        )));
    }
    let s = (u * v.transpose()).determinant().signum();
    let signs = Vector3::new(1.0, 1.0, s);
    let rotation = u * Matrix3::from_diagonal(&signs) * v.transpose();
    let translation = centroid_p - rotation * centroid_q;
    let transform = RigidTransform::new(rotation, translation)?;
    Ok(KabschSolution {
        transform,
        u,
        v,
        singular,
        signs,
        centroid_p,
        centroid_q,
        weight_sum,
    })
}

/// Global minimizer of the weighted error, mapping targets onto sources.
pub fn weighted_kabsch(set: &CorrespondenceSet) -> Result<RigidTransform> {
    solve_kabsch(set).map(|s| s.transform)
}

pub fn randomized_fit(set: &CorrespondenceSet, config: &FitConfig) -> Result<FitResult> {
    if set.is_empty() {
        return Err(Error::Empty("correspondence set"));
    }
    config.validate(set.len())?;
    let error = |t: &RigidTransform| weighted_error_with(set, t, config.normalization);

    if !config.use_randomization {
        let transform = weighted_kabsch(set)?;
        let err = error(&transform)?;
        return Ok(FitResult {
            transform,
            full_set_weighted_error: err,
            per_subset_errors: vec![err],
            degenerate_flags: vec![false],
            best_subset: 0,
        });
    }

    // Draw every subset up front so the RNG stream does not depend on how the
    // fits are scheduled; the first t subsets of a longer run are identical.
    let mut rng = ChaCha8Rng::seed_from_u64(config.rng_seed);
    let subsets: Vec<Vec<usize>> = (0..config.num_subsets)
        .map(|_| {
            let mut idx = rand::seq::index::sample(&mut rng, set.len(), config.subset_size).into_vec();
            idx.sort_unstable();
            idx
        })
        .collect();

    let candidates: Vec<Option<(RigidTransform, f64)>> = par::map_slice(&subsets, |idx| {
        let t = weighted_kabsch(&set.subset(idx)).ok()?;
        let e = error(&t).ok()?;
        Some((t, e))
    });

    let mut best: Option<(usize, RigidTransform, f64)> = None;
    let mut per_subset_errors = Vec::with_capacity(candidates.len());
    let mut degenerate_flags = Vec::with_capacity(candidates.len());
    for (i, candidate) in candidates.into_iter().enumerate() {
        match candidate {
            Some((t, e)) => {
                per_subset_errors.push(e);
                degenerate_flags.push(false);
                if best.as_ref().is_none_or(|b| e < b.2) {
                    best = Some((i, t, e));
                }
            }
            None => {
                per_subset_errors.push(f64::INFINITY);
                degenerate_flags.push(true);
            }
        }
    }
    let (best_subset, transform, full_set_weighted_error) = best.ok_or_else(|| {
        Error::DegenerateFit(format!("all {} subsets were degenerate", config.num_subsets))
    })?;
    Ok(FitResult {
        transform,
        full_set_weighted_error,
        per_subset_errors,
        degenerate_flags,
        best_subset,
    })
}

/// Derivative of the optimal error with respect to each weight, for the
/// count-normalized error.
pub fn error_weight_gradient(set: &CorrespondenceSet) -> Result<Vec<f64>> {
    error_weight_gradient_with(set, ErrorNormalization::Count)
}

/// `d/dw_i E(M, T*(w))`, where `T*` is the weighted Kabsch minimizer.
///
/// The result is the direct partial derivative at fixed `T*` plus the
/// implicit term `dE/dT * dT*/dw_i`, where `dT*/dw_i` differentiates the
/// weighted centroids, the covariance, and the SVD-based rotation. At an exact
/// minimizer the implicit term vanishes; it is kept so the expression stays
/// correct for whatever the solver actually returned.
pub fn error_weight_gradient_with(
    set: &CorrespondenceSet,
    normalization: ErrorNormalization,
) -> Result<Vec<f64>> {
    let sol = solve_kabsch(set)?;
    let rotation = *sol.transform.rotation();
    let translation = *sol.transform.translation();
    let normalizer = match normalization {
        ErrorNormalization::Count => set.len() as f64,
        ErrorNormalization::WeightSum => sol.weight_sum,
    };

    let mut residual_outer = Matrix3::zeros();
    let mut residual_sum = Vector3::zeros();
    let mut weighted_sq = 0.0;
    let residuals: Vec<Vector3<f64>> = set
        .entries
        .iter()
        .map(|c| c.source - rotation * c.target - translation)
        .collect();
    for (c, e) in set.entries.iter().zip(&residuals) {
        residual_outer += c.weight * e * c.target.transpose();
        residual_sum += c.weight * e;
        weighted_sq += c.weight * e.norm_squared();
    }
    let error = weighted_sq / normalizer;

    let s = sol.singular;
    let d = sol.signs;
    for a in 0..3 {
        for b in (a + 1)..3 {
            let gap = if d[a] == d[b] { s[a] + s[b] } else { s[a] - s[b] };
            if gap.abs() <= DEGENERACY_RATIO * s[0] {
                return Err(Error::DegenerateFit(format!(
                    "rotation derivative undefined (singular values {s:?})"
                )));
            }
        }
    }

    let mut grad = Vec::with_capacity(set.len());
    for (c, r) in set.entries.iter().zip(&residuals) {
        let dp = c.source - sol.centroid_p;
        let dq = c.target - sol.centroid_q;
        let d_centroid_p = dp / sol.weight_sum;
        let d_centroid_q = dq / sol.weight_sum;
        let d_cov = dp * dq.transpose();
        let proj = sol.u.transpose() * d_cov * sol.v;

        // dR = U * M * Vᵀ with M built from the antisymmetric SVD differentials.
        let mut m = Matrix3::zeros();
        for a in 0..3 {
            for b in 0..3 {
                if a == b {
                    continue;
                }
                m[(a, b)] = if d[a] == d[b] {
                    d[a] * (proj[(a, b)] - proj[(b, a)]) / (s[a] + s[b])
                } else {
                    d[b] * (proj[(a, b)] + proj[(b, a)]) / (s[b] - s[a])
                };
            }
        }
        let d_rotation = sol.u * m * sol.v.transpose();
        let d_translation = d_centroid_p - d_rotation * sol.centroid_q - rotation * d_centroid_q;

        let implicit =
            -2.0 * (d_rotation.component_mul(&residual_outer).sum() + d_translation.dot(&residual_sum));
        let direct = match normalization {
            ErrorNormalization::Count => r.norm_squared(),
            ErrorNormalization::WeightSum => r.norm_squared() - error,
        };
        grad.push((direct + implicit) / normalizer);
    }
    Ok(grad)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;

    fn random_transform(rng: &mut impl Rng) -> RigidTransform {
        let axis = Vector3::new(
            rng.random_range(-1.0..1.0),
            rng.random_range(-1.0..1.0),
            rng.random_range(-1.0..1.0),
        );
        RigidTransform::from_axis_angle(
            axis,
            rng.random_range(0.0..3.0),
            Vector3::new(
                rng.random_range(-2.0..2.0),
                rng.random_range(-2.0..2.0),
                rng.random_range(-2.0..2.0),
            ),
        )
    }

    fn random_points(rng: &mut impl Rng, n: usize) -> Vec<Vector3<f64>> {
        (0..n)
            .map(|_| {
                Vector3::new(
                    rng.random_range(-1.0..1.0),
                    rng.random_range(-1.0..1.0),
                    rng.random_range(-1.0..1.0),
                )
            })
            .collect()
    }

    fn planted(t: &RigidTransform, qs: &[Vector3<f64>], w: f64) -> CorrespondenceSet {
        let triples: Vec<_> = qs.iter().map(|q| (t.apply(q), *q, w)).collect();
        CorrespondenceSet::from_triples(&triples)
    }

    #[test]
    fn weighted_error_examples() {
        let same = CorrespondenceSet::from_triples(&[
            (Vector3::new(1.0, 2.0, 3.0), Vector3::new(1.0, 2.0, 3.0), 0.7),
            (Vector3::new(-1.0, 0.0, 3.0), Vector3::new(-1.0, 0.0, 3.0), 0.2),
        ]);
        assert_eq!(weighted_error(&same, &RigidTransform::identity()).unwrap(), 0.0);

        let one = CorrespondenceSet::from_triples(&[(Vector3::x(), Vector3::zeros(), 1.0)]);
        assert_eq!(weighted_error(&one, &RigidTransform::identity()).unwrap(), 1.0);

        assert!(weighted_error(&CorrespondenceSet::default(), &RigidTransform::identity()).is_err());
    }

    #[test]
    fn weight_sum_normalization() {
        let set = CorrespondenceSet::from_triples(&[
            (Vector3::x(), Vector3::zeros(), 0.5),
            (Vector3::zeros(), Vector3::zeros(), 0.5),
        ]);
        let id = RigidTransform::identity();
        assert_eq!(weighted_error(&set, &id).unwrap(), 0.25);
        assert_eq!(
            weighted_error_with(&set, &id, ErrorNormalization::WeightSum).unwrap(),
            0.5
        );
    }

    #[test]
    fn identical_points_give_identity() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let qs = random_points(&mut rng, 12);
        let t = weighted_kabsch(&planted(&RigidTransform::identity(), &qs, 1.0)).unwrap();
        assert!((t.rotation() - Matrix3::identity()).amax() < 1e-9);
        assert!(t.translation().amax() < 1e-9);
    }

    #[test]
    fn recovers_planted_transform() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        for _ in 0..50 {
            let gt = random_transform(&mut rng);
            let qs = random_points(&mut rng, 10);
            let t = weighted_kabsch(&planted(&gt, &qs, 1.0)).unwrap();
            assert!(t.inverse().compose(&gt).rotation_angle() < 1e-6);
            assert!((t.translation() - gt.translation()).norm() < 1e-6);
        }
    }

    #[test]
    fn zero_weights_are_inert() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let gt = random_transform(&mut rng);
        let qs = random_points(&mut rng, 10);
        let mut triples: Vec<_> = qs
            .iter()
            .map(|q| (gt.apply(q) + Vector3::new(1e-3, -2e-3, 5e-4) * rng.random_range(-1.0..1.0), *q, 1.0))
            .collect();
        triples[3].0 += Vector3::new(5.0, -4.0, 3.0);
        triples[3].2 = 0.0;
        triples[7].0 -= Vector3::new(2.0, 8.0, 1.0);
        triples[7].2 = 0.0;
        let with_outliers = weighted_kabsch(&CorrespondenceSet::from_triples(&triples)).unwrap();
        let inliers: Vec<_> = triples.iter().filter(|t| t.2 > 0.0).copied().collect();
        let clean = weighted_kabsch(&CorrespondenceSet::from_triples(&inliers)).unwrap();
        assert!((with_outliers.rotation() - clean.rotation()).amax() < 1e-9);
        assert!((with_outliers.translation() - clean.translation()).amax() < 1e-9);
    }

    #[test]
    fn mirrored_input_still_gives_proper_rotation() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let qs = random_points(&mut rng, 8);
        let triples: Vec<_> = qs
            .iter()
            .map(|q| (Vector3::new(-q.x, q.y, q.z), *q, 1.0))
            .collect();
        let t = weighted_kabsch(&CorrespondenceSet::from_triples(&triples)).unwrap();
        assert!((t.rotation().determinant() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn degenerate_inputs() {
        let collinear: Vec<_> = (0..6)
            .map(|i| {
                let p = Vector3::new(i as f64, 2.0 * i as f64, 0.5);
                (p, p, 1.0)
            })
            .collect();
        assert!(matches!(
            weighted_kabsch(&CorrespondenceSet::from_triples(&collinear)),
            Err(Error::DegenerateFit(_))
        ));
        let zero: Vec<_> = (0..4)
            .map(|i| (Vector3::new(i as f64, 0.0, (i * i) as f64), Vector3::zeros(), 0.0))
            .collect();
        assert!(matches!(
            weighted_kabsch(&CorrespondenceSet::from_triples(&zero)),
            Err(Error::DegenerateFit(_))
        ));
        let two = vec![
            (Vector3::x(), Vector3::x(), 1.0),
            (Vector3::y(), Vector3::y(), 1.0),
            (Vector3::z(), Vector3::z(), 0.0),
        ];
        assert!(weighted_kabsch(&CorrespondenceSet::from_triples(&two)).is_err());
    }

    #[test]
    fn randomized_on_consistent_data_matches_full_fit() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let gt = random_transform(&mut rng);
        let qs = random_points(&mut rng, 60);
        let set = planted(&gt, &qs, 0.8);
        let full = weighted_kabsch(&set).unwrap();
        let fit = randomized_fit(&set, &FitConfig::inference()).unwrap();
        assert!((fit.transform.rotation() - full.rotation()).amax() < 1e-9);
        assert!((fit.transform.translation() - full.translation()).amax() < 1e-9);
        assert_eq!(fit.per_subset_errors.len(), 100);
        assert!(fit.degenerate_flags.iter().all(|d| !d));
    }

    #[test]
    fn single_full_subset_equals_full_fit_exactly() {
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let gt = random_transform(&mut rng);
        let qs = random_points(&mut rng, 25);
        let mut set = planted(&gt, &qs, 1.0);
        for c in set.entries.iter_mut() {
            c.weight = rng.random_range(0.1..1.0);
            c.source += Vector3::new(rng.random_range(-0.1..0.1), 0.0, 0.0);
        }
        let config = FitConfig {
            num_subsets: 1,
            subset_size: set.len(),
            ..FitConfig::inference()
        };
        let fit = randomized_fit(&set, &config).unwrap();
        assert_eq!(fit.transform, weighted_kabsch(&set).unwrap());
    }

    #[test]
    fn deterministic_per_seed() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let gt = random_transform(&mut rng);
        let qs = random_points(&mut rng, 80);
        let mut set = planted(&gt, &qs, 1.0);
        for c in set.entries.iter_mut().step_by(3) {
            c.source += Vector3::new(0.5, -0.3, 0.2);
        }
        let config = FitConfig {
            rng_seed: 99,
            ..FitConfig::inference()
        };
        assert_eq!(randomized_fit(&set, &config).unwrap(), randomized_fit(&set, &config).unwrap());
    }

    #[test]
    fn subset_prefixes_are_shared() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let gt = random_transform(&mut rng);
        let qs = random_points(&mut rng, 50);
        let mut set = planted(&gt, &qs, 1.0);
        for c in set.entries.iter_mut().step_by(4) {
            c.source += Vector3::new(0.2, 0.1, -0.4);
        }
        let few = randomized_fit(&set, &FitConfig { num_subsets: 5, ..FitConfig::inference() }).unwrap();
        let many = randomized_fit(&set, &FitConfig { num_subsets: 50, ..FitConfig::inference() }).unwrap();
        assert_eq!(few.per_subset_errors[..], many.per_subset_errors[..5]);
        assert!(many.full_set_weighted_error <= few.full_set_weighted_error);
    }

    #[test]
    fn config_validation() {
        let set = CorrespondenceSet::from_triples(&vec![(Vector3::x(), Vector3::x(), 1.0); 10]);
        let bad_size = FitConfig { subset_size: 2, ..FitConfig::inference() };
        assert!(matches!(randomized_fit(&set, &bad_size), Err(Error::Config(_))));
        let too_big = FitConfig { subset_size: 11, ..FitConfig::inference() };
        assert!(matches!(randomized_fit(&set, &too_big), Err(Error::Config(_))));
        let none = FitConfig { num_subsets: 0, ..FitConfig::inference() };
        assert!(matches!(randomized_fit(&set, &none), Err(Error::Config(_))));
    }

    #[test]
    fn all_degenerate_subsets_is_an_error() {
        let collinear: Vec<_> = (0..30)
            .map(|i| {
                let p = Vector3::new(i as f64, 0.0, 0.0);
                (p, p, 1.0)
            })
            .collect();
        let set = CorrespondenceSet::from_triples(&collinear);
        assert!(matches!(
            randomized_fit(&set, &FitConfig::inference()),
            Err(Error::DegenerateFit(_))
        ));
    }

    #[test]
    fn zero_residual_gradient_vanishes() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let gt = random_transform(&mut rng);
        let qs = random_points(&mut rng, 10);
        let mut set = planted(&gt, &qs, 1.0);
        for c in set.entries.iter_mut() {
            c.weight = rng.random_range(0.2..1.0);
        }
        let g = error_weight_gradient(&set).unwrap();
        assert!(g.iter().all(|x| x.abs() < 1e-8), "{g:?}");
    }

    #[test]
    fn outlier_weight_gradient_is_positive() {
        let mut rng = ChaCha8Rng::seed_from_u64(10);
        let gt = random_transform(&mut rng);
        let qs = random_points(&mut rng, 10);
        let mut set = planted(&gt, &qs, 1.0);
        set.entries[4].source += Vector3::new(3.0, -2.0, 1.0);
        let g = error_weight_gradient(&set).unwrap();
        assert!(g[4] > 0.0);
        assert!(g.iter().enumerate().all(|(i, x)| i == 4 || *x < g[4]));
    }

    #[test]
    fn weight_sum_gradient_matches_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let gt = random_transform(&mut rng);
        let qs = random_points(&mut rng, 10);
        let mut set = planted(&gt, &qs, 1.0);
        for c in set.entries.iter_mut() {
            c.weight = rng.random_range(0.2..1.0);
            c.source += Vector3::new(
                rng.random_range(-0.3..0.3),
                rng.random_range(-0.3..0.3),
                rng.random_range(-0.3..0.3),
            );
        }
        let norm = ErrorNormalization::WeightSum;
        let g = error_weight_gradient_with(&set, norm).unwrap();
        let w = set.weights();
        let h = 1e-5;
        for i in 0..w.len() {
            let eval = |delta: f64| {
                let mut wi = w.clone();
                wi[i] += delta;
                let s = set.with_weights(&wi);
                weighted_error_with(&s, &weighted_kabsch(&s).unwrap(), norm).unwrap()
            };
            let fd = (eval(h) - eval(-h)) / (2.0 * h);
            assert!((g[i] - fd).abs() <= 1e-4 * fd.abs().max(1e-6), "{i}: {} vs {fd}", g[i]);
        }
    }
}
