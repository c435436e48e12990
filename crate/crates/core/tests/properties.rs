use nalgebra::{Rotation3, Unit, Vector3};
use proptest::prelude::*;

use rgbd_reg::alignment::{randomized_fit, weighted_kabsch, FitConfig};
use rgbd_reg::correspondence::{extract_correspondences, ratio_weight, CorrespondenceSet, Direction, WeightMode};
use rgbd_reg::descriptor::{build_feature_cloud, extract_features, DescriptorConfig, FeatureMap, FeaturePointCloud};
use rgbd_reg::evaluation::{aggregate, chamfer_error, rotation_error, RegistrationReport};
use rgbd_reg::geometry::{project, unproject};
use rgbd_reg::renderer::{consistency_losses, splat_render, LossWeights};
use rgbd_reg::synth::{generate_pair, SceneSpec};
use rgbd_reg::{CameraIntrinsics, ColorImage, DepthMap, RgbdFrame, RigidTransform};

fn vec3(range: f64) -> impl Strategy<Value = Vector3<f64>> {
    (-range..range, -range..range, -range..range).prop_map(|(x, y, z)| Vector3::new(x, y, z))
}

fn rigid() -> impl Strategy<Value = RigidTransform> {
    (vec3(1.0), 0.0..std::f64::consts::PI, vec3(3.0)).prop_filter_map("axis too short", |(axis, angle, t)| {
        (axis.norm() > 1e-3).then(|| RigidTransform::from_axis_angle(axis, angle, t))
    })
}

fn close(a: &RigidTransform, b: &RigidTransform, tol: f64) -> bool {
    (a.rotation() - b.rotation()).abs().max() < tol && (a.translation() - b.translation()).abs().max() < tol
}

fn frame_from(width: usize, height: usize, colors: Vec<[f64; 3]>, depths: Vec<f64>) -> RgbdFrame {
    let k = CameraIntrinsics::new(40.0, 42.0, width as f64 / 2.0, height as f64 / 2.0, width, height).unwrap();
    RgbdFrame::new(
        ColorImage::new(width, height, colors).unwrap(),
        DepthMap::new(width, height, depths).unwrap(),
        k,
    )
    .unwrap()
}

fn random_frame() -> impl Strategy<Value = RgbdFrame> {
    (4usize..12, 4usize..12).prop_flat_map(|(w, h)| {
        (
            prop::collection::vec((0.0..=1.0, 0.0..=1.0, 0.0..=1.0), w * h),
            prop::collection::vec(prop_oneof![1 => Just(0.0), 4 => 0.2..6.0f64], w * h),
        )
            .prop_map(move |(c, d)| frame_from(w, h, c.into_iter().map(|(r, g, b)| [r, g, b]).collect(), d))
    })
}

fn unit_features(n: usize, dim: usize) -> impl Strategy<Value = Vec<f32>> {
    prop::collection::vec(-1.0f32..1.0, n * dim).prop_map(move |mut v| {
        for chunk in v.chunks_mut(dim) {
            let norm = chunk.iter().map(|x| x * x).sum::<f32>().sqrt().max(1e-6);
            chunk.iter_mut().for_each(|x| *x /= norm);
        }
        v
    })
}

fn cloud(n: usize, dim: usize) -> impl Strategy<Value = FeaturePointCloud> {
    (
        prop::collection::vec(vec3(2.0), n),
        unit_features(n, dim),
        prop::collection::vec(prop::bool::weighted(0.9), n),
    )
        .prop_map(move |(p, f, valid)| {
            FeaturePointCloud::from_parts(p, vec![[0.5; 3]; n], f, dim, valid, vec![(0, 0); n]).unwrap()
        })
        .prop_filter("need two valid points", |c| c.valid_count() >= 2)
}

fn correspondences(n: std::ops::Range<usize>) -> impl Strategy<Value = Vec<(Vector3<f64>, Vector3<f64>, f64)>> {
    prop::collection::vec((vec3(2.0), vec3(2.0), 0.05..1.0f64), n)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn se3_group_laws(a in rigid(), b in rigid(), c in rigid(), x in vec3(5.0)) {
        prop_assert!(close(&a.compose(&b).compose(&c), &a.compose(&b.compose(&c)), 1e-9));
        prop_assert!(close(&a.compose(&RigidTransform::identity()), &a, 1e-12));
        prop_assert!(close(&RigidTransform::identity().compose(&a), &a, 1e-12));
        prop_assert!(close(&a.compose(&a.inverse()), &RigidTransform::identity(), 1e-9));
        prop_assert!((a.compose(&b).apply(&x) - a.apply(&b.apply(&x))).norm() < 1e-9);
    }

    #[test]
    fn rigid_motion_preserves_distances(t in rigid(), pts in prop::collection::vec(vec3(4.0), 2..20)) {
        let moved = t.transform_points(&pts);
        for i in 0..pts.len() {
            for j in 0..pts.len() {
                let d0 = (pts[i] - pts[j]).norm();
                let d1 = (moved[i] - moved[j]).norm();
                prop_assert!((d0 - d1).abs() < 1e-9);
            }
        }
    }

    #[test]
    fn project_unproject_round_trip(frame in random_frame()) {
        let un = unproject(&frame);
        let proj = project(&un.positions, frame.intrinsics());
        for i in 0..un.positions.len() {
            if !un.valid[i] {
                continue;
            }
            let (u, v) = un.pixel_index[i];
            prop_assert!((proj.pixels[i][0] - u as f64).abs() < 1e-6);
            prop_assert!((proj.pixels[i][1] - v as f64).abs() < 1e-6);
        }
    }

    #[test]
    fn features_are_unit_and_cloud_is_bijective(frame in random_frame()) {
        let map = extract_features(frame.color(), &DescriptorConfig::default()).unwrap();
        for chunk in map.data().chunks(map.dim()) {
            let norm = chunk.iter().map(|x| f64::from(*x).powi(2)).sum::<f64>().sqrt();
            prop_assert!((norm - 1.0).abs() < 1e-6);
        }
        let cloud = build_feature_cloud(&frame, &map).unwrap();
        let mut seen = std::collections::HashSet::new();
        for i in cloud.valid_indices() {
            let (u, v) = cloud.pixel_index[i];
            prop_assert!(frame.depth().is_valid(u, v));
            prop_assert!(seen.insert((u, v)));
        }
        prop_assert_eq!(seen.len(), frame.depth().valid_count());
    }

    #[test]
    fn selection_keeps_the_per_direction_maxima(p in cloud(30, 8), q in cloud(25, 8), half in 1usize..20) {
        let k = 2 * half;
        let set = extract_correspondences(&p, &q, k, WeightMode::RatioTest).unwrap();
        let all = extract_correspondences(&p, &q, 1000, WeightMode::RatioTest).unwrap();
        for dir in [Direction::PToQ, Direction::QToP] {
            let chosen: Vec<_> = set.entries.iter().filter(|c| c.direction == dir).collect();
            let min_chosen = chosen.iter().map(|c| c.weight).fold(f64::INFINITY, f64::min);
            let key = |c: &rgbd_reg::correspondence::Correspondence| (c.p_index, c.q_index);
            for c in all.entries.iter().filter(|c| c.direction == dir) {
                if !chosen.iter().any(|s| key(s) == key(c)) {
                    prop_assert!(c.weight <= min_chosen);
                }
            }
        }
    }

    #[test]
    fn ratio_weight_decreases_in_d1(d2 in 0.01..2.0f64, a in 0.0..1.0f64, b in 0.0..1.0f64) {
        let (lo, hi) = if a < b { (a, b) } else { (b, a) };
        prop_assume!(hi - lo > 1e-9);
        prop_assert!(ratio_weight(lo * d2, d2) > ratio_weight(hi * d2, d2));
    }

    #[test]
    fn kabsch_equivariance(g in rigid(), t in rigid(), q in prop::collection::vec(vec3(2.0), 4..30)) {
        let base: Vec<_> = q.iter().map(|x| (t.apply(x) + Vector3::new(0.01, -0.02, 0.015) * x.x, *x, 1.0)).collect();
        let moved: Vec<_> = base.iter().map(|(p, q, w)| (g.apply(p), *q, *w)).collect();
        let (Ok(a), Ok(b)) = (
            weighted_kabsch(&CorrespondenceSet::from_triples(&base)),
            weighted_kabsch(&CorrespondenceSet::from_triples(&moved)),
        ) else {
            return Ok(());
        };
        prop_assert!(close(&b, &g.compose(&a), 1e-9));
    }

    #[test]
    fn kabsch_weight_scale_invariance(triples in correspondences(3..30), c in 0.01..100.0f64) {
        let scaled: Vec<_> = triples.iter().map(|(p, q, w)| (*p, *q, w * c)).collect();
        let (Ok(a), Ok(b)) = (
            weighted_kabsch(&CorrespondenceSet::from_triples(&triples)),
            weighted_kabsch(&CorrespondenceSet::from_triples(&scaled)),
        ) else {
            return Ok(());
        };
        prop_assert!(close(&a, &b, 1e-9));
    }

    #[test]
    fn kabsch_rotation_is_proper(triples in correspondences(3..20), mirror in any::<bool>()) {
        let triples: Vec<_> = if mirror {
            triples.iter().map(|(_, q, w)| (Vector3::new(-q.x, q.y, q.z), *q, *w)).collect()
        } else {
            triples
        };
        if let Ok(t) = weighted_kabsch(&CorrespondenceSet::from_triples(&triples)) {
            prop_assert!((t.rotation().determinant() - 1.0).abs() < 1e-9);
        }
    }

    #[test]
    fn single_full_subset_equals_full_fit(triples in correspondences(3..40), seed in any::<u64>()) {
        let set = CorrespondenceSet::from_triples(&triples);
        let Ok(full) = weighted_kabsch(&set) else {
            return Ok(());
        };
        let config = FitConfig {
            num_subsets: 1,
            subset_size: triples.len(),
            rng_seed: seed,
            ..FitConfig::inference()
        };
        let fit = randomized_fit(&set, &config).unwrap();
        prop_assert_eq!(fit.transform, full);
    }

    #[test]
    fn feature_rotation_leaves_matching_unchanged(p in cloud(20, 6), q in cloud(20, 6), axis in vec3(1.0), angle in 0.1..3.0f64) {
        prop_assume!(axis.norm() > 1e-2);
        // A 6-d orthogonal map: one 3-d rotation on each half of the vector.
        let r = Rotation3::from_axis_angle(&Unit::new_normalize(axis), angle).into_inner();
        let rotate = |c: &FeaturePointCloud| {
            let mut f = Vec::with_capacity(c.features().len());
            for chunk in c.features().chunks(6) {
                for half in chunk.chunks(3) {
                    let v = r * Vector3::new(f64::from(half[0]), f64::from(half[1]), f64::from(half[2]));
                    f.extend(v.iter().map(|x| *x as f32));
                }
            }
            FeaturePointCloud::from_parts(c.positions.clone(), c.colors.clone(), f, 6, c.valid.clone(), c.pixel_index.clone()).unwrap()
        };
        let a = extract_correspondences(&p, &q, 20, WeightMode::RatioTest).unwrap();
        let b = extract_correspondences(&rotate(&p), &rotate(&q), 20, WeightMode::RatioTest).unwrap();
        // Near-ties can legitimately swap under f32 rounding; only compare
        // when every weight gap is clear of it.
        let mut w: Vec<f64> = a.weights();
        w.sort_by(f64::total_cmp);
        prop_assume!(w.windows(2).all(|x| x[1] - x[0] > 1e-4 || x[1] == x[0]));
        prop_assert_eq!(a.len(), b.len());
        for (x, y) in a.entries.iter().zip(&b.entries) {
            prop_assert_eq!((x.p_index, x.q_index, x.direction), (y.p_index, y.q_index, y.direction));
            prop_assert!((x.weight - y.weight).abs() < 1e-5);
        }
    }

    #[test]
    fn farther_points_never_change_rendered_pixels(frame in random_frame(), extra in prop::collection::vec((vec3(1.0), 0.5..10.0f64), 1..30)) {
        let map = FeatureMap::new(frame.width(), frame.height(), 1, vec![1.0; frame.width() * frame.height()]).unwrap();
        let base = build_feature_cloud(&frame, &map).unwrap();
        let k = frame.intrinsics();
        let before = splat_render(&base, &RigidTransform::identity(), k, 0);
        // Push each extra point behind whatever already covers its pixel.
        let mut positions = Vec::new();
        for (dir, push) in &extra {
            let ray = Vector3::new(dir.x, dir.y, 1.0);
            let x = k.fx() * ray.x + k.cx();
            let y = k.fy() * ray.y + k.cy();
            let Some((u, v)) = k.pixel_containing(x, y) else { continue };
            let idx = v * frame.width() + u;
            let z = if before.valid[idx] { before.depth[idx] + push } else { continue };
            positions.push(ray * z);
        }
        let n = positions.len();
        let far = FeaturePointCloud::from_parts(positions, vec![[0.9, 0.1, 0.3]; n], vec![1.0; n], 1, vec![true; n], vec![(0, 0); n]).unwrap();
        let after = splat_render(&base.union(&far).unwrap(), &RigidTransform::identity(), k, 0);
        for i in 0..before.valid.len() {
            if before.valid[i] {
                prop_assert!(after.valid[i]);
                prop_assert_eq!(after.color[i], before.color[i]);
                prop_assert_eq!(after.depth[i], before.depth[i]);
            }
        }
    }

    #[test]
    fn losses_are_non_negative_and_zero_on_match(frame in random_frame(), other in random_frame()) {
        let map = FeatureMap::new(frame.width(), frame.height(), 1, vec![1.0; frame.width() * frame.height()]).unwrap();
        let cloud = build_feature_cloud(&frame, &map).unwrap();
        let own = splat_render(&cloud, &RigidTransform::identity(), frame.intrinsics(), 0);
        let w = LossWeights::default();
        let exact = consistency_losses([&own, &own], [&frame, &frame], 0.0, &w).unwrap();
        prop_assert_eq!(exact.photometric, 0.0);
        prop_assert_eq!(exact.depth, 0.0);
        prop_assert_eq!(exact.total, 0.0);
        if other.width() == frame.width() && other.height() == frame.height() {
            let r = consistency_losses([&own, &own], [&other, &other], 0.3, &w).unwrap();
            prop_assert!(r.photometric >= 0.0 && r.depth >= 0.0 && r.total >= 0.0);
            let mismatch = (0..own.valid.len()).any(|i| {
                own.valid[i] && (own.color[i] != other.color().data()[i]
                    || (other.depth().data()[i] > 0.0 && own.depth[i] != other.depth().data()[i]))
            });
            if mismatch {
                prop_assert!(r.photometric + r.depth > 0.0);
            }
        }
    }

    #[test]
    fn metric_symmetries(a in rigid(), b in rigid(), t in rigid(), p in prop::collection::vec(vec3(3.0), 1..40), q in prop::collection::vec(vec3(3.0), 1..40)) {
        prop_assert!((rotation_error(a.rotation(), b.rotation()) - rotation_error(b.rotation(), a.rotation())).abs() < 1e-9);
        let pq = chamfer_error(&p, &q).unwrap();
        prop_assert!((pq - chamfer_error(&q, &p).unwrap()).abs() < 1e-12);
        let moved = chamfer_error(&t.transform_points(&p), &t.transform_points(&q)).unwrap();
        prop_assert!((pq - moved).abs() < 1e-9);
    }

    #[test]
    fn accuracy_shrinks_as_thresholds_tighten(errors in prop::collection::vec((0.0..60.0f64, 0.0..40.0f64, 0.0..15.0f64), 1..30)) {
        let reports: Vec<_> = errors.iter().map(|(r, t, c)| RegistrationReport::new(*r, *t, *c)).collect();
        let s = aggregate(&reports).unwrap();
        for m in [&s.rotation_deg, &s.translation_cm, &s.chamfer_cm] {
            let mut by_threshold: Vec<(f64, f64)> = m.accuracy.iter().map(|(k, v)| (k.parse().unwrap(), *v)).collect();
            by_threshold.sort_by(|x, y| x.0.total_cmp(&y.0));
            prop_assert!(by_threshold.windows(2).all(|w| w[0].1 <= w[1].1));
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(8))]

    #[test]
    fn generator_agrees_with_renderer(seed in 0u64..1000, rot in 0.0..15.0f64, trans in 0.0..0.3f64) {
        let pair = generate_pair(&SceneSpec::room(seed, rot, trans)).unwrap();
        let map = FeatureMap::new(pair.frame0.width(), pair.frame0.height(), 1, vec![1.0; pair.frame0.width() * pair.frame0.height()]).unwrap();
        let cloud = build_feature_cloud(&pair.frame0, &map).unwrap();
        let render = splat_render(&cloud, &pair.relative_pose, pair.frame1.intrinsics(), 0);
        let mut sum = 0.0;
        let mut count = 0usize;
        for (i, valid) in render.valid.iter().enumerate() {
            if *valid {
                let c = pair.frame1.color().data()[i];
                sum += (0..3).map(|ch| (render.color[i][ch] - c[ch]).abs()).sum::<f64>() / 3.0;
                count += 1;
            }
        }
        prop_assert!(count > 0);
        prop_assert!(sum / (count as f64) < 0.02, "photometric L1 {}", sum / count as f64);
    }
}

#[test]
fn joint_mode_is_blind_to_a_wrong_transform() {
    // Two frames looking at disjoint regions: in joint mode each view sees
    // its own points, so a wildly wrong transform can still score zero. This
    // is why cross mode is the default.
    let w = 6;
    let h = 5;
    let frame = frame_from(w, h, vec![[0.2, 0.4, 0.6]; w * h], vec![2.0; w * h]);
    let map = FeatureMap::new(w, h, 1, vec![1.0; w * h]).unwrap();
    let cloud = build_feature_cloud(&frame, &map).unwrap();
    let wrong = RigidTransform::from_axis_angle(Vector3::y(), std::f64::consts::PI, Vector3::new(0.0, 0.0, 50.0));
    let (j0, j1) = rgbd_reg::renderer::cross_render(&cloud, &cloud, &wrong, frame.intrinsics(), rgbd_reg::renderer::RenderMode::Joint, 0).unwrap();
    let joint = consistency_losses([&j0, &j1], [&frame, &frame], 0.0, &LossWeights::default()).unwrap();
    assert_eq!(joint.total, 0.0);
    let (c0, c1) = rgbd_reg::renderer::cross_render(&cloud, &cloud, &wrong, frame.intrinsics(), rgbd_reg::renderer::RenderMode::Cross, 0).unwrap();
    let cross = consistency_losses([&c0, &c1], [&frame, &frame], 0.0, &LossWeights::default()).unwrap();
    assert!(cross.total > 0.0);
}
