//! Synthetic RGB-D pairs with exact ground-truth relative pose.
//!
//! Scenes are axis-aligned boxes and rectangles textured with seeded
//! multi-octave value noise. Frames are ray-cast analytically, so depth is the
//! exact intersection distance along each pixel's ray.

use nalgebra::Vector3;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::descriptor::FeatureMap;
use crate::error::{Error, Result};
use crate::geometry::{CameraIntrinsics, ColorImage, DepthMap, RgbdFrame, RigidTransform};
use crate::par;

pub const MIN_DEPTH_COVERAGE: f64 = 0.3;
const RAY_EPS: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum Primitive {
    /// Solid axis-aligned box. A camera inside it sees the inner walls.
    Box {
        center: [f64; 3],
        size: [f64; 3],
        texture_seed: u64,
    },
    /// Axis-aligned rectangle with normal along `normal_axis`. `size` spans
    /// the two remaining axes in increasing axis order.
    Plane {
        normal_axis: usize,
        center: [f64; 3],
        size: [f64; 2],
        texture_seed: u64,
    },
}

/// Nearest hit along `origin + t * dir`: `(t, normal axis, texture seed)`.
struct Hit {
    t: f64,
    axis: usize,
    seed: u64,
}

impl Primitive {
    fn intersect(&self, origin: &Vector3<f64>, dir: &Vector3<f64>) -> Option<Hit> {
        match self {
            Primitive::Box {
                center,
                size,
                texture_seed,
            } => {
                let mut t_near = f64::NEG_INFINITY;
                let mut t_far = f64::INFINITY;
                let mut near_axis = 0;
                let mut far_axis = 0;
                for a in 0..3 {
                    let lo = center[a] - 0.5 * size[a];
                    let hi = center[a] + 0.5 * size[a];
                    if dir[a] == 0.0 {
                        if origin[a] < lo || origin[a] > hi {
                            return None;
                        }
                        continue;
                    }
                    let t1 = (lo - origin[a]) / dir[a];
                    let t2 = (hi - origin[a]) / dir[a];
                    let (ta, tb) = if t1 < t2 { (t1, t2) } else { (t2, t1) };
                    if ta > t_near {
                        t_near = ta;
                        near_axis = a;
                    }
                    if tb < t_far {
                        t_far = tb;
                        far_axis = a;
                    }
                }
                if t_near > t_far || t_far <= RAY_EPS {
                    return None;
                }
                let (t, axis) = if t_near > RAY_EPS {
                    (t_near, near_axis)
                } else {
                    (t_far, far_axis)
                };
                Some(Hit {
                    t,
                    axis,
                    seed: *texture_seed,
                })
            }
            Primitive::Plane {
                normal_axis,
                center,
                size,
                texture_seed,
            } => {
                let a = *normal_axis;
                if dir[a] == 0.0 {
                    return None;
                }
                let t = (center[a] - origin[a]) / dir[a];
                if t <= RAY_EPS {
                    return None;
                }
                let hit = origin + t * dir;
                let others = [(a + 1) % 3, (a + 2) % 3];
                let (lo_axis, hi_axis) = (others[0].min(others[1]), others[0].max(others[1]));
                for (axis, extent) in [(lo_axis, size[0]), (hi_axis, size[1])] {
                    if (hit[axis] - center[axis]).abs() > 0.5 * extent {
                        return None;
                    }
                }
                Some(Hit {
                    t,
                    axis: a,
                    seed: *texture_seed,
                })
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SceneSpec {
    pub primitives: Vec<Primitive>,
    /// Camera-to-world pose of the first frame.
    pub base_pose: RigidTransform,
    /// Rotation of the second camera relative to the first, in degrees.
    pub rotation_deg: f64,
    /// Translation of the second camera relative to the first, in meters.
    pub translation_m: f64,
    /// Rotation axis in the first camera's frame; random when `None`.
    pub rotation_axis: Option<[f64; 3]>,
    /// Translation direction in the first camera's frame; random when `None`.
    pub translation_dir: Option<[f64; 3]>,
    pub width: usize,
    pub height: usize,
    pub hfov_deg: f64,
    /// Cycles per meter of the lowest noise octave.
    pub texture_frequency: f64,
    pub depth_noise_std: f64,
    /// Fraction of pixels whose depth is dropped (set to missing).
    pub depth_dropout: f64,
    pub rng_seed: u64,
}

impl SceneSpec {
    /// A closed textured room with a handful of random boxes and wall panels.
    pub fn room(seed: u64, rotation_deg: f64, translation_m: f64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut primitives = vec![Primitive::Box {
            center: [0.0, -0.5, 1.5],
            size: [7.0, 4.0, 8.0],
            texture_seed: rng.random(),
        }];
        for _ in 0..rng.random_range(3..=6) {
            let size = [
                rng.random_range(0.3..1.2),
                rng.random_range(0.3..1.2),
                rng.random_range(0.3..1.2),
            ];
            primitives.push(Primitive::Box {
                center: [
                    rng.random_range(-2.0..2.0),
                    1.5 - 0.5 * size[1],
                    rng.random_range(2.0..4.5),
                ],
                size,
                texture_seed: rng.random(),
            });
        }
        for _ in 0..2 {
            primitives.push(Primitive::Plane {
                normal_axis: 2,
                center: [
                    rng.random_range(-2.0..2.0),
                    rng.random_range(-1.5..0.5),
                    5.49,
                ],
                size: [rng.random_range(0.8..2.0), rng.random_range(0.6..1.5)],
                texture_seed: rng.random(),
            });
        }
        let yaw = rng.random_range(-0.3..0.3);
        Self {
            primitives,
            base_pose: RigidTransform::from_axis_angle(Vector3::y(), yaw, Vector3::zeros()),
            rotation_deg,
            translation_m,
            rotation_axis: None,
            translation_dir: None,
            width: 64,
            height: 48,
            hfov_deg: 60.0,
            texture_frequency: 1.0,
            depth_noise_std: 0.0,
            depth_dropout: 0.0,
            rng_seed: seed,
        }
    }

    pub fn intrinsics(&self) -> Result<CameraIntrinsics> {
        CameraIntrinsics::from_fov(self.width, self.height, self.hfov_deg)
    }

    /// Motion of the second camera expressed in the first camera's frame.
    pub fn camera_motion(&self) -> RigidTransform {
        let mut rng = ChaCha8Rng::seed_from_u64(self.rng_seed ^ 0x6d6f_7469_6f6e);
        let mut random_unit = || loop {
            let v = Vector3::new(
                StandardNormal.sample(&mut rng),
                StandardNormal.sample(&mut rng),
                StandardNormal.sample(&mut rng),
            );
            let n: f64 = v.norm();
            if n > 1e-6 {
                break v / n;
            }
        };
        let axis = self
            .rotation_axis
            .map(Vector3::from)
            .unwrap_or_else(&mut random_unit);
        let dir = self
            .translation_dir
            .map(|d| Vector3::from(d).normalize())
            .unwrap_or_else(&mut random_unit);
        RigidTransform::from_axis_angle(axis, self.rotation_deg.to_radians(), dir * self.translation_m)
    }
}

#[derive(Debug, Clone)]
pub struct GeneratedPair {
    pub frame0: RgbdFrame,
    pub frame1: RgbdFrame,
    /// Maps frame-0 camera coordinates into frame-1 camera coordinates.
    pub relative_pose: RigidTransform,
    /// Camera-to-world poses.
    pub pose0: RigidTransform,
    pub pose1: RigidTransform,
}

fn splitmix(mut x: u64) -> u64 {
    x = x.wrapping_add(0x9e37_79b9_7f4a_7c15);
    x = (x ^ (x >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    x = (x ^ (x >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    x ^ (x >> 31)
}

fn lattice(seed: u64, i: i64, j: i64, k: i64) -> f64 {
    let h = splitmix(
        seed ^ splitmix((i as u64).wrapping_mul(0x1f1f_1f1f) ^ splitmix((j as u64) ^ splitmix(k as u64))),
    );
    (h >> 11) as f64 / (1u64 << 53) as f64
}

fn smooth(t: f64) -> f64 {
    t * t * (3.0 - 2.0 * t)
}

/// Trilinear value noise in `[0, 1)`.
fn value_noise(seed: u64, p: &Vector3<f64>) -> f64 {
    let base = p.map(f64::floor);
    let f = p - base;
    let (i, j, k) = (base.x as i64, base.y as i64, base.z as i64);
    let (sx, sy, sz) = (smooth(f.x), smooth(f.y), smooth(f.z));
    let mut acc = 0.0;
    for dk in 0..2 {
        for dj in 0..2 {
            for di in 0..2 {
                let wx = if di == 0 { 1.0 - sx } else { sx };
                let wy = if dj == 0 { 1.0 - sy } else { sy };
                let wz = if dk == 0 { 1.0 - sz } else { sz };
                acc += wx * wy * wz * lattice(seed, i + di, j + dj, k + dk);
            }
        }
    }
    acc
}

fn fractal_noise(seed: u64, p: &Vector3<f64>, frequency: f64) -> f64 {
    let mut sum = 0.0;
    let mut norm = 0.0;
    let mut amp = 1.0;
    let mut freq = frequency;
    for octave in 0..3u64 {
        sum += amp * value_noise(seed.wrapping_add(octave * 7919), &(p * freq));
        norm += amp;
        amp *= 0.5;
        freq *= 2.0;
    }
    sum / norm
}

fn texture(seed: u64, axis: usize, p: &Vector3<f64>, frequency: f64) -> [f64; 3] {
    const SHADE: [f64; 3] = [0.85, 1.0, 0.7];
    let mut c = [0.0; 3];
    for (ch, slot) in c.iter_mut().enumerate() {
        let n = fractal_noise(splitmix(seed ^ (ch as u64 + 1)), p, frequency);
        // Stretch the noise (which concentrates around 0.5) for contrast.
        *slot = ((n - 0.5) * 1.2 + 0.5).clamp(0.02, 0.98) * SHADE[axis];
    }
    c
}

/// Nearest-hit color and camera depth for every pixel of a camera at `pose`.
fn ray_cast(
    spec: &SceneSpec,
    intrinsics: &CameraIntrinsics,
    pose: &RigidTransform,
) -> (Vec<[f64; 3]>, Vec<f64>) {
    let (w, h) = (intrinsics.width(), intrinsics.height());
    let origin = *pose.translation();
    let rows = par::map_range(h, |v| {
        let mut colors = Vec::with_capacity(w);
        let mut depths = Vec::with_capacity(w);
        for u in 0..w {
            // Camera-frame ray has z = 1, so the hit parameter is the depth.
            let dir = pose.rotation() * intrinsics.pixel_ray(u as f64, v as f64);
            let hit = spec
                .primitives
                .iter()
                .filter_map(|p| p.intersect(&origin, &dir))
                .min_by(|a, b| a.t.total_cmp(&b.t));
            match hit {
                Some(hit) => {
                    let point = origin + hit.t * dir;
                    colors.push(texture(hit.seed, hit.axis, &point, spec.texture_frequency));
                    depths.push(hit.t);
                }
                None => {
                    colors.push([0.0; 3]);
                    depths.push(0.0);
                }
            }
        }
        (colors, depths)
    });
    let mut colors = Vec::with_capacity(w * h);
    let mut depths = Vec::with_capacity(w * h);
    for (c, d) in rows {
        colors.extend(c);
        depths.extend(d);
    }
    (colors, depths)
}

fn render_frame(spec: &SceneSpec, pose: &RigidTransform, stream: u64) -> Result<RgbdFrame> {
    let intrinsics = spec.intrinsics()?;
    let (colors, mut depths) = ray_cast(spec, &intrinsics, pose);
    if spec.depth_noise_std > 0.0 || spec.depth_dropout > 0.0 {
        let mut rng = ChaCha8Rng::seed_from_u64(splitmix(spec.rng_seed ^ stream));
        let noise = Normal::new(0.0, spec.depth_noise_std.max(0.0))
            .map_err(|e| Error::Config(format!("depth noise: {e}")))?;
        for d in depths.iter_mut() {
            if *d <= 0.0 {
                continue;
            }
            if spec.depth_noise_std > 0.0 {
                *d = (*d + noise.sample(&mut rng)).max(1e-3);
            }
            if spec.depth_dropout > 0.0 && rng.random::<f64>() < spec.depth_dropout {
                *d = 0.0;
            }
        }
    }
    let coverage = depths.iter().filter(|d| **d > 0.0).count() as f64 / depths.len() as f64;
    if coverage < MIN_DEPTH_COVERAGE {
        return Err(Error::Generation(format!(
            "only {:.1}% of pixels have depth (need {:.0}%); move the camera toward the scene, \
             add primitives, or lower depth dropout",
            coverage * 100.0,
            MIN_DEPTH_COVERAGE * 100.0
        )));
    }
    let color = ColorImage::new(spec.width, spec.height, colors)?;
    let depth = DepthMap::new(spec.width, spec.height, depths)?;
    RgbdFrame::new(color, depth, intrinsics)
}

pub fn generate_pair(spec: &SceneSpec) -> Result<GeneratedPair> {
    if !(0.0..=1.0).contains(&spec.depth_dropout) {
        return Err(Error::Config(format!(
            "depth dropout must be in [0, 1], got {}",
            spec.depth_dropout
        )));
    }
    let motion = spec.camera_motion();
    let pose0 = spec.base_pose;
    let pose1 = pose0.compose(&motion);
    let frame0 = render_frame(spec, &pose0, 0)?;
    let frame1 = render_frame(spec, &pose1, 1)?;
    // Equal to inverse(pose1) ∘ pose0, without the round-off of composing.
    let relative_pose = motion.inverse();
    Ok(GeneratedPair {
        frame0,
        frame1,
        relative_pose,
        pose0,
        pose1,
    })
}

/// `count` room scenes with rotation and translation magnitudes drawn
/// uniformly from `[0, max_rotation_deg]` and `[0, max_translation_m]`.
pub fn perturbation_suite(
    count: usize,
    max_rotation_deg: f64,
    max_translation_m: f64,
    seed: u64,
) -> Vec<SceneSpec> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..count)
        .map(|_| {
            let scene_seed: u64 = rng.random();
            let rot = rng.random::<f64>() * max_rotation_deg;
            let trans = rng.random::<f64>() * max_translation_m;
            SceneSpec::room(scene_seed, rot, trans)
        })
        .collect()
}

/// Overwrites the features of `fraction` of the valid pixels with copies of
/// other valid pixels' features, planting repeated-structure outliers.
pub fn plant_duplicate_features(map: &mut FeatureMap, valid: &[bool], fraction: f64, seed: u64) {
    let candidates: Vec<usize> = (0..valid.len()).filter(|i| valid[*i]).collect();
    if candidates.len() < 2 {
        return;
    }
    let count = ((fraction.clamp(0.0, 1.0) * candidates.len() as f64).round() as usize)
        .min(candidates.len());
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let original = map.clone();
    let targets = rand::seq::index::sample(&mut rng, candidates.len(), count).into_vec();
    for t in targets {
        let dst = candidates[t];
        let src = loop {
            let s = candidates[rng.random_range(0..candidates.len())];
            if s != dst {
                break s;
            }
        };
        map.copy_pixel_from(&original, src, dst);
    }
}
