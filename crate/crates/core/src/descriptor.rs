//! Dense per-pixel descriptors and feature point cloud assembly.
//!
//! The built-in descriptor concatenates a fixed random orthogonal projection
//! of the mean-subtracted 5x5 color patch with an 8-bin soft-binned gradient
//! orientation histogram over the same patch, then L2-normalizes. Patches at
//! the border replicate edge pixels. Learned features from another stack can
//! be brought in through the binary feature-map format (see
//! [`load_feature_map`]).

use std::fs;
use std::path::Path;

use nalgebra::{DMatrix, Vector3};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{Error, Result};
use crate::geometry::{unproject, ColorImage, RgbdFrame, RigidTransform};
use crate::par;

pub const PATCH_RADIUS: usize = 2;
const PATCH_SIDE: usize = 2 * PATCH_RADIUS + 1;
const PATCH_VALUES: usize = PATCH_SIDE * PATCH_SIDE * 3;
pub const HISTOGRAM_BINS: usize = 8;
pub const DEFAULT_FEATURE_DIM: usize = 32;
pub const DEFAULT_PROJECTION_SEED: u64 = 0x5eed_f00d;

const MAGIC: &[u8; 4] = b"FMAP";
const HEADER_LEN: usize = 4 + 3 * 4 + 1;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DescriptorConfig {
    pub feature_dim: usize,
    pub projection_seed: u64,
}

impl Default for DescriptorConfig {
    fn default() -> Self {
        Self {
            feature_dim: DEFAULT_FEATURE_DIM,
            projection_seed: DEFAULT_PROJECTION_SEED,
        }
    }
}

impl DescriptorConfig {
    pub fn validate(&self) -> Result<()> {
        let min = HISTOGRAM_BINS + 1;
        let max = HISTOGRAM_BINS + PATCH_VALUES;
        if self.feature_dim < min || self.feature_dim > max {
            return Err(Error::Config(format!(
                "feature dimension {} unsupported by the patch descriptor (allowed {min}..={max})",
                self.feature_dim
            )));
        }
        Ok(())
    }
}

/// `height x width x dim` features, row-major, one contiguous vector per pixel.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureMap {
    width: usize,
    height: usize,
    dim: usize,
    data: Vec<f32>,
}

impl FeatureMap {
    pub fn new(width: usize, height: usize, dim: usize, data: Vec<f32>) -> Result<Self> {
        if dim == 0 {
            return Err(Error::Config("feature dimension must be positive".into()));
        }
        if data.len() != width * height * dim {
            return Err(Error::DimensionMismatch(format!(
                "feature buffer has {} values, expected {width}x{height}x{dim}",
                data.len()
            )));
        }
        if let Some(i) = data.iter().position(|x| !x.is_finite()) {
            let pixel = i / dim;
            return Err(Error::NonFiniteFeature {
                u: pixel % width,
                v: pixel / width,
            });
        }
        Ok(Self {
            width,
            height,
            dim,
            data,
        })
    }

    pub fn width(&self) -> usize {
        self.width
    }
    pub fn height(&self) -> usize {
        self.height
    }
    pub fn dim(&self) -> usize {
        self.dim
    }
    pub fn data(&self) -> &[f32] {
        &self.data
    }
    pub fn pixel(&self, u: usize, v: usize) -> &[f32] {
        let start = (v * self.width + u) * self.dim;
        &self.data[start..start + self.dim]
    }

    /// Overwrites the feature at pixel index `dst` with `source`'s feature at `src`.
    pub fn copy_pixel_from(&mut self, source: &FeatureMap, src: usize, dst: usize) {
        let d = self.dim;
        self.data[dst * d..(dst + 1) * d].copy_from_slice(&source.data[src * d..(src + 1) * d]);
    }

    pub fn normalize_in_place(&mut self) {
        let d = self.dim;
        for chunk in self.data.chunks_mut(d) {
            normalize_f32(chunk);
        }
    }
}

/// L2-normalizes in place; an all-zero vector becomes the uniform unit vector.
fn normalize_f32(v: &mut [f32]) {
    let norm = v.iter().map(|x| f64::from(*x).powi(2)).sum::<f64>().sqrt();
    if norm > 1e-12 {
        for x in v.iter_mut() {
            *x = (f64::from(*x) / norm) as f32;
        }
    } else {
        let u = (1.0 / (v.len() as f64).sqrt()) as f32;
        v.iter_mut().for_each(|x| *x = u);
    }
}

/// Rows are orthonormal: `(dim - 8) x 75`.
fn projection_matrix(config: &DescriptorConfig) -> DMatrix<f64> {
    let rows = config.feature_dim - HISTOGRAM_BINS;
    let mut rng = ChaCha8Rng::seed_from_u64(config.projection_seed);
    let gaussian = DMatrix::<f64>::from_fn(PATCH_VALUES, rows, |_, _| {
        StandardNormal.sample(&mut rng)
    });
    gaussian.qr().q().transpose()
}

fn luminance(c: [f64; 3]) -> f64 {
    0.299 * c[0] + 0.587 * c[1] + 0.114 * c[2]
}

pub fn extract_features(image: &ColorImage, config: &DescriptorConfig) -> Result<FeatureMap> {
    config.validate()?;
    let (w, h) = (image.width(), image.height());
    let projection = projection_matrix(config);
    let clamp_u = |u: isize| u.clamp(0, w as isize - 1) as usize;
    let clamp_v = |v: isize| v.clamp(0, h as isize - 1) as usize;

    let gray: Vec<f64> = image.data().iter().map(|c| luminance(*c)).collect();
    let g = |u: isize, v: isize| gray[clamp_v(v) * w + clamp_u(u)];
    let gradients: Vec<(f64, f64)> = (0..h * w)
        .map(|i| {
            let (u, v) = ((i % w) as isize, (i / w) as isize);
            (
                0.5 * (g(u + 1, v) - g(u - 1, v)),
                0.5 * (g(u, v + 1) - g(u, v - 1)),
            )
        })
        .collect();

    let dim = config.feature_dim;
    let rows = par::map_range(h, |v| {
        let mut out = vec![0f32; w * dim];
        let mut patch = [0f64; PATCH_VALUES];
        for u in 0..w {
            let mut idx = 0;
            let mut hist = [0f64; HISTOGRAM_BINS];
            for dv in -(PATCH_RADIUS as isize)..=PATCH_RADIUS as isize {
                for du in -(PATCH_RADIUS as isize)..=PATCH_RADIUS as isize {
                    let pu = clamp_u(u as isize + du);
                    let pv = clamp_v(v as isize + dv);
                    let c = image.get(pu, pv);
                    patch[idx..idx + 3].copy_from_slice(&c);
                    idx += 3;

                    let (gx, gy) = gradients[pv * w + pu];
                    let mag = (gx * gx + gy * gy).sqrt();
                    if mag > 0.0 {
                        // Soft assignment between the two nearest bin centers.
                        let angle = gy.atan2(gx) + std::f64::consts::PI;
                        let pos = angle / std::f64::consts::TAU * HISTOGRAM_BINS as f64 - 0.5;
                        let lo = pos.floor();
                        let frac = pos - lo;
                        let lo = (lo as isize).rem_euclid(HISTOGRAM_BINS as isize) as usize;
                        let hi = (lo + 1) % HISTOGRAM_BINS;
                        hist[lo] += mag * (1.0 - frac);
                        hist[hi] += mag * frac;
                    }
                }
            }
            let mean = patch.iter().sum::<f64>() / PATCH_VALUES as f64;
            patch.iter_mut().for_each(|x| *x -= mean);

            let dst = &mut out[u * dim..(u + 1) * dim];
            for (r, slot) in dst[..dim - HISTOGRAM_BINS].iter_mut().enumerate() {
                let mut acc = 0.0;
                for (c, x) in patch.iter().enumerate() {
                    acc += projection[(r, c)] * x;
                }
                *slot = acc as f32;
            }
            for (slot, value) in dst[dim - HISTOGRAM_BINS..].iter_mut().zip(hist) {
                *slot = value as f32;
            }
            normalize_f32(dst);
        }
        out
    });
    FeatureMap::new(w, h, dim, rows.concat())
}

/// Writes the binary feature-map format: magic `FMAP`, little-endian u32
/// height, width, dim, a u8 flag (1 = vectors already unit length), then
/// row-major little-endian f32 values.
pub fn save_feature_map(path: &Path, map: &FeatureMap, normalized: bool) -> Result<()> {
    let mut bytes = Vec::with_capacity(HEADER_LEN + map.data.len() * 4);
    bytes.extend_from_slice(MAGIC);
    for n in [map.height, map.width, map.dim] {
        let n = u32::try_from(n).map_err(|_| Error::save(path, "dimension exceeds u32"))?;
        bytes.extend_from_slice(&n.to_le_bytes());
    }
    bytes.push(u8::from(normalized));
    for x in &map.data {
        bytes.extend_from_slice(&x.to_le_bytes());
    }
    fs::write(path, bytes).map_err(|e| Error::save(path, e))
}

/// Reads a feature map written by [`save_feature_map`] (or any stack that
/// follows the same layout) and checks it against the expected
/// `(width, height, dim)`.
pub fn load_feature_map(path: &Path, expected: (usize, usize, usize)) -> Result<FeatureMap> {
    let bytes = fs::read(path).map_err(|e| Error::load(path, e))?;
    if bytes.len() < HEADER_LEN || &bytes[..4] != MAGIC {
        return Err(Error::load(path, "not a feature map (bad magic or short header)"));
    }
    let read_u32 = |at: usize| u32::from_le_bytes(bytes[at..at + 4].try_into().unwrap()) as usize;
    let (height, width, dim) = (read_u32(4), read_u32(8), read_u32(12));
    let normalized = match bytes[16] {
        0 => false,
        1 => true,
        other => return Err(Error::load(path, format!("bad normalization flag {other}"))),
    };
    let (ew, eh, ed) = expected;
    if (width, height, dim) != (ew, eh, ed) {
        return Err(Error::DimensionMismatch(format!(
            "{}: header says {width}x{height}x{dim}, expected {ew}x{eh}x{ed}",
            path.display()
        )));
    }
    let body = &bytes[HEADER_LEN..];
    if body.len() != width * height * dim * 4 {
        return Err(Error::load(
            path,
            format!("payload is {} bytes, expected {}", body.len(), width * height * dim * 4),
        ));
    }
    let data: Vec<f32> = body
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes(c.try_into().unwrap()))
        .collect();
    let mut map = FeatureMap::new(width, height, dim, data)?;
    if !normalized {
        map.normalize_in_place();
    }
    Ok(map)
}

/// Per-pixel 3D position, color, and feature vector. Entries with
/// `valid == false` carry placeholder data and must not be consumed.
#[derive(Debug, Clone, PartialEq)]
pub struct FeaturePointCloud {
    pub positions: Vec<Vector3<f64>>,
    pub colors: Vec<[f64; 3]>,
    features: Vec<f32>,
    dim: usize,
    pub valid: Vec<bool>,
    pub pixel_index: Vec<(usize, usize)>,
}

impl FeaturePointCloud {
    pub fn from_parts(
        positions: Vec<Vector3<f64>>,
        colors: Vec<[f64; 3]>,
        features: Vec<f32>,
        dim: usize,
        valid: Vec<bool>,
        pixel_index: Vec<(usize, usize)>,
    ) -> Result<Self> {
        let n = positions.len();
        if colors.len() != n || valid.len() != n || pixel_index.len() != n || features.len() != n * dim
        {
            return Err(Error::DimensionMismatch(
                "feature cloud arrays disagree on point count".into(),
            ));
        }
        Ok(Self {
            positions,
            colors,
            features,
            dim,
            valid,
            pixel_index,
        })
    }

    pub fn empty(dim: usize) -> Self {
        Self {
            positions: Vec::new(),
            colors: Vec::new(),
            features: Vec::new(),
            dim,
            valid: Vec::new(),
            pixel_index: Vec::new(),
        }
    }

    pub fn len(&self) -> usize {
        self.positions.len()
    }
    pub fn is_empty(&self) -> bool {
        self.positions.is_empty()
    }
    pub fn dim(&self) -> usize {
        self.dim
    }
    pub fn features(&self) -> &[f32] {
        &self.features
    }
    pub fn feature(&self, i: usize) -> &[f32] {
        &self.features[i * self.dim..(i + 1) * self.dim]
    }
    pub fn valid_count(&self) -> usize {
        self.valid.iter().filter(|v| **v).count()
    }
    pub fn valid_indices(&self) -> Vec<usize> {
        (0..self.len()).filter(|i| self.valid[*i]).collect()
    }
    pub fn valid_positions(&self) -> Vec<Vector3<f64>> {
        self.valid_indices().into_iter().map(|i| self.positions[i]).collect()
    }

    /// Same cloud with every position mapped through `transform`.
    pub fn transformed(&self, transform: &RigidTransform) -> Self {
        let mut out = self.clone();
        for p in out.positions.iter_mut() {
            *p = transform.apply(p);
        }
        out
    }

    /// Concatenation; `other`'s points follow `self`'s.
    pub fn union(&self, other: &Self) -> Result<Self> {
        if self.dim != other.dim {
            return Err(Error::DimensionMismatch(format!(
                "cannot join clouds with feature dims {} and {}",
                self.dim, other.dim
            )));
        }
        let mut out = self.clone();
        out.positions.extend_from_slice(&other.positions);
        out.colors.extend_from_slice(&other.colors);
        out.features.extend_from_slice(&other.features);
        out.valid.extend_from_slice(&other.valid);
        out.pixel_index.extend_from_slice(&other.pixel_index);
        Ok(out)
    }
}

pub fn build_feature_cloud(frame: &RgbdFrame, features: &FeatureMap) -> Result<FeaturePointCloud> {
    if features.width() != frame.width() || features.height() != frame.height() {
        return Err(Error::DimensionMismatch(format!(
            "feature map is {}x{}, frame is {}x{}",
            features.width(),
            features.height(),
            frame.width(),
            frame.height()
        )));
    }
    let un = unproject(frame);
    FeaturePointCloud::from_parts(
        un.positions,
        frame.color().data().to_vec(),
        features.data().to_vec(),
        features.dim(),
        un.valid,
        un.pixel_index,
    )
}
