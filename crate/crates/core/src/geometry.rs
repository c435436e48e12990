//! Pinhole cameras, rigid transforms, and the image <-> 3D mappings.
//!
//! Conventions: camera frame is x right, y down, z forward. Pixel centers sit
//! at integer coordinates, so pixel `(u, v)` covers `[u - 0.5, u + 0.5)`.
//! Depth is the z coordinate in meters and 0 marks a missing measurement.

use nalgebra::{Matrix3, Rotation3, Unit, Vector3};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

const ORTHONORMAL_TOL: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CameraIntrinsics {
    fx: f64,
    fy: f64,
    cx: f64,
    cy: f64,
    width: usize,
    height: usize,
}

impl CameraIntrinsics {
    pub fn new(fx: f64, fy: f64, cx: f64, cy: f64, width: usize, height: usize) -> Result<Self> {
        let bad = |msg: String| Err(Error::InvalidIntrinsics(msg));
        if !(fx.is_finite() && fx > 0.0 && fy.is_finite() && fy > 0.0) {
            return bad(format!("focal lengths must be positive, got fx={fx} fy={fy}"));
        }
        if width == 0 || height == 0 {
            return bad(format!("empty image size {width}x{height}"));
        }
        if !(cx >= 0.0 && cx < width as f64 && cy >= 0.0 && cy < height as f64) {
            return bad(format!(
                "principal point ({cx}, {cy}) outside {width}x{height} image"
            ));
        }
        Ok(Self {
            fx,
            fy,
            cx,
            cy,
            width,
            height,
        })
    }

    /// Centered principal point with the given horizontal field of view.
    pub fn from_fov(width: usize, height: usize, hfov_deg: f64) -> Result<Self> {
        let f = 0.5 * width as f64 / (0.5 * hfov_deg.to_radians()).tan();
        Self::new(
            f,
            f,
            (width as f64 - 1.0) / 2.0,
            (height as f64 - 1.0) / 2.0,
            width,
            height,
        )
    }

    pub fn fx(&self) -> f64 {
        self.fx
    }
    pub fn fy(&self) -> f64 {
        self.fy
    }
    pub fn cx(&self) -> f64 {
        self.cx
    }
    pub fn cy(&self) -> f64 {
        self.cy
    }
    pub fn width(&self) -> usize {
        self.width
    }
    pub fn height(&self) -> usize {
        self.height
    }
    pub fn num_pixels(&self) -> usize {
        self.width * self.height
    }

    /// Ray through pixel `(u, v)` scaled so its z component is 1.
    pub fn pixel_ray(&self, u: f64, v: f64) -> Vector3<f64> {
        Vector3::new((u - self.cx) / self.fx, (v - self.cy) / self.fy, 1.0)
    }

    /// Index of the pixel containing continuous image coordinate `(x, y)`.
    pub fn pixel_containing(&self, x: f64, y: f64) -> Option<(usize, usize)> {
        let u = (x + 0.5).floor();
        let v = (y + 0.5).floor();
        if u >= 0.0 && v >= 0.0 && u < self.width as f64 && v < self.height as f64 {
            Some((u as usize, v as usize))
        } else {
            None
        }
    }
}

/// An element of SE(3): `x -> rotation * x + translation`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RigidTransform {
    rotation: Matrix3<f64>,
    translation: Vector3<f64>,
}

impl RigidTransform {
    /// Rejects rotations that are not orthonormal with determinant +1.
    /// The matrix is checked, never re-projected.
    pub fn new(rotation: Matrix3<f64>, translation: Vector3<f64>) -> Result<Self> {
        if rotation.iter().chain(translation.iter()).any(|v| !v.is_finite()) {
            return Err(Error::InvalidTransform("non-finite entry".into()));
        }
        let gram = rotation.transpose() * rotation - Matrix3::identity();
        let worst = gram.amax();
        if worst > ORTHONORMAL_TOL {
            return Err(Error::InvalidTransform(format!(
                "rotation is not orthonormal (max |RᵀR - I| = {worst:e})"
            )));
        }
        let det = rotation.determinant();
        if (det - 1.0).abs() > ORTHONORMAL_TOL {
            return Err(Error::InvalidTransform(format!(
                "rotation determinant is {det}, expected 1"
            )));
        }
        Ok(Self {
            rotation,
            translation,
        })
    }

    pub fn identity() -> Self {
        Self {
            rotation: Matrix3::identity(),
            translation: Vector3::zeros(),
        }
    }

    pub fn from_translation(translation: Vector3<f64>) -> Self {
        Self {
            rotation: Matrix3::identity(),
            translation,
        }
    }

    /// Rotation of `angle_rad` about `axis` (need not be normalized), then
    /// translation.
    pub fn from_axis_angle(axis: Vector3<f64>, angle_rad: f64, translation: Vector3<f64>) -> Self {
        let rotation = if axis.norm() == 0.0 || angle_rad == 0.0 {
            Matrix3::identity()
        } else {
            Rotation3::from_axis_angle(&Unit::new_normalize(axis), angle_rad).into_inner()
        };
        Self {
            rotation,
            translation,
        }
    }

    /// Parses a row-major 3x4 `[R|t]` matrix.
    pub fn from_row_major_3x4(values: &[f64; 12]) -> Result<Self> {
        let rotation = Matrix3::new(
            values[0], values[1], values[2], values[4], values[5], values[6], values[8],
            values[9], values[10],
        );
        let translation = Vector3::new(values[3], values[7], values[11]);
        Self::new(rotation, translation)
    }

    pub fn to_row_major_3x4(&self) -> [f64; 12] {
        let r = &self.rotation;
        let t = &self.translation;
        [
            r[(0, 0)],
            r[(0, 1)],
            r[(0, 2)],
            t[0],
            r[(1, 0)],
            r[(1, 1)],
            r[(1, 2)],
            t[1],
            r[(2, 0)],
            r[(2, 1)],
            r[(2, 2)],
            t[2],
        ]
    }

    pub fn rotation(&self) -> &Matrix3<f64> {
        &self.rotation
    }

    pub fn translation(&self) -> &Vector3<f64> {
        &self.translation
    }

    pub fn apply(&self, point: &Vector3<f64>) -> Vector3<f64> {
        self.rotation * point + self.translation
    }

    pub fn transform_points(&self, points: &[Vector3<f64>]) -> Vec<Vector3<f64>> {
        points.iter().map(|p| self.apply(p)).collect()
    }

    /// `self ∘ other`: applies `other` first.
    pub fn compose(&self, other: &RigidTransform) -> RigidTransform {
        RigidTransform {
            rotation: self.rotation * other.rotation,
            translation: self.rotation * other.translation + self.translation,
        }
    }

    pub fn inverse(&self) -> RigidTransform {
        let rt = self.rotation.transpose();
        RigidTransform {
            rotation: rt,
            translation: -(rt * self.translation),
        }
    }

    /// Rotation angle in radians, in `[0, π]`.
    pub fn rotation_angle(&self) -> f64 {
        let c = ((self.rotation.trace() - 1.0) / 2.0).clamp(-1.0, 1.0);
        c.acos()
    }
}

impl Default for RigidTransform {
    fn default() -> Self {
        Self::identity()
    }
}

/// Per-pixel depth in meters, row-major. `0.0` marks missing depth.
#[derive(Debug, Clone, PartialEq)]
pub struct DepthMap {
    width: usize,
    height: usize,
    data: Vec<f64>,
}

impl DepthMap {
    pub fn new(width: usize, height: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != width * height {
            return Err(Error::DimensionMismatch(format!(
                "depth has {} values, expected {width}x{height}",
                data.len()
            )));
        }
        if let Some(i) = data.iter().position(|d| !d.is_finite() || *d < 0.0) {
            return Err(Error::InvalidDepth {
                u: i % width,
                v: i / width,
                value: data[i],
            });
        }
        Ok(Self {
            width,
            height,
            data,
        })
    }

    pub fn width(&self) -> usize {
        self.width
    }
    pub fn height(&self) -> usize {
        self.height
    }
    pub fn data(&self) -> &[f64] {
        &self.data
    }
    pub fn get(&self, u: usize, v: usize) -> f64 {
        self.data[v * self.width + u]
    }
    pub fn is_valid(&self, u: usize, v: usize) -> bool {
        self.get(u, v) > 0.0
    }
    pub fn valid_count(&self) -> usize {
        self.data.iter().filter(|d| **d > 0.0).count()
    }
}

/// Row-major RGB image with channels in `[0, 1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct ColorImage {
    width: usize,
    height: usize,
    data: Vec<[f64; 3]>,
}

impl ColorImage {
    pub fn new(width: usize, height: usize, data: Vec<[f64; 3]>) -> Result<Self> {
        if data.len() != width * height {
            return Err(Error::DimensionMismatch(format!(
                "color has {} pixels, expected {width}x{height}",
                data.len()
            )));
        }
        if let Some(i) = data
            .iter()
            .position(|c| c.iter().any(|x| !(0.0..=1.0).contains(x)))
        {
            return Err(Error::DimensionMismatch(format!(
                "color at pixel ({}, {}) outside [0, 1]: {:?}",
                i % width,
                i / width,
                data[i]
            )));
        }
        Ok(Self {
            width,
            height,
            data,
        })
    }

    pub fn filled(width: usize, height: usize, color: [f64; 3]) -> Result<Self> {
        Self::new(width, height, vec![color; width * height])
    }

    pub fn width(&self) -> usize {
        self.width
    }
    pub fn height(&self) -> usize {
        self.height
    }
    pub fn data(&self) -> &[[f64; 3]] {
        &self.data
    }
    pub fn get(&self, u: usize, v: usize) -> [f64; 3] {
        self.data[v * self.width + u]
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RgbdFrame {
    color: ColorImage,
    depth: DepthMap,
    intrinsics: CameraIntrinsics,
}

impl RgbdFrame {
    pub fn new(color: ColorImage, depth: DepthMap, intrinsics: CameraIntrinsics) -> Result<Self> {
        let (w, h) = (intrinsics.width(), intrinsics.height());
        if color.width() != w || color.height() != h {
            return Err(Error::DimensionMismatch(format!(
                "color is {}x{}, intrinsics say {w}x{h}",
                color.width(),
                color.height()
            )));
        }
        if depth.width() != w || depth.height() != h {
            return Err(Error::DimensionMismatch(format!(
                "depth is {}x{}, intrinsics say {w}x{h}",
                depth.width(),
                depth.height()
            )));
        }
        Ok(Self {
            color,
            depth,
            intrinsics,
        })
    }

    pub fn color(&self) -> &ColorImage {
        &self.color
    }
    pub fn depth(&self) -> &DepthMap {
        &self.depth
    }
    pub fn intrinsics(&self) -> &CameraIntrinsics {
        &self.intrinsics
    }
    pub fn width(&self) -> usize {
        self.intrinsics.width()
    }
    pub fn height(&self) -> usize {
        self.intrinsics.height()
    }
}

/// Result of [`unproject`]: one entry per pixel in row-major order.
#[derive(Debug, Clone)]
pub struct Unprojection {
    /// Camera-frame positions; zero for pixels with missing depth.
    pub positions: Vec<Vector3<f64>>,
    pub valid: Vec<bool>,
    /// `(u, v)` of each entry.
    pub pixel_index: Vec<(usize, usize)>,
}

pub fn unproject(frame: &RgbdFrame) -> Unprojection {
    let k = frame.intrinsics();
    let n = k.num_pixels();
    let mut positions = Vec::with_capacity(n);
    let mut valid = Vec::with_capacity(n);
    let mut pixel_index = Vec::with_capacity(n);
    for v in 0..k.height() {
        for u in 0..k.width() {
            let d = frame.depth().get(u, v);
            if d > 0.0 {
                positions.push(Vector3::new(
                    (u as f64 - k.cx()) * d / k.fx(),
                    (v as f64 - k.cy()) * d / k.fy(),
                    d,
                ));
                valid.push(true);
            } else {
                positions.push(Vector3::zeros());
                valid.push(false);
            }
            pixel_index.push((u, v));
        }
    }
    Unprojection {
        positions,
        valid,
        pixel_index,
    }
}

#[derive(Debug, Clone)]
pub struct Projection {
    /// Continuous image coordinates; NaN for points with z <= 0.
    pub pixels: Vec<[f64; 2]>,
    pub depths: Vec<f64>,
    pub in_frustum: Vec<bool>,
}

pub fn project(points: &[Vector3<f64>], intrinsics: &CameraIntrinsics) -> Projection {
    let mut pixels = Vec::with_capacity(points.len());
    let mut depths = Vec::with_capacity(points.len());
    let mut in_frustum = Vec::with_capacity(points.len());
    for p in points {
        depths.push(p.z);
        if p.z > 0.0 {
            let x = intrinsics.fx() * p.x / p.z + intrinsics.cx();
            let y = intrinsics.fy() * p.y / p.z + intrinsics.cy();
            pixels.push([x, y]);
            in_frustum.push(intrinsics.pixel_containing(x, y).is_some());
        } else {
            pixels.push([f64::NAN, f64::NAN]);
            in_frustum.push(false);
        }
    }
    Projection {
        pixels,
        depths,
        in_frustum,
    }
}
