//! Z-buffered point splatting and the masked consistency losses.

use serde::{Deserialize, Serialize};

use crate::descriptor::FeaturePointCloud;
use crate::error::{Error, Result};
use crate::geometry::{CameraIntrinsics, RgbdFrame, RigidTransform};

/// Depth differences below this are ties; the lower point index keeps the pixel.
pub const DEPTH_TIE_EPS: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
pub enum RenderMode {
    /// Each view is rendered only from the other frame's points.
    #[default]
    Cross,
    /// Each view is rendered from the union of both clouds.
    Joint,
}

impl std::str::FromStr for RenderMode {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "cross" => Ok(RenderMode::Cross),
            "joint" => Ok(RenderMode::Joint),
            other => Err(Error::Config(format!("unknown render mode '{other}'"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RenderOutput {
    pub width: usize,
    pub height: usize,
    pub color: Vec<[f64; 3]>,
    pub depth: Vec<f64>,
    pub valid: Vec<bool>,
}

impl RenderOutput {
    pub fn blank(width: usize, height: usize) -> Self {
        Self {
            width,
            height,
            color: vec![[0.0; 3]; width * height],
            depth: vec![0.0; width * height],
            valid: vec![false; width * height],
        }
    }

    pub fn valid_count(&self) -> usize {
        self.valid.iter().filter(|v| **v).count()
    }
}

/// Renders the valid points of `cloud` after mapping them through `view`
/// (cloud coordinates into the rendering camera's frame). Each point covers
/// the `(2r+1)^2` pixels around the pixel containing its projection; the
/// nearest point wins each pixel.
pub fn splat_render(
    cloud: &FeaturePointCloud,
    view: &RigidTransform,
    intrinsics: &CameraIntrinsics,
    splat_radius: usize,
) -> RenderOutput {
    let (w, h) = (intrinsics.width(), intrinsics.height());
    let mut out = RenderOutput::blank(w, h);
    let r = splat_radius as isize;
    for i in 0..cloud.len() {
        if !cloud.valid[i] {
            continue;
        }
        let p = view.apply(&cloud.positions[i]);
        if p.z <= 0.0 {
            continue;
        }
        let x = intrinsics.fx() * p.x / p.z + intrinsics.cx();
        let y = intrinsics.fy() * p.y / p.z + intrinsics.cy();
        let Some((u, v)) = intrinsics.pixel_containing(x, y) else {
            continue;
        };
        for dv in -r..=r {
            for du in -r..=r {
                let (pu, pv) = (u as isize + du, v as isize + dv);
                if pu < 0 || pv < 0 || pu >= w as isize || pv >= h as isize {
                    continue;
                }
                let idx = pv as usize * w + pu as usize;
                if !out.valid[idx] || p.z < out.depth[idx] - DEPTH_TIE_EPS {
                    out.valid[idx] = true;
                    out.depth[idx] = p.z;
                    out.color[idx] = cloud.colors[i];
                }
            }
        }
    }
    out
}

/// Renders view 1 (P's camera) and view 2 (Q's camera). `p_to_q` maps P's
/// camera coordinates into Q's.
pub fn cross_render(
    p: &FeaturePointCloud,
    q: &FeaturePointCloud,
    p_to_q: &RigidTransform,
    intrinsics: &CameraIntrinsics,
    mode: RenderMode,
    splat_radius: usize,
) -> Result<(RenderOutput, RenderOutput)> {
    let q_to_p = p_to_q.inverse();
    match mode {
        RenderMode::Cross => Ok((
            splat_render(q, &q_to_p, intrinsics, splat_radius),
            splat_render(p, p_to_q, intrinsics, splat_radius),
        )),
        RenderMode::Joint => {
            // Both clouds expressed in P's frame, then viewed from each camera.
            let joint = p.union(&q.transformed(&q_to_p))?;
            Ok((
                splat_render(&joint, &RigidTransform::identity(), intrinsics, splat_radius),
                splat_render(&joint, p_to_q, intrinsics, splat_radius),
            ))
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LossWeights {
    pub photometric: f64,
    pub depth: f64,
    pub correspondence: f64,
}

impl Default for LossWeights {
    fn default() -> Self {
        Self {
            photometric: 1.0,
            depth: 1.0,
            correspondence: 0.1,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LossReport {
    /// Mean absolute color difference per channel per valid pixel.
    pub photometric: f64,
    /// Mean absolute depth difference in meters.
    pub depth: f64,
    pub correspondence: f64,
    pub total: f64,
    /// Pixels that entered the photometric term, per view.
    pub valid_pixel_counts: [usize; 2],
    /// Set when a term had no pixels and was defined as 0.
    pub zero_coverage: bool,
}

/// Masked L1 losses pooled over both views, plus the weighted total.
pub fn consistency_losses(
    renders: [&RenderOutput; 2],
    inputs: [&RgbdFrame; 2],
    correspondence_error: f64,
    weights: &LossWeights,
) -> Result<LossReport> {
    let mut color_sum = 0.0;
    let mut color_pixels = 0usize;
    let mut depth_sum = 0.0;
    let mut depth_pixels = 0usize;
    let mut counts = [0usize; 2];
    for (view, (render, frame)) in renders.iter().zip(inputs.iter()).enumerate() {
        if render.width != frame.width() || render.height != frame.height() {
            return Err(Error::DimensionMismatch(format!(
                "render {}x{} vs input {}x{}",
                render.width,
                render.height,
                frame.width(),
                frame.height()
            )));
        }
        let color = frame.color().data();
        let depth = frame.depth().data();
        for i in 0..render.valid.len() {
            if !render.valid[i] {
                continue;
            }
            counts[view] += 1;
            color_pixels += 1;
            color_sum += render.color[i]
                .iter()
                .zip(&color[i])
                .map(|(a, b)| (a - b).abs())
                .sum::<f64>();
            if depth[i] > 0.0 {
                depth_pixels += 1;
                depth_sum += (render.depth[i] - depth[i]).abs();
            }
        }
    }
    let photometric = if color_pixels > 0 {
        color_sum / (3 * color_pixels) as f64
    } else {
        0.0
    };
    let depth = if depth_pixels > 0 {
        depth_sum / depth_pixels as f64
    } else {
        0.0
    };
    let zero_coverage = color_pixels == 0 || depth_pixels == 0;
    if zero_coverage {
        log::warn!("consistency loss has no valid pixels in at least one term");
    }
    let total = weights.photometric * photometric
        + weights.depth * depth
        + weights.correspondence * correspondence_error;
    Ok(LossReport {
        photometric,
        depth,
        correspondence: correspondence_error,
        total,
        valid_pixel_counts: counts,
        zero_coverage,
    })
}
