//! Browser demo: generate a synthetic pair, register it, and cross-render
//! one view under poses offset from the ground truth.

use nalgebra::Vector3;
use serde::Serialize;
use wasm_bindgen::prelude::*;

use rgbd_reg::alignment::weighted_error_with;
use rgbd_reg::evaluation::RegistrationReport;
use rgbd_reg::pipeline::{fit_pair, pair_chamfer, prepare_pair, render_and_score, PipelineConfig, PreparedPair};
use rgbd_reg::renderer::{LossReport, RenderMode, RenderOutput};
use rgbd_reg::synth::{generate_pair, GeneratedPair, SceneSpec};
use rgbd_reg::{ColorImage, Result, RigidTransform};

/// A generated pair with its descriptors and correspondences computed once.
#[wasm_bindgen]
pub struct Demo {
    pair: GeneratedPair,
    prepared: PreparedPair,
    config: PipelineConfig,
}

#[derive(Debug, Serialize)]
pub struct RegisterSummary {
    pub correspondences: usize,
    pub rot_err_deg: f64,
    pub trans_err_cm: f64,
    pub chamfer_cm: f64,
    pub losses: LossReport,
}

#[derive(Debug, Serialize)]
pub struct CurvePoint {
    pub offset_deg: f64,
    pub total: f64,
    pub photometric: f64,
    pub depth: f64,
    pub correspondence: f64,
}

fn js(e: rgbd_reg::Error) -> JsError {
    JsError::new(&e.to_string())
}

fn color_rgba(image: &ColorImage) -> Vec<u8> {
    image
        .data()
        .iter()
        .flat_map(|c| [channel(c[0]), channel(c[1]), channel(c[2]), 255])
        .collect()
}

/// Invalid pixels are drawn as a dark checkerboard so holes stand out.
fn render_rgba(render: &RenderOutput) -> Vec<u8> {
    let mut out = Vec::with_capacity(render.color.len() * 4);
    for (i, (c, valid)) in render.color.iter().zip(&render.valid).enumerate() {
        if *valid {
            out.extend([channel(c[0]), channel(c[1]), channel(c[2]), 255]);
        } else {
            let (u, v) = (i % render.width, i / render.width);
            let shade = if (u / 4 + v / 4) % 2 == 0 { 40 } else { 70 };
            out.extend([shade, shade, shade, 255]);
        }
    }
    out
}

fn channel(x: f64) -> u8 {
    (x.clamp(0.0, 1.0) * 255.0).round() as u8
}

/// Ground truth followed by a rotation of `offset_deg` about frame 1's
/// vertical axis.
fn offset_pose(gt: &RigidTransform, offset_deg: f64) -> RigidTransform {
    RigidTransform::from_axis_angle(Vector3::y(), offset_deg.to_radians(), Vector3::zeros()).compose(gt)
}

impl Demo {
    pub fn create(seed: u64, rot_deg: f64, trans_m: f64) -> Result<Demo> {
        let pair = generate_pair(&SceneSpec::room(seed, rot_deg, trans_m))?;
        let config = PipelineConfig {
            timing: false,
            ..PipelineConfig::default()
        };
        let prepared = prepare_pair(&pair.frame0, &pair.frame1, None, &config)?;
        Ok(Demo { pair, prepared, config })
    }

    pub fn run_registration(&self, subsets: usize, randomized: bool, seed: u64) -> Result<RegisterSummary> {
        let mut config = self.config.clone();
        config.fit.num_subsets = subsets;
        config.fit.use_randomization = randomized;
        config.fit.rng_seed = seed;
        config.validate()?;
        let fit = fit_pair(&self.prepared, &config)?;
        let gt = &self.pair.relative_pose;
        let chamfer = pair_chamfer(&self.prepared, &fit.transform, gt, &config)?;
        let report = RegistrationReport::from_poses(&fit.transform, gt, chamfer);
        let (_, losses) = render_and_score(
            &self.prepared,
            &self.pair.frame0,
            &self.pair.frame1,
            &fit.transform,
            fit.full_set_weighted_error,
            &config,
        )?;
        Ok(RegisterSummary {
            correspondences: self.prepared.correspondences.len(),
            rot_err_deg: report.rot_err_deg,
            trans_err_cm: report.trans_err_cm,
            chamfer_cm: report.chamfer_cm,
            losses,
        })
    }

    pub fn render_at_offset(&self, offset_deg: f64, joint: bool) -> Result<(RenderOutput, LossReport)> {
        let mut config = self.config.clone();
        config.render_mode = if joint { RenderMode::Joint } else { RenderMode::Cross };
        let pose = offset_pose(&self.pair.relative_pose, offset_deg);
        let corr = weighted_error_with(&self.prepared.correspondences, &pose, config.fit.normalization)?;
        let ((_, view1), losses) =
            render_and_score(&self.prepared, &self.pair.frame0, &self.pair.frame1, &pose, corr, &config)?;
        Ok((view1, losses))
    }

    pub fn curve(&self, max_deg: f64, steps: usize, joint: bool) -> Result<Vec<CurvePoint>> {
        let steps = steps.max(2);
        (0..steps)
            .map(|i| {
                let offset_deg = -max_deg + 2.0 * max_deg * i as f64 / (steps - 1) as f64;
                let (_, l) = self.render_at_offset(offset_deg, joint)?;
                Ok(CurvePoint {
                    offset_deg,
                    total: l.total,
                    photometric: l.photometric,
                    depth: l.depth,
                    correspondence: l.correspondence,
                })
            })
            .collect()
    }
}

#[wasm_bindgen]
impl Demo {
    /// Generates a room scene and matches its two views.
    #[wasm_bindgen(constructor)]
    pub fn new(seed: u32, rot_deg: f64, trans_m: f64) -> std::result::Result<Demo, JsError> {
        Demo::create(seed.into(), rot_deg, trans_m).map_err(js)
    }

    pub fn width(&self) -> usize {
        self.pair.frame0.width()
    }

    pub fn height(&self) -> usize {
        self.pair.frame0.height()
    }

    /// RGBA bytes of input view 0 or 1.
    pub fn frame_rgba(&self, view: usize) -> Vec<u8> {
        let frame = if view == 0 { &self.pair.frame0 } else { &self.pair.frame1 };
        color_rgba(frame.color())
    }

    /// Registers the pair and returns errors and losses as JSON.
    pub fn register(&self, subsets: usize, randomized: bool, seed: u32) -> std::result::Result<String, JsError> {
        let summary = self.run_registration(subsets, randomized, seed.into()).map_err(js)?;
        Ok(serde_json::to_string(&summary).expect("summary serializes"))
    }

    /// RGBA of view 1 rendered from view 0's points under the ground truth
    /// rotated by `offset_deg`.
    pub fn render_offset(&self, offset_deg: f64, joint: bool) -> std::result::Result<Vec<u8>, JsError> {
        let (render, _) = self.render_at_offset(offset_deg, joint).map_err(js)?;
        Ok(render_rgba(&render))
    }

    /// Loss terms at one offset, as JSON.
    pub fn loss_at(&self, offset_deg: f64, joint: bool) -> std::result::Result<String, JsError> {
        let (_, losses) = self.render_at_offset(offset_deg, joint).map_err(js)?;
        Ok(serde_json::to_string(&losses).expect("losses serialize"))
    }

    /// Loss terms at `steps` offsets evenly spaced in `[-max_deg, max_deg]`, as JSON.
    pub fn loss_curve(&self, max_deg: f64, steps: usize, joint: bool) -> std::result::Result<String, JsError> {
        let points = self.curve(max_deg, steps, joint).map_err(js)?;
        Ok(serde_json::to_string(&points).expect("curve serializes"))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn demo() -> Demo {
        Demo::create(7, 10.0, 0.2).unwrap()
    }

    #[test]
    fn frames_have_one_rgba_quad_per_pixel() {
        let d = demo();
        let n = d.width() * d.height();
        assert_eq!(d.frame_rgba(0).len(), 4 * n);
        assert_eq!(d.frame_rgba(1).len(), 4 * n);
        assert_ne!(d.frame_rgba(0), d.frame_rgba(1));
    }

    #[test]
    fn registration_is_accurate() {
        let s = demo().run_registration(100, true, 0).unwrap();
        assert_eq!(s.correspondences, 400);
        assert!(s.rot_err_deg < 2.0, "{s:?}");
        assert!(s.trans_err_cm < 5.0, "{s:?}");
    }

    #[test]
    fn cross_loss_is_lowest_near_the_true_pose() {
        let d = demo();
        let curve = d.curve(10.0, 11, false).unwrap();
        let best = curve.iter().min_by(|a, b| a.total.total_cmp(&b.total)).unwrap();
        assert!(best.offset_deg.abs() <= 2.0, "minimum at {}", best.offset_deg);
        assert!(curve[0].total > best.total && curve[10].total > best.total);
    }

    #[test]
    fn render_marks_holes() {
        let d = demo();
        let (render, _) = d.render_at_offset(0.0, false).unwrap();
        let rgba = render_rgba(&render);
        assert_eq!(rgba.len(), 4 * render.width * render.height);
        assert!(render.valid_count() > render.width * render.height / 2);
    }

    #[test]
    fn offset_zero_is_the_ground_truth() {
        let d = demo();
        let p = offset_pose(&d.pair.relative_pose, 0.0);
        assert_eq!(p.to_row_major_3x4(), d.pair.relative_pose.to_row_major_3x4());
    }
}
