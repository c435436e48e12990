//! On-disk RGB-D pairs, poses, intrinsics and rendered views.
//!
//! A pair directory holds `0/` and `1/`, each with `color.png` (8-bit RGB),
//! `depth.png` (16-bit, millimeters, 0 = missing), `intrinsics.txt`
//! (`fx fy cx cy width height`) and an optional `pose.txt` (row-major 3x4
//! camera-to-world, meters).

use std::fs;
use std::path::{Path, PathBuf};

use image::{DynamicImage, GrayImage, ImageBuffer, Luma, RgbImage};
use serde::Serialize;

use crate::error::{Error, Result};
use crate::geometry::{CameraIntrinsics, ColorImage, DepthMap, RgbdFrame, RigidTransform};
use crate::renderer::RenderOutput;

pub const COLOR_FILE: &str = "color.png";
pub const DEPTH_FILE: &str = "depth.png";
pub const INTRINSICS_FILE: &str = "intrinsics.txt";
pub const POSE_FILE: &str = "pose.txt";
pub const META_FILE: &str = "meta.json";

const MM_PER_M: f64 = 1000.0;

fn to_u8(x: f64) -> u8 {
    (x.clamp(0.0, 1.0) * 255.0).round() as u8
}

fn depth_to_mm(path: &Path, d: f64) -> Result<u16> {
    let mm = (d * MM_PER_M).round();
    if mm > f64::from(u16::MAX) {
        return Err(Error::save(path, format!("depth {d} m exceeds the 16-bit millimeter range")));
    }
    Ok(mm as u16)
}

pub fn save_color_png(path: &Path, image: &ColorImage) -> Result<()> {
    let (w, h) = (image.width() as u32, image.height() as u32);
    let buf = RgbImage::from_fn(w, h, |u, v| {
        let c = image.get(u as usize, v as usize);
        image::Rgb([to_u8(c[0]), to_u8(c[1]), to_u8(c[2])])
    });
    buf.save(path).map_err(|e| Error::save(path, e))
}

pub fn load_color_png(path: &Path) -> Result<ColorImage> {
    let img = image::open(path).map_err(|e| Error::load(path, e))?;
    let rgb = match img {
        DynamicImage::ImageRgb8(rgb) => rgb,
        other => {
            log::warn!("{}: converting {:?} to 8-bit RGB", path.display(), other.color());
            other.to_rgb8()
        }
    };
    let data = rgb
        .pixels()
        .map(|p| p.0.map(|c| f64::from(c) / 255.0))
        .collect();
    ColorImage::new(rgb.width() as usize, rgb.height() as usize, data)
}

/// Writes depth in millimeters, rounding to the nearest millimeter.
pub fn save_depth_png(path: &Path, depth: &DepthMap) -> Result<()> {
    let (w, h) = (depth.width(), depth.height());
    let mut raw = Vec::with_capacity(w * h);
    for d in depth.data() {
        raw.push(depth_to_mm(path, *d)?);
    }
    let buf: ImageBuffer<Luma<u16>, Vec<u16>> = ImageBuffer::from_raw(w as u32, h as u32, raw)
        .ok_or_else(|| Error::save(path, "depth buffer size mismatch"))?;
    buf.save(path).map_err(|e| Error::save(path, e))
}

pub fn load_depth_png(path: &Path) -> Result<DepthMap> {
    let img = image::open(path).map_err(|e| Error::load(path, e))?;
    let DynamicImage::ImageLuma16(buf) = img else {
        return Err(Error::load(
            path,
            format!("expected a 16-bit single-channel PNG, found {:?}", img.color()),
        ));
    };
    let data = buf.pixels().map(|p| f64::from(p.0[0]) / MM_PER_M).collect();
    DepthMap::new(buf.width() as usize, buf.height() as usize, data)
}

fn parse_reals(path: &Path, text: &str, expected: usize) -> Result<Vec<f64>> {
    let values: Vec<f64> = text
        .split_whitespace()
        .map(|tok| {
            tok.parse::<f64>()
                .map_err(|_| Error::load(path, format!("not a number: {tok:?}")))
        })
        .collect::<Result<_>>()?;
    if values.len() != expected {
        return Err(Error::load(
            path,
            format!("expected {expected} values, found {}", values.len()),
        ));
    }
    Ok(values)
}

pub fn read_intrinsics(path: &Path) -> Result<CameraIntrinsics> {
    let text = fs::read_to_string(path).map_err(|e| Error::load(path, e))?;
    let v = parse_reals(path, &text, 6)?;
    for (name, x) in [("width", v[4]), ("height", v[5])] {
        if x.fract() != 0.0 || x < 1.0 {
            return Err(Error::load(path, format!("{name} must be a positive integer, got {x}")));
        }
    }
    CameraIntrinsics::new(v[0], v[1], v[2], v[3], v[4] as usize, v[5] as usize)
}

pub fn write_intrinsics(path: &Path, k: &CameraIntrinsics) -> Result<()> {
    let text = format!(
        "{} {} {} {} {} {}\n",
        k.fx(),
        k.fy(),
        k.cx(),
        k.cy(),
        k.width(),
        k.height()
    );
    fs::write(path, text).map_err(|e| Error::save(path, e))
}

pub fn read_pose(path: &Path) -> Result<RigidTransform> {
    let text = fs::read_to_string(path).map_err(|e| Error::load(path, e))?;
    let v = parse_reals(path, &text, 12)?;
    let values: [f64; 12] = v.try_into().expect("length checked");
    RigidTransform::from_row_major_3x4(&values).map_err(|e| Error::load(path, e))
}

/// Three rows of four values. `{:?}` prints the shortest string that parses
/// back to the same f64, so the round trip is exact.
pub fn write_pose(path: &Path, pose: &RigidTransform) -> Result<()> {
    let m = pose.to_row_major_3x4();
    let text: String = m
        .chunks(4)
        .map(|row| {
            let cells: Vec<String> = row.iter().map(|x| format!("{x:?}")).collect();
            cells.join(" ") + "\n"
        })
        .collect();
    fs::write(path, text).map_err(|e| Error::save(path, e))
}

/// Loads one view directory; the pose is `None` when `pose.txt` is absent.
pub fn load_frame(dir: &Path) -> Result<(RgbdFrame, Option<RigidTransform>)> {
    let intrinsics = read_intrinsics(&dir.join(INTRINSICS_FILE))?;
    let color = load_color_png(&dir.join(COLOR_FILE))?;
    let depth = load_depth_png(&dir.join(DEPTH_FILE))?;
    let frame = RgbdFrame::new(color, depth, intrinsics)
        .map_err(|e| Error::load(dir, e))?;
    let pose_path = dir.join(POSE_FILE);
    let pose = if pose_path.exists() {
        Some(read_pose(&pose_path)?)
    } else {
        None
    };
    Ok((frame, pose))
}

pub fn save_frame(dir: &Path, frame: &RgbdFrame, pose: Option<&RigidTransform>) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::save(dir, e))?;
    save_color_png(&dir.join(COLOR_FILE), frame.color())?;
    save_depth_png(&dir.join(DEPTH_FILE), frame.depth())?;
    write_intrinsics(&dir.join(INTRINSICS_FILE), frame.intrinsics())?;
    if let Some(pose) = pose {
        write_pose(&dir.join(POSE_FILE), pose)?;
    }
    Ok(())
}

#[derive(Debug, Clone)]
pub struct LoadedPair {
    pub frame0: RgbdFrame,
    pub frame1: RgbdFrame,
    /// `inverse(pose1) ∘ pose0` when both poses are present.
    pub ground_truth: Option<RigidTransform>,
}

pub fn load_pair(dir: &Path) -> Result<LoadedPair> {
    if !dir.is_dir() {
        return Err(Error::load(dir, "not a directory"));
    }
    let (frame0, pose0) = load_frame(&dir.join("0"))?;
    let (frame1, pose1) = load_frame(&dir.join("1"))?;
    let ground_truth = match (pose0, pose1) {
        (Some(p0), Some(p1)) => Some(p1.inverse().compose(&p0)),
        _ => None,
    };
    Ok(LoadedPair {
        frame0,
        frame1,
        ground_truth,
    })
}

pub fn save_pair(
    dir: &Path,
    frame0: &RgbdFrame,
    frame1: &RgbdFrame,
    poses: Option<(&RigidTransform, &RigidTransform)>,
) -> Result<()> {
    save_frame(&dir.join("0"), frame0, poses.map(|p| p.0))?;
    save_frame(&dir.join("1"), frame1, poses.map(|p| p.1))
}

/// Subdirectories of `dataset` that look like pair directories, sorted by name.
pub fn list_pairs(dataset: &Path) -> Result<Vec<PathBuf>> {
    let entries = fs::read_dir(dataset).map_err(|e| Error::load(dataset, e))?;
    let mut dirs = Vec::new();
    for entry in entries {
        let path = entry.map_err(|e| Error::load(dataset, e))?.path();
        if path.join("0").is_dir() && path.join("1").is_dir() {
            dirs.push(path);
        }
    }
    dirs.sort();
    Ok(dirs)
}

pub fn write_json<T: Serialize + ?Sized>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value).map_err(|e| Error::save(path, e))?;
    text.push('\n');
    fs::write(path, text).map_err(|e| Error::save(path, e))
}

/// Writes `<prefix>_color.png`, `<prefix>_depth.png` (16-bit mm) and
/// `<prefix>_valid.png` (255 where a point landed) into `dir`.
pub fn save_render(dir: &Path, prefix: &str, render: &RenderOutput) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::save(dir, e))?;
    let (w, h) = (render.width, render.height);
    let color = ColorImage::new(w, h, render.color.clone())?;
    save_color_png(&dir.join(format!("{prefix}_color.png")), &color)?;
    let depth = DepthMap::new(w, h, render.depth.clone())?;
    save_depth_png(&dir.join(format!("{prefix}_depth.png")), &depth)?;
    let valid_path = dir.join(format!("{prefix}_valid.png"));
    let mask = GrayImage::from_fn(w as u32, h as u32, |u, v| {
        Luma([if render.valid[v as usize * w + u as usize] { 255 } else { 0 }])
    });
    mask.save(&valid_path).map_err(|e| Error::save(&valid_path, e))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::synth::{generate_pair, SceneSpec};

    #[test]
    fn pair_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let pair = generate_pair(&SceneSpec::room(3, 8.0, 0.1)).unwrap();
        save_pair(dir.path(), &pair.frame0, &pair.frame1, Some((&pair.pose0, &pair.pose1))).unwrap();
        let loaded = load_pair(dir.path()).unwrap();

        for (a, b) in [(&pair.frame0, &loaded.frame0), (&pair.frame1, &loaded.frame1)] {
            assert_eq!(a.intrinsics(), b.intrinsics());
            for (x, y) in a.depth().data().iter().zip(b.depth().data()) {
                assert!((x - y).abs() <= 0.0005 + 1e-12);
            }
            for (x, y) in a.color().data().iter().zip(b.color().data()) {
                for c in 0..3 {
                    assert!((x[c] - y[c]).abs() <= 0.5 / 255.0 + 1e-12);
                }
            }
        }
        let gt = loaded.ground_truth.unwrap();
        let diff = gt.inverse().compose(&pair.relative_pose);
        assert!(diff.rotation_angle() < 1e-6);
        assert!(diff.translation().norm() < 1e-6);
    }

    #[test]
    fn missing_depth_names_the_file() {
        let dir = tempfile::tempdir().unwrap();
        let pair = generate_pair(&SceneSpec::room(4, 0.0, 0.0)).unwrap();
        save_pair(dir.path(), &pair.frame0, &pair.frame1, None).unwrap();
        fs::remove_file(dir.path().join("1").join(DEPTH_FILE)).unwrap();
        let err = load_pair(dir.path()).unwrap_err().to_string();
        assert!(err.contains("depth.png"), "{err}");
    }

    #[test]
    fn no_pose_files_means_no_ground_truth() {
        let dir = tempfile::tempdir().unwrap();
        let pair = generate_pair(&SceneSpec::room(5, 5.0, 0.1)).unwrap();
        save_pair(dir.path(), &pair.frame0, &pair.frame1, None).unwrap();
        assert!(load_pair(dir.path()).unwrap().ground_truth.is_none());
    }

    #[test]
    fn pose_text_round_trip_is_exact() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join(POSE_FILE);
        let t = RigidTransform::from_axis_angle(
            nalgebra::Vector3::new(0.3, -1.0, 0.2),
            0.7,
            nalgebra::Vector3::new(0.1, 0.25, -3.0),
        );
        write_pose(&path, &t).unwrap();
        assert_eq!(read_pose(&path).unwrap(), t);
    }

    #[test]
    fn malformed_intrinsics() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join(INTRINSICS_FILE);
        fs::write(&path, "500 500 320 240 640").unwrap();
        assert!(read_intrinsics(&path).is_err());
        fs::write(&path, "500 500 320 240 640.5 480").unwrap();
        assert!(read_intrinsics(&path).is_err());
        fs::write(&path, "500 500 320 240 640 480\n").unwrap();
        assert_eq!(read_intrinsics(&path).unwrap().width(), 640);
    }

    #[test]
    fn eight_bit_depth_is_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join(DEPTH_FILE);
        GrayImage::new(4, 3).save(&path).unwrap();
        assert!(load_depth_png(&path).is_err());
    }

    #[test]
    fn depth_beyond_range_is_an_error() {
        let dir = tempfile::tempdir().unwrap();
        let depth = DepthMap::new(1, 1, vec![70.0]).unwrap();
        assert!(save_depth_png(&dir.path().join("d.png"), &depth).is_err());
    }

    #[test]
    fn render_files() {
        let dir = tempfile::tempdir().unwrap();
        let mut r = RenderOutput::blank(3, 2);
        r.valid[1] = true;
        r.depth[1] = 1.234;
        r.color[1] = [1.0, 0.5, 0.0];
        save_render(dir.path(), "view1", &r).unwrap();
        for f in ["view1_color.png", "view1_depth.png", "view1_valid.png"] {
            assert!(dir.path().join(f).exists(), "{f}");
        }
        let d = load_depth_png(&dir.path().join("view1_depth.png")).unwrap();
        assert!((d.get(1, 0) - 1.234).abs() < 1e-12);
    }
}
