//! End-to-end registration: descriptors, matching, fitting, rendering and
//! evaluation, plus the subset-count benchmark.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::Serialize;
use web_time::Instant;

use crate::alignment::{randomized_fit, ErrorNormalization, FitConfig, FitResult};
use crate::correspondence::{extract_correspondences, CorrespondenceSet, WeightMode, DEFAULT_TOP_K};
use crate::descriptor::{
    build_feature_cloud, extract_features, load_feature_map, DescriptorConfig, FeatureMap,
    FeaturePointCloud,
};
use crate::error::{Error, Result};
use crate::evaluation::{
    mean, median, reconstruction_chamfer, RegistrationReport, DEFAULT_CHAMFER_MAX_POINTS,
};
use crate::geometry::{RgbdFrame, RigidTransform};
use crate::par;
use crate::renderer::{consistency_losses, cross_render, LossReport, LossWeights, RenderMode, RenderOutput};
use crate::synth::plant_duplicate_features;

pub const DEFAULT_SUBSET_SWEEP: [usize; 6] = [5, 10, 20, 50, 100, 200];
pub const MIN_BENCHMARK_PAIRS: usize = 10;

/// Where per-pixel features come from.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub enum DescriptorChoice {
    /// Built-in patch and gradient-histogram descriptor.
    #[default]
    Patch,
    /// Precomputed maps `0.fmap` and `1.fmap` in a directory.
    File(PathBuf),
}

impl FromStr for DescriptorChoice {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        if s == "patch" {
            Ok(Self::Patch)
        } else if let Some(path) = s.strip_prefix("file:") {
            if path.is_empty() {
                return Err(Error::Config("descriptor 'file:' needs a directory".into()));
            }
            Ok(Self::File(PathBuf::from(path)))
        } else {
            Err(Error::Config(format!(
                "unknown descriptor '{s}' (expected 'patch' or 'file:<dir>')"
            )))
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PipelineConfig {
    pub descriptor: DescriptorChoice,
    pub descriptor_config: DescriptorConfig,
    /// Total correspondences kept, half from each direction.
    pub top_k: usize,
    /// Also carries the run seed.
    pub fit: FitConfig,
    pub render_mode: RenderMode,
    pub ratio_test: bool,
    pub loss_weights: LossWeights,
    pub splat_radius: usize,
    pub chamfer_max_points: usize,
    /// Record stage timings in reports. Off makes reports byte-reproducible.
    pub timing: bool,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self {
            descriptor: DescriptorChoice::Patch,
            descriptor_config: DescriptorConfig::default(),
            top_k: DEFAULT_TOP_K,
            fit: FitConfig::inference(),
            render_mode: RenderMode::Cross,
            ratio_test: true,
            loss_weights: LossWeights::default(),
            splat_radius: 0,
            chamfer_max_points: DEFAULT_CHAMFER_MAX_POINTS,
            timing: true,
        }
    }
}

fn parse_value<T: FromStr>(key: &str, value: &str) -> Result<T> {
    value
        .parse()
        .map_err(|_| Error::Config(format!("bad value for '{key}': {value:?}")))
}

fn parse_bool(key: &str, value: &str) -> Result<bool> {
    match value {
        "true" | "1" | "yes" | "on" => Ok(true),
        "false" | "0" | "no" | "off" => Ok(false),
        _ => Err(Error::Config(format!("bad boolean for '{key}': {value:?}"))),
    }
}

impl PipelineConfig {
    pub fn seed(&self) -> u64 {
        self.fit.rng_seed
    }

    pub fn weight_mode(&self) -> WeightMode {
        if self.ratio_test {
            WeightMode::RatioTest
        } else {
            WeightMode::FeatureDistance
        }
    }

    /// Sets one option by its config-file key.
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        match key {
            "descriptor" => self.descriptor = value.parse()?,
            "feature_dim" => self.descriptor_config.feature_dim = parse_value(key, value)?,
            "projection_seed" => self.descriptor_config.projection_seed = parse_value(key, value)?,
            "k" | "top_k" => self.top_k = parse_value(key, value)?,
            "subsets" => self.fit.num_subsets = parse_value(key, value)?,
            "subset_size" => self.fit.subset_size = parse_value(key, value)?,
            "seed" => self.fit.rng_seed = parse_value(key, value)?,
            "randomized" => self.fit.use_randomization = parse_bool(key, value)?,
            "normalization" => {
                self.fit.normalization = match value {
                    "count" => ErrorNormalization::Count,
                    "weight_sum" => ErrorNormalization::WeightSum,
                    _ => return Err(Error::Config(format!("bad normalization {value:?}"))),
                }
            }
            "ratio_test" => self.ratio_test = parse_bool(key, value)?,
            "render_mode" => self.render_mode = value.parse()?,
            "loss_photometric" => self.loss_weights.photometric = parse_value(key, value)?,
            "loss_depth" => self.loss_weights.depth = parse_value(key, value)?,
            "loss_correspondence" => self.loss_weights.correspondence = parse_value(key, value)?,
            "splat_radius" => self.splat_radius = parse_value(key, value)?,
            "chamfer_max_points" => self.chamfer_max_points = parse_value(key, value)?,
            "timing" => self.timing = parse_bool(key, value)?,
            _ => return Err(Error::Config(format!("unknown config key '{key}'"))),
        }
        Ok(())
    }

    /// Applies `key = value` lines. `#` starts a comment; blank lines are skipped.
    pub fn apply_text(&mut self, text: &str) -> Result<()> {
        for (n, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line.split_once('=').ok_or_else(|| {
                Error::Config(format!("line {}: expected key = value, got {raw:?}", n + 1))
            })?;
            self.set(key.trim(), value.trim())
                .map_err(|e| Error::Config(format!("line {}: {e}", n + 1)))?;
        }
        Ok(())
    }

    pub fn apply_file(&mut self, path: &Path) -> Result<()> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::load(path, e))?;
        self.apply_text(&text).map_err(|e| Error::load(path, e))
    }

    pub fn validate(&self) -> Result<()> {
        self.descriptor_config.validate()?;
        if self.top_k == 0 || !self.top_k.is_multiple_of(2) {
            return Err(Error::Config(format!("k must be a positive even number, got {}", self.top_k)));
        }
        let w = &self.loss_weights;
        if [w.photometric, w.depth, w.correspondence].iter().any(|x| !x.is_finite() || *x < 0.0) {
            return Err(Error::Config("loss weights must be finite and non-negative".into()));
        }
        if self.chamfer_max_points == 0 {
            return Err(Error::Config("chamfer_max_points must be positive".into()));
        }
        Ok(())
    }
}

fn in_stage<T>(stage: &'static str, r: Result<T>) -> Result<T> {
    r.map_err(|e| Error::Stage {
        stage,
        source: Box::new(e),
    })
}

struct Stopwatch {
    enabled: bool,
    times: BTreeMap<String, f64>,
}

impl Stopwatch {
    fn new(enabled: bool) -> Self {
        Self {
            enabled,
            times: BTreeMap::new(),
        }
    }

    fn run<T>(&mut self, stage: &str, f: impl FnOnce() -> T) -> T {
        let start = Instant::now();
        let out = f();
        if self.enabled {
            *self.times.entry(stage.to_string()).or_insert(0.0) += start.elapsed().as_secs_f64() * 1e3;
        }
        out
    }
}

/// Features for view `view` (0 or 1) of a pair, per the configured descriptor.
pub fn compute_features(frame: &RgbdFrame, view: usize, config: &PipelineConfig) -> Result<FeatureMap> {
    match &config.descriptor {
        DescriptorChoice::Patch => extract_features(frame.color(), &config.descriptor_config),
        DescriptorChoice::File(dir) => load_feature_map(
            &dir.join(format!("{view}.fmap")),
            (frame.width(), frame.height(), config.descriptor_config.feature_dim),
        ),
    }
}

/// Clouds and correspondences of a pair: everything upstream of the fit.
#[derive(Debug, Clone)]
pub struct PreparedPair {
    pub cloud0: FeaturePointCloud,
    pub cloud1: FeaturePointCloud,
    /// `source` in frame 1, `target` in frame 0, so a fit maps frame 0 into frame 1.
    pub correspondences: CorrespondenceSet,
    pub time_ms: BTreeMap<String, f64>,
}

/// Builds clouds and correspondences. `features` overrides the configured
/// descriptor when given.
pub fn prepare_pair(
    frame0: &RgbdFrame,
    frame1: &RgbdFrame,
    features: Option<[&FeatureMap; 2]>,
    config: &PipelineConfig,
) -> Result<PreparedPair> {
    config.validate()?;
    let mut clock = Stopwatch::new(config.timing);
    let maps = clock.run("descriptor", || -> Result<_> {
        Ok(match features {
            Some([a, b]) => [a.clone(), b.clone()],
            None => [compute_features(frame0, 0, config)?, compute_features(frame1, 1, config)?],
        })
    });
    let maps = in_stage("descriptor", maps)?;
    let clouds = clock.run("descriptor", || -> Result<_> {
        Ok((build_feature_cloud(frame0, &maps[0])?, build_feature_cloud(frame1, &maps[1])?))
    });
    let (cloud0, cloud1) = in_stage("descriptor", clouds)?;
    let correspondences = clock.run("correspondence", || {
        extract_correspondences(&cloud1, &cloud0, config.top_k, config.weight_mode())
    });
    let correspondences = in_stage("correspondence", correspondences)?;
    Ok(PreparedPair {
        cloud0,
        cloud1,
        correspondences,
        time_ms: clock.times,
    })
}

pub fn fit_pair(prepared: &PreparedPair, config: &PipelineConfig) -> Result<FitResult> {
    in_stage("alignment", randomized_fit(&prepared.correspondences, &config.fit))
}

#[derive(Debug, Clone)]
pub struct RegistrationOutcome {
    /// Predicted transform mapping frame-0 camera coordinates into frame 1.
    pub transform: RigidTransform,
    pub fit: FitResult,
    pub correspondences: CorrespondenceSet,
    pub losses: LossReport,
    /// View 0 rendered from frame 1's points and view 1 from frame 0's (or
    /// both from the union in joint mode).
    pub renders: (RenderOutput, RenderOutput),
    /// Present when a ground-truth pose was supplied.
    pub report: Option<RegistrationReport>,
    pub time_ms: BTreeMap<String, f64>,
}

/// Renders both views under `transform` and scores them against the inputs.
pub fn render_and_score(
    prepared: &PreparedPair,
    frame0: &RgbdFrame,
    frame1: &RgbdFrame,
    transform: &RigidTransform,
    correspondence_error: f64,
    config: &PipelineConfig,
) -> Result<((RenderOutput, RenderOutput), LossReport)> {
    if frame0.intrinsics() != frame1.intrinsics() {
        log::warn!("frames have different intrinsics; rendering with frame 0's");
    }
    let renders = in_stage(
        "render",
        cross_render(
            &prepared.cloud0,
            &prepared.cloud1,
            transform,
            frame0.intrinsics(),
            config.render_mode,
            config.splat_radius,
        ),
    )?;
    let losses = in_stage(
        "render",
        consistency_losses(
            [&renders.0, &renders.1],
            [frame0, frame1],
            correspondence_error,
            &config.loss_weights,
        ),
    )?;
    Ok((renders, losses))
}

/// Chamfer error of the reconstruction under `predicted` against `ground_truth`.
pub fn pair_chamfer(
    prepared: &PreparedPair,
    predicted: &RigidTransform,
    ground_truth: &RigidTransform,
    config: &PipelineConfig,
) -> Result<f64> {
    in_stage(
        "evaluation",
        reconstruction_chamfer(
            &prepared.cloud0.valid_positions(),
            &prepared.cloud1.valid_positions(),
            predicted,
            ground_truth,
            config.chamfer_max_points,
            config.seed(),
        ),
    )
}

pub fn register_pair(
    frame0: &RgbdFrame,
    frame1: &RgbdFrame,
    ground_truth: Option<&RigidTransform>,
    config: &PipelineConfig,
) -> Result<RegistrationOutcome> {
    register_with_features(frame0, frame1, None, ground_truth, config)
}

pub fn register_with_features(
    frame0: &RgbdFrame,
    frame1: &RgbdFrame,
    features: Option<[&FeatureMap; 2]>,
    ground_truth: Option<&RigidTransform>,
    config: &PipelineConfig,
) -> Result<RegistrationOutcome> {
    let start = Instant::now();
    let prepared = prepare_pair(frame0, frame1, features, config)?;
    let mut clock = Stopwatch::new(config.timing);
    clock.times = prepared.time_ms.clone();

    let fit = clock.run("alignment", || fit_pair(&prepared, config))?;
    let (renders, losses) = clock.run("render", || {
        render_and_score(&prepared, frame0, frame1, &fit.transform, fit.full_set_weighted_error, config)
    })?;
    let report = match ground_truth {
        Some(gt) => Some(clock.run("evaluation", || -> Result<_> {
            let chamfer = pair_chamfer(&prepared, &fit.transform, gt, config)?;
            Ok(RegistrationReport::from_poses(&fit.transform, gt, chamfer))
        })?),
        None => None,
    };
    let mut time_ms = clock.times;
    if config.timing {
        time_ms.insert("total".into(), start.elapsed().as_secs_f64() * 1e3);
    }
    let report = report.map(|mut r| {
        r.time_ms = time_ms.clone();
        r
    });
    Ok(RegistrationOutcome {
        transform: fit.transform,
        fit,
        correspondences: prepared.correspondences,
        losses,
        renders,
        report,
        time_ms,
    })
}

/// A pair with known ground truth, optionally with features supplied.
#[derive(Debug, Clone)]
pub struct EvalPair {
    pub name: String,
    pub frame0: RgbdFrame,
    pub frame1: RgbdFrame,
    pub ground_truth: RigidTransform,
    pub features: Option<[FeatureMap; 2]>,
}

impl EvalPair {
    fn feature_refs(&self) -> Option<[&FeatureMap; 2]> {
        self.features.as_ref().map(|[a, b]| [a, b])
    }
}

/// Registers every pair (in parallel when enabled) and returns reports in
/// input order.
pub fn evaluate_pairs(pairs: &[EvalPair], config: &PipelineConfig) -> Result<Vec<RegistrationReport>> {
    let results = par::map_slice(pairs, |p| {
        register_with_features(&p.frame0, &p.frame1, p.feature_refs(), Some(&p.ground_truth), config)
            .map(|o| o.report.expect("ground truth supplied"))
            .map_err(|e| (p.name.clone(), e))
    });
    results
        .into_iter()
        .map(|r| {
            r.map_err(|(name, e)| {
                log::error!("pair {name}: {e}");
                e
            })
        })
        .collect()
}

/// Replaces a fraction of frame 1's valid-pixel features with copies of other
/// pixels' features. Repeated structure of this kind yields matches whose
/// nearest and second-nearest distances tie.
pub fn planted_outlier_features(
    frame0: &RgbdFrame,
    frame1: &RgbdFrame,
    fraction: f64,
    seed: u64,
    config: &PipelineConfig,
) -> Result<[FeatureMap; 2]> {
    let map0 = compute_features(frame0, 0, config)?;
    let mut map1 = compute_features(frame1, 1, config)?;
    let valid: Vec<bool> = frame1.depth().data().iter().map(|d| *d > 0.0).collect();
    plant_duplicate_features(&mut map1, &valid, fraction, seed);
    Ok([map0, map1])
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BenchmarkRow {
    pub subsets: usize,
    pub mean_rot_err_deg: f64,
    pub median_rot_err_deg: f64,
    pub mean_trans_err_cm: f64,
    pub median_trans_err_cm: f64,
    pub mean_chamfer_cm: f64,
    pub median_chamfer_cm: f64,
    /// Mean per-pair wall time of the randomized fit alone.
    pub fit_ms: f64,
    /// Mean per-pair wall time of descriptors, matching and the fit.
    pub total_ms: f64,
    /// Chamfer error of each pair, in input order.
    pub pair_chamfer_cm: Vec<f64>,
}

/// Sweeps the number of random subsets. Descriptors and correspondences are
/// computed once per pair; each fit is timed `repeats` times and the median
/// kept. File I/O is outside every timed region.
pub fn benchmark(
    pairs: &[EvalPair],
    subset_counts: &[usize],
    config: &PipelineConfig,
    repeats: usize,
) -> Result<Vec<BenchmarkRow>> {
    if pairs.len() < MIN_BENCHMARK_PAIRS {
        return Err(Error::Config(format!(
            "benchmark needs at least {MIN_BENCHMARK_PAIRS} pairs with ground truth, got {}",
            pairs.len()
        )));
    }
    if subset_counts.is_empty() || subset_counts.contains(&0) {
        return Err(Error::Config("subset counts must be non-empty and positive".into()));
    }
    let repeats = repeats.max(1);

    let mut prepared = Vec::with_capacity(pairs.len());
    let mut shared_ms = Vec::with_capacity(pairs.len());
    for p in pairs {
        let start = Instant::now();
        prepared.push(prepare_pair(&p.frame0, &p.frame1, p.feature_refs(), config)?);
        shared_ms.push(start.elapsed().as_secs_f64() * 1e3);
    }

    let mut rows = Vec::with_capacity(subset_counts.len());
    for &t in subset_counts {
        let mut cfg = config.clone();
        cfg.fit.num_subsets = t;
        cfg.fit.use_randomization = true;
        let (mut rot, mut trans, mut chamfer, mut fit_ms, mut total_ms) =
            (Vec::new(), Vec::new(), Vec::new(), Vec::new(), Vec::new());
        for ((pair, prep), shared) in pairs.iter().zip(&prepared).zip(&shared_ms) {
            let mut samples = Vec::with_capacity(repeats);
            let mut fit = None;
            for _ in 0..repeats {
                let start = Instant::now();
                let f = fit_pair(prep, &cfg)?;
                samples.push(start.elapsed().as_secs_f64() * 1e3);
                fit = Some(f);
            }
            let fit = fit.expect("at least one repeat");
            let ms = median(&samples);
            fit_ms.push(ms);
            total_ms.push(shared + ms);
            let c = pair_chamfer(prep, &fit.transform, &pair.ground_truth, &cfg)?;
            let r = RegistrationReport::from_poses(&fit.transform, &pair.ground_truth, c);
            rot.push(r.rot_err_deg);
            trans.push(r.trans_err_cm);
            chamfer.push(r.chamfer_cm);
        }
        rows.push(BenchmarkRow {
            subsets: t,
            mean_rot_err_deg: mean(&rot),
            median_rot_err_deg: median(&rot),
            mean_trans_err_cm: mean(&trans),
            median_trans_err_cm: median(&trans),
            mean_chamfer_cm: mean(&chamfer),
            median_chamfer_cm: median(&chamfer),
            fit_ms: mean(&fit_ms),
            total_ms: mean(&total_ms),
            pair_chamfer_cm: chamfer,
        });
    }
    Ok(rows)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::synth::{generate_pair, SceneSpec};

    #[test]
    fn defaults_match_the_reference_configuration() {
        let c = PipelineConfig::default();
        assert_eq!(c.top_k, 400);
        assert_eq!((c.fit.num_subsets, c.fit.subset_size), (100, 20));
        assert!(c.fit.use_randomization && c.ratio_test);
        assert_eq!(c.render_mode, RenderMode::Cross);
        let w = c.loss_weights;
        assert_eq!((w.photometric, w.depth, w.correspondence), (1.0, 1.0, 0.1));
        assert_eq!(c.descriptor_config.feature_dim, 32);
    }

    #[test]
    fn config_text_overrides() {
        let mut c = PipelineConfig::default();
        c.apply_text("# sweep\nsubsets = 10\nsubset_size=80\nratio_test = false  # ablation\n\nrender_mode = joint\nseed = 9\n")
            .unwrap();
        assert_eq!((c.fit.num_subsets, c.fit.subset_size, c.seed()), (10, 80, 9));
        assert!(!c.ratio_test);
        assert_eq!(c.render_mode, RenderMode::Joint);
        assert!(c.apply_text("bogus = 1").is_err());
        assert!(c.apply_text("subsets").is_err());
        assert!(c.apply_text("subsets = many").is_err());
    }

    #[test]
    fn descriptor_choice_parsing() {
        assert_eq!("patch".parse::<DescriptorChoice>().unwrap(), DescriptorChoice::Patch);
        assert_eq!(
            "file:/tmp/feats".parse::<DescriptorChoice>().unwrap(),
            DescriptorChoice::File(PathBuf::from("/tmp/feats"))
        );
        assert!("file:".parse::<DescriptorChoice>().is_err());
        assert!("cnn".parse::<DescriptorChoice>().is_err());
    }

    #[test]
    fn odd_k_is_rejected() {
        let c = PipelineConfig {
            top_k: 399,
            ..Default::default()
        };
        assert!(matches!(c.validate(), Err(Error::Config(_))));
    }

    #[test]
    fn self_registration_is_identity() {
        let pair = generate_pair(&SceneSpec::room(11, 0.0, 0.0)).unwrap();
        let out = register_pair(&pair.frame0, &pair.frame0, None, &PipelineConfig::default()).unwrap();
        assert!(out.transform.rotation_angle() < 1e-3);
        assert!(out.transform.translation().norm() < 1e-3);
        assert!(out.report.is_none());
    }

    #[test]
    fn registration_with_ground_truth_reports() {
        let pair = generate_pair(&SceneSpec::room(12, 10.0, 0.2)).unwrap();
        let out = register_pair(&pair.frame0, &pair.frame1, Some(&pair.relative_pose), &PipelineConfig::default())
            .unwrap();
        let report = out.report.unwrap();
        assert!(report.rot_err_deg < 2.0, "{}", report.rot_err_deg);
        assert!(report.trans_err_cm < 5.0, "{}", report.trans_err_cm);
        assert!(report.time_ms.contains_key("total"));
        assert_eq!(out.correspondences.len(), 400);
    }

    #[test]
    fn untimed_runs_are_reproducible() {
        let pair = generate_pair(&SceneSpec::room(13, 8.0, 0.1)).unwrap();
        let config = PipelineConfig {
            timing: false,
            ..Default::default()
        };
        let run = || {
            let o = register_pair(&pair.frame0, &pair.frame1, Some(&pair.relative_pose), &config).unwrap();
            serde_json::to_string(&o.report).unwrap()
        };
        let a = run();
        assert_eq!(a, run());
        assert!(a.contains("\"time_ms\":{}"));
    }

    #[test]
    fn benchmark_needs_enough_pairs() {
        assert!(benchmark(&[], &DEFAULT_SUBSET_SWEEP, &PipelineConfig::default(), 1).is_err());
    }
}
