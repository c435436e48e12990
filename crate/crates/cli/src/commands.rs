use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use serde_json::{json, Value};

use rgbd_reg::alignment::weighted_error_with;
use rgbd_reg::descriptor::FeatureMap;
use rgbd_reg::evaluation::aggregate;
use rgbd_reg::io::{self, LoadedPair};
use rgbd_reg::pipeline::{
    benchmark, compute_features, evaluate_pairs, fit_pair, planted_outlier_features, prepare_pair,
    register_with_features, render_and_score, BenchmarkRow, DescriptorChoice, EvalPair, PipelineConfig,
};
use rgbd_reg::synth::{generate_pair, perturbation_suite, SceneSpec};
use rgbd_reg::{Error, Result, RgbdFrame, RigidTransform};

use crate::args::Size;

/// Where a command's JSON result goes.
pub struct Output {
    pub json_out: Option<PathBuf>,
}

impl Output {
    /// Writes `value` to `--json-out` and prints `summary`, or prints the JSON
    /// when no file was given.
    fn emit(&self, value: &Value, summary: &str) -> Result<()> {
        match &self.json_out {
            Some(path) => {
                io::write_json(path, value)?;
                say(summary)
            }
            None => say(&(serde_json::to_string_pretty(value).expect("json values serialize") + "\n")),
        }
    }
}

/// Prints to stdout; a closed pipe (e.g. `| head`) is not an error.
fn say(text: &str) -> Result<()> {
    let mut stdout = std::io::stdout().lock();
    match stdout.write_all(text.as_bytes()).and_then(|()| stdout.flush()) {
        Err(e) if e.kind() != std::io::ErrorKind::BrokenPipe => Err(e.into()),
        _ => Ok(()),
    }
}

fn pose_rows(pose: &RigidTransform) -> Value {
    let m = pose.to_row_major_3x4();
    json!([&m[0..4], &m[4..8], &m[8..12]])
}

fn to_value<T: serde::Serialize>(value: &T) -> Value {
    serde_json::to_value(value).expect("reports serialize")
}

fn pair_name(dir: &Path) -> String {
    dir.file_name()
        .map(|n| n.to_string_lossy().into_owned())
        .unwrap_or_else(|| dir.display().to_string())
}

/// The config for one pair of a dataset: a `file:<dir>` descriptor resolves
/// to `<dir>/<pair name>`.
fn config_for_pair(config: &PipelineConfig, name: &str) -> PipelineConfig {
    let mut cfg = config.clone();
    if let DescriptorChoice::File(dir) = &config.descriptor {
        cfg.descriptor = DescriptorChoice::File(dir.join(name));
    }
    cfg
}

/// Precomputed feature maps are loaded up front so file reads stay out of
/// the timed stages. Patch descriptors are left to the pipeline.
fn load_features(f0: &RgbdFrame, f1: &RgbdFrame, config: &PipelineConfig) -> Result<Option<[FeatureMap; 2]>> {
    match config.descriptor {
        DescriptorChoice::Patch => Ok(None),
        DescriptorChoice::File(_) => Ok(Some([compute_features(f0, 0, config)?, compute_features(f1, 1, config)?])),
    }
}

fn refs(features: &Option<[FeatureMap; 2]>) -> Option<[&FeatureMap; 2]> {
    features.as_ref().map(|[a, b]| [a, b])
}

pub fn register(
    pair_dir: &Path,
    pose_out: Option<PathBuf>,
    correspondences_out: Option<PathBuf>,
    config: &PipelineConfig,
    out: &Output,
) -> Result<()> {
    config.validate()?;
    let pair = io::load_pair(pair_dir)?;
    let features = load_features(&pair.frame0, &pair.frame1, config)?;
    let outcome = register_with_features(
        &pair.frame0,
        &pair.frame1,
        refs(&features),
        pair.ground_truth.as_ref(),
        config,
    )?;

    let pose_path = pose_out.unwrap_or_else(|| pair_dir.join("pred_pose.txt"));
    io::write_pose(&pose_path, &outcome.transform)?;
    if let Some(path) = &correspondences_out {
        outcome.correspondences.write_text(path)?;
    }

    let value = json!({
        "pair": pair_name(pair_dir),
        "transform": pose_rows(&outcome.transform),
        "correspondences": outcome.correspondences.len(),
        "fit": {
            "full_set_weighted_error": outcome.fit.full_set_weighted_error,
            "best_subset": outcome.fit.best_subset,
            "degenerate_subsets": outcome.fit.degenerate_flags.iter().filter(|d| **d).count(),
        },
        "losses": to_value(&outcome.losses),
        "report": outcome.report.as_ref().map(to_value),
        "time_ms": to_value(&outcome.time_ms),
    });
    let mut summary = format!(
        "pose written to {}\nloss total {:.6} (photometric {:.6}, depth {:.6}, correspondence {:.6})\n",
        pose_path.display(),
        outcome.losses.total,
        outcome.losses.photometric,
        outcome.losses.depth,
        outcome.losses.correspondence
    );
    if let Some(r) = &outcome.report {
        summary += &format!(
            "rotation error {:.4} deg, translation error {:.3} cm, chamfer {:.3} cm\n",
            r.rot_err_deg, r.trans_err_cm, r.chamfer_cm
        );
    }
    out.emit(&value, &summary)
}

/// Loads every pair of a dataset in name order. Each must carry ground truth.
fn load_dataset(dataset: &Path, config: &PipelineConfig) -> Result<Vec<(EvalPair, PipelineConfig)>> {
    let dirs = io::list_pairs(dataset)?;
    if dirs.is_empty() {
        return Err(Error::load(dataset, "no pair directories (with 0/ and 1/) found"));
    }
    let mut pairs = Vec::with_capacity(dirs.len());
    for dir in dirs {
        let name = pair_name(&dir);
        let LoadedPair {
            frame0,
            frame1,
            ground_truth,
        } = io::load_pair(&dir)?;
        let ground_truth = ground_truth.ok_or_else(|| Error::load(&dir, "no ground truth (pose.txt in 0/ and 1/)"))?;
        let cfg = config_for_pair(config, &name);
        let features = load_features(&frame0, &frame1, &cfg)?;
        pairs.push((
            EvalPair {
                name,
                frame0,
                frame1,
                ground_truth,
                features,
            },
            cfg,
        ));
    }
    Ok(pairs)
}

pub fn evaluate(dataset: &Path, config: &PipelineConfig, out: &Output) -> Result<()> {
    config.validate()?;
    let pairs: Vec<EvalPair> = load_dataset(dataset, config)?.into_iter().map(|(p, _)| p).collect();
    let reports = evaluate_pairs(&pairs, config)?;
    let summary = aggregate(&reports)?;

    let per_pair: Vec<Value> = pairs
        .iter()
        .zip(&reports)
        .map(|(p, r)| {
            let mut v = to_value(r);
            v.as_object_mut()
                .expect("report is an object")
                .insert("name".into(), json!(p.name));
            v
        })
        .collect();
    let value = json!({ "pairs": per_pair, "summary": to_value(&summary) });
    let text = format!(
        "{} pairs: rotation mean {:.3} / median {:.3} deg, translation mean {:.3} / median {:.3} cm, chamfer mean {:.3} / median {:.3} cm\n",
        summary.pairs,
        summary.rotation_deg.mean,
        summary.rotation_deg.median,
        summary.translation_cm.mean,
        summary.translation_cm.median,
        summary.chamfer_cm.mean,
        summary.chamfer_cm.median
    );
    out.emit(&value, &text)
}

pub fn render(
    pair_dir: &Path,
    out_dir: &Path,
    pose: Option<PathBuf>,
    use_gt: bool,
    config: &PipelineConfig,
    out: &Output,
) -> Result<()> {
    config.validate()?;
    let pair = io::load_pair(pair_dir)?;
    let features = load_features(&pair.frame0, &pair.frame1, config)?;
    let prepared = prepare_pair(&pair.frame0, &pair.frame1, refs(&features), config)?;
    let (transform, source) = match (pose, use_gt) {
        (Some(path), _) => (io::read_pose(&path)?, "file"),
        (None, true) => (
            pair.ground_truth
                .ok_or_else(|| Error::load(pair_dir, "--gt given but the pair has no pose files"))?,
            "ground_truth",
        ),
        (None, false) => (fit_pair(&prepared, config)?.transform, "predicted"),
    };
    let corr_err = weighted_error_with(&prepared.correspondences, &transform, config.fit.normalization)?;
    let (renders, losses) = render_and_score(&prepared, &pair.frame0, &pair.frame1, &transform, corr_err, config)?;
    io::save_render(out_dir, "view1", &renders.0)?;
    io::save_render(out_dir, "view2", &renders.1)?;

    let value = json!({
        "pair": pair_name(pair_dir),
        "pose_source": source,
        "transform": pose_rows(&transform),
        "losses": to_value(&losses),
        "valid_pixels": [renders.0.valid_count(), renders.1.valid_count()],
    });
    let summary = format!(
        "renders written to {} ({} and {} valid pixels), loss total {:.6}\n",
        out_dir.display(),
        renders.0.valid_count(),
        renders.1.valid_count(),
        losses.total
    );
    out.emit(&value, &summary)
}

fn benchmark_table(rows: &[BenchmarkRow]) -> String {
    let mut s = format!(
        "{:>7}  {:>9} {:>9}  {:>9} {:>9}  {:>9} {:>9}  {:>9} {:>9}\n",
        "subsets", "rot mean", "rot med", "tr mean", "tr med", "ch mean", "ch med", "fit ms", "total ms"
    );
    for r in rows {
        s += &format!(
            "{:>7}  {:>9.3} {:>9.3}  {:>9.3} {:>9.3}  {:>9.3} {:>9.3}  {:>9.2} {:>9.2}\n",
            r.subsets,
            r.mean_rot_err_deg,
            r.median_rot_err_deg,
            r.mean_trans_err_cm,
            r.median_trans_err_cm,
            r.mean_chamfer_cm,
            r.median_chamfer_cm,
            r.fit_ms,
            r.total_ms
        );
    }
    s
}

pub fn run_benchmark(
    dataset: &Path,
    subset_counts: &[usize],
    repeats: usize,
    plant_outliers: Option<f64>,
    config: &PipelineConfig,
    out: &Output,
) -> Result<()> {
    config.validate()?;
    if let Some(f) = plant_outliers {
        if !(0.0..=1.0).contains(&f) {
            return Err(Error::Config(format!("--plant-outliers must be in [0, 1], got {f}")));
        }
    }
    let mut pairs = Vec::new();
    for (i, (mut pair, cfg)) in load_dataset(dataset, config)?.into_iter().enumerate() {
        if let Some(fraction) = plant_outliers {
            let seed = config.seed().wrapping_add(i as u64);
            pair.features = Some(planted_outlier_features(&pair.frame0, &pair.frame1, fraction, seed, &cfg)?);
        }
        pairs.push(pair);
    }
    let rows = benchmark(&pairs, subset_counts, config, repeats)?;
    let table = benchmark_table(&rows);
    if let Some(path) = &out.json_out {
        io::write_json(path, &json!({ "pairs": pairs.len(), "rows": to_value(&rows) }))?;
    }
    say(&table)
}

pub struct SynthOptions {
    pub rot_deg: f64,
    pub trans_m: f64,
    pub size: Size,
    pub count: usize,
    pub uniform: bool,
    pub depth_noise: f64,
    pub dropout: f64,
}

fn write_generated(dir: &Path, spec: &SceneSpec) -> Result<RigidTransform> {
    let pair = generate_pair(spec)?;
    io::save_pair(dir, &pair.frame0, &pair.frame1, Some((&pair.pose0, &pair.pose1)))?;
    let meta = json!({
        "spec": to_value(spec),
        "relative_pose": pose_rows(&pair.relative_pose),
    });
    io::write_json(&dir.join(io::META_FILE), &meta)?;
    Ok(pair.relative_pose)
}

pub fn synth(opts: &SynthOptions, out_dir: &Path, seed: u64, out: &Output) -> Result<()> {
    if opts.count == 0 {
        return Err(Error::Config("--count must be at least 1".into()));
    }
    if opts.rot_deg < 0.0 || opts.trans_m < 0.0 || !opts.rot_deg.is_finite() || !opts.trans_m.is_finite() {
        return Err(Error::Config("--rot-deg and --trans-m must be finite and non-negative".into()));
    }
    let mut specs = if opts.count == 1 {
        vec![SceneSpec::room(seed, opts.rot_deg, opts.trans_m)]
    } else {
        let mut specs = perturbation_suite(opts.count, opts.rot_deg, opts.trans_m, seed);
        if !opts.uniform {
            for s in &mut specs {
                s.rotation_deg = opts.rot_deg;
                s.translation_m = opts.trans_m;
            }
        }
        specs
    };
    for s in &mut specs {
        s.width = opts.size.width;
        s.height = opts.size.height;
        s.depth_noise_std = opts.depth_noise;
        s.depth_dropout = opts.dropout;
    }

    fs::create_dir_all(out_dir).map_err(|e| Error::save(out_dir, e))?;
    let mut written = Vec::with_capacity(specs.len());
    for (i, spec) in specs.iter().enumerate() {
        let dir = if opts.count == 1 {
            out_dir.to_path_buf()
        } else {
            out_dir.join(format!("pair_{i:03}"))
        };
        write_generated(&dir, spec)?;
        written.push(json!({
            "dir": dir.display().to_string(),
            "rotation_deg": spec.rotation_deg,
            "translation_m": spec.translation_m,
        }));
    }
    let summary = format!("{} pair(s) written to {}\n", written.len(), out_dir.display());
    if let Some(path) = &out.json_out {
        io::write_json(path, &json!({ "pairs": written }))?;
    }
    say(&summary)
}
