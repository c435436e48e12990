use std::path::PathBuf;
use std::str::FromStr;

use clap::{Args, Parser, Subcommand};
use rgbd_reg::pipeline::{DescriptorChoice, PipelineConfig, DEFAULT_SUBSET_SWEEP};
use rgbd_reg::renderer::RenderMode;
use rgbd_reg::{Error, Result};

#[derive(Debug, Parser)]
#[command(name = "rgbd-reg", version, about = "Pairwise RGB-D registration from feature point clouds")]
pub struct Cli {
    #[command(flatten)]
    pub global: GlobalArgs,
    #[command(subcommand)]
    pub command: Command,
}

/// Options shared by every command. Values from `--config` are applied
/// first; flags given on the command line win.
#[derive(Debug, Args)]
pub struct GlobalArgs {
    /// Seed for subset sampling, chamfer subsampling and scene generation.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Key=value config file (one `key = value` per line, `#` comments).
    #[arg(long, global = true, value_name = "FILE")]
    pub config: Option<PathBuf>,
    /// Write the JSON result here instead of printing it.
    #[arg(long, global = true, value_name = "FILE")]
    pub json_out: Option<PathBuf>,
    /// Number of random subsets in the fit.
    #[arg(long, global = true, value_name = "T")]
    pub subsets: Option<usize>,
    /// Correspondences per random subset.
    #[arg(long, global = true, value_name = "N")]
    pub subset_size: Option<usize>,
    /// Fit all correspondences at once instead of the best random subset.
    #[arg(long, global = true)]
    pub no_randomized: bool,
    /// Weight correspondences by 1 - D1 instead of the ratio test.
    #[arg(long, global = true)]
    pub no_ratio_test: bool,
    /// Render each view from the other frame's points (cross) or from both (joint).
    #[arg(long, global = true, value_name = "MODE", value_parser = ["cross", "joint"])]
    pub render_mode: Option<String>,
    /// `patch` or `file:<dir>` with precomputed `0.fmap` and `1.fmap`.
    #[arg(long, global = true, value_name = "SPEC")]
    pub descriptor: Option<String>,
    /// Correspondences kept, half from each matching direction.
    #[arg(long = "top-k", global = true, value_name = "K")]
    pub top_k: Option<usize>,
    /// Leave `time_ms` empty so reports are byte-identical across runs.
    #[arg(long, global = true)]
    pub no_timing: bool,
}

impl GlobalArgs {
    pub fn pipeline_config(&self) -> Result<PipelineConfig> {
        let mut config = PipelineConfig::default();
        if let Some(path) = &self.config {
            config.apply_file(path)?;
        }
        if let Some(seed) = self.seed {
            config.fit.rng_seed = seed;
        }
        if let Some(t) = self.subsets {
            config.fit.num_subsets = t;
        }
        if let Some(n) = self.subset_size {
            config.fit.subset_size = n;
        }
        if self.no_randomized {
            config.fit.use_randomization = false;
        }
        if self.no_ratio_test {
            config.ratio_test = false;
        }
        if let Some(mode) = &self.render_mode {
            config.render_mode = RenderMode::from_str(mode)?;
        }
        if let Some(d) = &self.descriptor {
            config.descriptor = DescriptorChoice::from_str(d)?;
        }
        if let Some(k) = self.top_k {
            config.top_k = k;
        }
        if self.no_timing {
            config.timing = false;
        }
        Ok(config)
    }
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Register one pair directory (views in `0/` and `1/`).
    Register {
        pair_dir: PathBuf,
        /// Predicted 3x4 pose mapping view 0 into view 1 [default: <PAIR_DIR>/pred_pose.txt].
        #[arg(long, value_name = "FILE")]
        pose_out: Option<PathBuf>,
        /// Dump correspondences as `px py pz qx qy qz w dir` lines.
        #[arg(long, value_name = "FILE")]
        correspondences_out: Option<PathBuf>,
    },
    /// Register every pair of a dataset and aggregate the errors.
    Evaluate { dataset_dir: PathBuf },
    /// Cross-render both views of a pair. `view1_*` is the camera of `0/`,
    /// `view2_*` the camera of `1/`.
    Render {
        pair_dir: PathBuf,
        #[arg(long, value_name = "DIR")]
        out: PathBuf,
        /// Render under this 3x4 pose instead of the predicted one.
        #[arg(long, value_name = "FILE", conflicts_with = "gt")]
        pose: Option<PathBuf>,
        /// Render under the ground-truth pose.
        #[arg(long)]
        gt: bool,
    },
    /// Sweep the number of random subsets over a dataset.
    Benchmark {
        dataset_dir: PathBuf,
        #[arg(long, value_delimiter = ',', value_name = "LIST", default_values_t = DEFAULT_SUBSET_SWEEP)]
        subset_counts: Vec<usize>,
        /// Timed fits per pair and subset count; the median is kept.
        #[arg(long, default_value_t = 3)]
        repeats: usize,
        /// Replace this fraction of view-1 features with duplicates of other pixels.
        #[arg(long, value_name = "FRACTION")]
        plant_outliers: Option<f64>,
    },
    /// Generate synthetic pairs with exact ground truth.
    Synth {
        /// Rotation of the second camera in degrees.
        #[arg(long, default_value_t = 10.0)]
        rot_deg: f64,
        /// Translation of the second camera in meters.
        #[arg(long, default_value_t = 0.2)]
        trans_m: f64,
        /// Image size as HEIGHTxWIDTH.
        #[arg(long, default_value = "48x64")]
        size: Size,
        #[arg(long, value_name = "DIR")]
        out: PathBuf,
        /// Number of pairs; above 1 they go to `<DIR>/pair_000`, `pair_001`, ...
        #[arg(long, default_value_t = 1)]
        count: usize,
        /// Draw each pair's magnitudes uniformly up to `--rot-deg` and `--trans-m`.
        #[arg(long)]
        uniform: bool,
        /// Standard deviation of Gaussian depth noise in meters.
        #[arg(long, default_value_t = 0.0)]
        depth_noise: f64,
        /// Fraction of pixels whose depth is dropped.
        #[arg(long, default_value_t = 0.0)]
        dropout: f64,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Size {
    pub height: usize,
    pub width: usize,
}

impl FromStr for Size {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        let bad = || Error::Config(format!("bad size {s:?}, expected HEIGHTxWIDTH such as 48x64"));
        let (h, w) = s.split_once(['x', 'X']).ok_or_else(bad)?;
        let height: usize = h.trim().parse().map_err(|_| bad())?;
        let width: usize = w.trim().parse().map_err(|_| bad())?;
        if height == 0 || width == 0 {
            return Err(bad());
        }
        Ok(Size { height, width })
    }
}

impl std::fmt::Display for Size {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}x{}", self.height, self.width)
    }
}
