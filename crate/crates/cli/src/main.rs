mod args;
mod commands;

use std::process::ExitCode;

use clap::error::ErrorKind;
use clap::Parser;

use args::{Cli, Command};
use commands::{Output, SynthOptions};

const EXIT_INPUT: u8 = 1;
const EXIT_NUMERICAL: u8 = 2;

fn run(cli: Cli) -> rgbd_reg::Result<()> {
    let config = cli.global.pipeline_config()?;
    log::debug!("pipeline config: {config:?}");
    let out = Output {
        json_out: cli.global.json_out.clone(),
    };
    match cli.command {
        Command::Register {
            pair_dir,
            pose_out,
            correspondences_out,
        } => commands::register(&pair_dir, pose_out, correspondences_out, &config, &out),
        Command::Evaluate { dataset_dir } => commands::evaluate(&dataset_dir, &config, &out),
        Command::Render {
            pair_dir,
            out: out_dir,
            pose,
            gt,
        } => commands::render(&pair_dir, &out_dir, pose, gt, &config, &out),
        Command::Benchmark {
            dataset_dir,
            subset_counts,
            repeats,
            plant_outliers,
        } => commands::run_benchmark(&dataset_dir, &subset_counts, repeats, plant_outliers, &config, &out),
        Command::Synth {
            rot_deg,
            trans_m,
            size,
            out: out_dir,
            count,
            uniform,
            depth_noise,
            dropout,
        } => {
            let opts = SynthOptions {
                rot_deg,
                trans_m,
                size,
                count,
                uniform,
                depth_noise,
                dropout,
            };
            commands::synth(&opts, &out_dir, config.seed(), &out)
        }
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => ExitCode::SUCCESS,
                _ => ExitCode::from(EXIT_INPUT),
            };
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(if e.is_numerical() { EXIT_NUMERICAL } else { EXIT_INPUT })
        }
    }
}
