//! `topview`: render, inspect, validate and score top-view fisheye datasets.
//!
//! Exit status is 0 on success, 1 on errors or validation violations and 2
//! when an input path cannot be read.

use std::io::{self, BufWriter, Write};
use std::path::PathBuf;
use std::process::ExitCode;
use std::time::Instant;

use anyhow::Context;
use clap::{Parser, Subcommand};
use log::info;

use topview_core::annotation::{validate_dataset, AnnotationError};
use topview_core::camera::{ray_crossing_diagnostic, Camera, CameraError};
use topview_core::field::{load_voxel_grid, NvoxError};
use topview_core::pipeline::{run_eval, run_render, EvalMode, PipelineConfig, PipelineError, RunOptions};

#[derive(Debug, Parser)]
#[command(name = "topview", version, about = "Top-view fisheye rendering of radiance fields into pose datasets")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Render and annotate every frame described by a pipeline config.
    Render {
        #[arg(long)]
        config: PathBuf,
        /// Output root, overriding the config.
        #[arg(long)]
        out: Option<PathBuf>,
        /// Render threads (0 = all cores).
        #[arg(long)]
        workers: Option<usize>,
        #[arg(long)]
        seed: Option<u64>,
        /// Keep rendering after a frame fails. The run still exits nonzero.
        #[arg(long)]
        keep_going: bool,
        /// k x k subsamples per pixel.
        #[arg(long)]
        supersample: Option<u32>,
    },
    /// Print where a grid of pixel rays crosses the image plane, as CSV.
    InspectRays {
        camera_file: PathBuf,
        #[arg(long, default_value_t = 50)]
        side: usize,
    },
    /// Check a rendered dataset for missing files and broken invariants.
    Validate {
        dataset_root: PathBuf,
        /// Also write the report as JSON.
        #[arg(long)]
        report: Option<PathBuf>,
    },
    /// Score 2D detections or 3D estimates against a rendered dataset.
    Eval {
        pred_file: PathBuf,
        gt_root: PathBuf,
        #[arg(long, value_parser = parse_mode)]
        mode: EvalMode,
        /// Report path; printed to stdout when omitted.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Summarize an NVOX voxel grid.
    VoxelInfo { path: PathBuf },
}

fn parse_mode(s: &str) -> Result<EvalMode, String> {
    s.parse()
}

/// Error carrying its exit status.
struct Failure {
    code: u8,
    error: anyhow::Error,
}

impl<E: Into<anyhow::Error>> From<E> for Failure {
    fn from(e: E) -> Self {
        let error = e.into();
        Failure {
            code: exit_code(&error),
            error,
        }
    }
}

fn exit_code(error: &anyhow::Error) -> u8 {
    let io = error.chain().any(|cause| {
        cause.is::<io::Error>()
            || matches!(cause.downcast_ref(), Some(AnnotationError::MissingRoot(_)))
            || matches!(cause.downcast_ref(), Some(NvoxError::Io { .. }))
            || matches!(cause.downcast_ref(), Some(CameraError::Io { .. }))
            || matches!(
                cause.downcast_ref(),
                Some(PipelineError::Io { .. }) | Some(PipelineError::GroundTruth { .. })
            )
    });
    if io {
        2
    } else {
        1
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info"))
        .format_timestamp(None)
        .init();
    let cli = Cli::parse();
    match run(cli.command) {
        Ok(code) => ExitCode::from(code),
        Err(f) => {
            eprintln!("error: {:#}", f.error);
            ExitCode::from(f.code)
        }
    }
}

fn run(command: Command) -> Result<u8, Failure> {
    match command {
        Command::Render {
            config,
            out,
            workers,
            seed,
            keep_going,
            supersample,
        } => {
            let cfg = PipelineConfig::load(&config)?;
            let opts = RunOptions {
                output: out,
                workers,
                seed,
                supersample,
                keep_going,
            };
            let start = Instant::now();
            let manifest = run_render(&cfg, &opts)?;
            info!(
                "{} frame(s), {} set(s), {} images, {} masks, {} records in {:.2} s",
                manifest.frames,
                manifest.sets,
                manifest.images,
                manifest.masks,
                manifest.records,
                start.elapsed().as_secs_f64()
            );
            Ok(0)
        }
        Command::InspectRays { camera_file, side } => {
            if side == 0 {
                return Err(anyhow::anyhow!("--side must be at least 1").into());
            }
            let cam = Camera::from_file(&camera_file)?;
            let stdout = io::stdout();
            let mut w = BufWriter::new(stdout.lock());
            writeln!(w, "i,j,u,v,q_x,q_y,theta,valid")?;
            for p in ray_crossing_diagnostic(&cam, side) {
                let (qx, qy) = p.q.unwrap_or((f64::NAN, f64::NAN));
                writeln!(
                    w,
                    "{},{},{},{},{},{},{},{}",
                    p.i,
                    p.j,
                    p.u,
                    p.v,
                    qx,
                    qy,
                    p.theta,
                    u8::from(p.valid())
                )?;
            }
            w.flush()?;
            Ok(0)
        }
        Command::Validate { dataset_root, report } => {
            let r = validate_dataset(&dataset_root)?;
            for v in &r.violations {
                println!("{:?}\t{}\t{}", v.kind, v.path.display(), v.message);
            }
            println!(
                "checked {} set(s), {} image(s): {} violation(s)",
                r.sets_checked,
                r.images_checked,
                r.violations.len()
            );
            if let Some(path) = report {
                let text = serde_json::to_string_pretty(&r)?;
                std::fs::write(&path, text + "\n").with_context(|| format!("writing {}", path.display()))?;
            }
            Ok(if r.is_clean() { 0 } else { 1 })
        }
        Command::Eval {
            pred_file,
            gt_root,
            mode,
            out,
        } => {
            let report = run_eval(&pred_file, &gt_root, mode)?;
            match out {
                Some(path) => report.save(&path)?,
                None => println!("{}", serde_json::to_string_pretty(&report)?),
            }
            Ok(0)
        }
        Command::VoxelInfo { path } => {
            let grid = load_voxel_grid(&path)?;
            let stats = grid.stats();
            let b = grid.grid_bounds();
            let [nx, ny, nz] = grid.dims();
            println!("dims: {nx} x {ny} x {nz}");
            println!(
                "bounds: [{}, {}, {}] .. [{}, {}, {}]",
                b.min().x,
                b.min().y,
                b.min().z,
                b.max().x,
                b.max().y,
                b.max().z
            );
            println!("cells: {}", stats.cells);
            println!("occupied: {}", stats.occupied);
            println!("max sigma: {}", stats.max_sigma);
            println!("mean sigma: {}", stats.mean_sigma);
            Ok(0)
        }
    }
}
