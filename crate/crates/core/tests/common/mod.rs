#![allow(dead_code)]

use std::fs;
use std::path::{Path, PathBuf};

use topview_core::pipeline::{run_render, PipelineConfig, RunManifest, RunOptions};

pub fn demo_dir() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../demo")
}

pub fn demo_config() -> PipelineConfig {
    PipelineConfig::load(&demo_dir().join("config.toml")).expect("demo config loads")
}

/// Same geometry as the demo, smaller images and fewer samples.
pub fn small_config(size: u32) -> PipelineConfig {
    let mut cfg = demo_config();
    cfg.camera.width = size;
    cfg.camera.height = size;
    cfg.render.n_samples = 48;
    cfg
}

pub fn render_to(cfg: &PipelineConfig, out: &Path, workers: usize) -> RunManifest {
    run_render(
        cfg,
        &RunOptions {
            output: Some(out.to_path_buf()),
            workers: Some(workers),
            ..Default::default()
        },
    )
    .expect("render succeeds")
}

/// Every file below `root` with its bytes, sorted by relative path.
pub fn tree(root: &Path) -> Vec<(PathBuf, Vec<u8>)> {
    let mut files: Vec<(PathBuf, Vec<u8>)> = walkdir::WalkDir::new(root)
        .into_iter()
        .filter_map(Result::ok)
        .filter(|e| e.file_type().is_file())
        .map(|e| {
            let rel = e.path().strip_prefix(root).unwrap().to_path_buf();
            (rel, fs::read(e.path()).unwrap())
        })
        .collect();
    files.sort();
    files
}
