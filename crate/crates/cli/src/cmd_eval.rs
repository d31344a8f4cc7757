use std::fs;
use std::path::PathBuf;

use anyhow::{Context, Result};
use clap::{Subcommand, ValueEnum};
use synthdet::eval::{
    curve_to_text, detection_track, model_id_track, render_line_chart, robustness_sweep,
    NetScorer, SweepKind,
};
use synthdet::imgproc::TestPerturbParams;
use synthdet::manifest::Manifest;
use synthdet::model::DetectorCheckpoint;

use crate::cmd_perturb::{parse_grid, parse_quality};

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum SweepKindArg {
    Jpeg,
    Resize,
}

#[derive(Subcommand)]
pub enum EvalCmd {
    /// Real-vs-synthetic detection under the test perturbation protocol.
    Detection {
        #[arg(long)]
        ckpt: PathBuf,
        #[arg(long)]
        manifest: PathBuf,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value = "50,95")]
        quality: String,
        #[arg(long, default_value_t = 0.75)]
        compress_prob: f64,
    },
    /// Generator-group identification over perturbed synthetic examples.
    ModelId {
        #[arg(long)]
        ckpt: PathBuf,
        #[arg(long)]
        manifest: PathBuf,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value = "50,95")]
        quality: String,
        #[arg(long, default_value_t = 0.75)]
        compress_prob: f64,
    },
    /// Accuracy curve under a JPEG-quality or crop-resize grid.
    Sweep {
        #[arg(long, value_enum)]
        kind: SweepKindArg,
        /// Comma-separated grid, e.g. "95,75,55,40".
        #[arg(long)]
        grid: String,
        #[arg(long)]
        ckpt: PathBuf,
        #[arg(long)]
        manifest: PathBuf,
        /// Raw curve output (tab-separated).
        #[arg(long)]
        out: PathBuf,
        /// Optional rendered chart.
        #[arg(long)]
        plot: Option<PathBuf>,
    },
}

fn load_net(path: &PathBuf) -> Result<synthdet::model::DetectorNet> {
    let ckpt = DetectorCheckpoint::load(path).with_context(|| format!("{}", path.display()))?;
    Ok(ckpt.instantiate()?)
}

pub fn run(cmd: EvalCmd, seed_override: Option<u64>) -> Result<i32> {
    match cmd {
        EvalCmd::Detection { ckpt, manifest, seed, out, quality, compress_prob } => {
            let seed = seed_override.unwrap_or(seed);
            let quality = parse_quality(&quality)?;
            crate::announce(serde_json::json!({
                "cmd": "eval detection", "ckpt": ckpt, "manifest": manifest,
                "seed": seed, "out": out, "quality": quality, "compress_prob": compress_prob,
            }));
            let net = load_net(&ckpt)?;
            let m = Manifest::load(&manifest)?;
            let params = TestPerturbParams { quality, compress_prob, ..Default::default() };
            let report = detection_track(&NetScorer::new(&net), &m, &params, seed)?;
            fs::write(&out, report.to_json())?;
            println!(
                "detection: mean acc {:.4}, mean auc {:.4} -> {}",
                report.mean_accuracy,
                report.mean_auc,
                out.display()
            );
            Ok(0)
        }
        EvalCmd::ModelId { ckpt, manifest, seed, out, quality, compress_prob } => {
            let seed = seed_override.unwrap_or(seed);
            let quality = parse_quality(&quality)?;
            crate::announce(serde_json::json!({
                "cmd": "eval model-id", "ckpt": ckpt, "manifest": manifest,
                "seed": seed, "out": out, "quality": quality, "compress_prob": compress_prob,
            }));
            let net = load_net(&ckpt)?;
            let m = Manifest::load(&manifest)?;
            let params = TestPerturbParams { quality, compress_prob, ..Default::default() };
            let report = model_id_track(&NetScorer::new(&net), &m, &params, seed)?;
            fs::write(&out, report.to_json())?;
            println!(
                "model-id: mean acc {:.4}, macro auc {:.4} -> {}",
                report.mean_accuracy,
                report.mean_auc,
                out.display()
            );
            Ok(0)
        }
        EvalCmd::Sweep { kind, grid, ckpt, manifest, out, plot } => {
            let grid = parse_grid(&grid)?;
            crate::announce(serde_json::json!({
                "cmd": "eval sweep", "kind": format!("{kind:?}"), "grid": grid,
                "ckpt": ckpt, "manifest": manifest, "out": out, "plot": plot,
            }));
            let net = load_net(&ckpt)?;
            let m = Manifest::load(&manifest)?;
            let kind = match kind {
                SweepKindArg::Jpeg => SweepKind::Jpeg,
                SweepKindArg::Resize => SweepKind::Resize,
            };
            let curve = robustness_sweep(&NetScorer::new(&net), &m, kind, &grid)?;
            fs::write(&out, curve_to_text(&curve))?;
            if let Some(plot_path) = plot {
                let points: Vec<(f64, f64)> = curve.iter().map(|p| (p.value, p.accuracy)).collect();
                render_line_chart(&points, &plot_path)?;
            }
            println!("sweep curve ({} points) -> {}", curve.len(), out.display());
            Ok(0)
        }
    }
}
