use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use clap::{Subcommand, ValueEnum};
use synthdet::imgproc::{
    center_crop, jpeg_encode, resize_bilinear, sweep_jpeg, sweep_resize, test_perturb_traced,
    webp_encode, AppliedOp, Image, TestPerturbParams,
};
use synthdet::manifest::{Manifest, Split};
use synthdet::rng::record_rng;

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum SweepKindArg {
    Jpeg,
    Resize,
}

#[derive(Subcommand)]
pub enum PerturbCmd {
    /// Apply the test-set perturbation protocol to every test record and
    /// materialize the results. Uncompressed outputs are written as
    /// lossless PNG; compressed outputs keep their exact lossy encoding.
    TestSet {
        #[arg(long)]
        manifest: PathBuf,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
        /// Compression quality range, e.g. "50,95".
        #[arg(long, default_value = "50,95")]
        quality: String,
        #[arg(long, default_value_t = 0.75)]
        compress_prob: f64,
    },
    /// Materialize one transformed copy of the test set per grid value.
    Sweep {
        #[arg(long, value_enum)]
        kind: SweepKindArg,
        /// Comma-separated grid, e.g. "95,75,55,40" or "0.5,0.75,1.0".
        #[arg(long)]
        grid: String,
        #[arg(long)]
        manifest: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
}

pub(crate) fn parse_quality(s: &str) -> Result<(u8, u8)> {
    let parts: Vec<&str> = s.split(',').collect();
    if parts.len() != 2 {
        bail!("quality must be \"lo,hi\", got {s:?}");
    }
    Ok((parts[0].trim().parse()?, parts[1].trim().parse()?))
}

pub(crate) fn parse_grid(s: &str) -> Result<Vec<f64>> {
    s.split(',')
        .map(|p| p.trim().parse::<f64>().map_err(|e| anyhow::anyhow!("grid value {p:?}: {e}")))
        .collect()
}

fn resolve(path: &str) -> String {
    match (crate::data_root_override(), Path::new(path).is_absolute()) {
        (Some(root), false) => Path::new(&root).join(path).to_string_lossy().into_owned(),
        _ => path.to_string(),
    }
}

pub fn run(cmd: PerturbCmd, seed_override: Option<u64>) -> Result<i32> {
    match cmd {
        PerturbCmd::TestSet { manifest, seed, out, quality, compress_prob } => {
            let seed = seed_override.unwrap_or(seed);
            let quality = parse_quality(&quality)?;
            crate::announce(serde_json::json!({
                "cmd": "perturb test-set",
                "manifest": manifest, "seed": seed, "out": out,
                "quality": quality, "compress_prob": compress_prob,
                "codecs": { "jpeg": synthdet::codecs::JPEG, "webp": synthdet::codecs::WEBP,
                            "lossless": synthdet::codecs::PNG },
            }));
            let m = Manifest::load(&manifest)?;
            let params = TestPerturbParams { quality, compress_prob, ..Default::default() };
            fs::create_dir_all(&out)?;

            let mut meta = Vec::new();
            for r in m.split_records(Split::Test) {
                let img = Image::load(resolve(&r.path))
                    .with_context(|| format!("record {}", r.id))?;
                let mut rng = record_rng(seed, &r.id);
                let (perturbed, trace) = test_perturb_traced(&img, &params, &mut rng)?;
                // Keep the exact lossy bytes when the transform compressed;
                // otherwise write lossless.
                let (file, codec) = match trace.ops.iter().find(|op| op.is_compression()) {
                    Some(AppliedOp::Jpeg { quality }) => {
                        let file = format!("{}.jpg", r.id);
                        fs::write(out.join(&file), jpeg_encode(&pre_compression(&img, &trace)?, *quality)?)?;
                        (file, synthdet::codecs::JPEG)
                    }
                    Some(AppliedOp::Webp { quality }) => {
                        let file = format!("{}.webp", r.id);
                        fs::write(out.join(&file), webp_encode(&pre_compression(&img, &trace)?, *quality)?)?;
                        (file, synthdet::codecs::WEBP)
                    }
                    _ => {
                        let file = format!("{}.png", r.id);
                        perturbed.save_png(out.join(&file))?;
                        (file, synthdet::codecs::PNG)
                    }
                };
                meta.push(serde_json::json!({
                    "id": r.id,
                    "file": file,
                    "codec": codec,
                    "ops": format!("{:?}", trace.ops),
                }));
            }
            let meta_path = out.join("perturbation.json");
            fs::write(
                &meta_path,
                serde_json::to_string_pretty(&serde_json::json!({
                    "seed": seed,
                    "quality": quality,
                    "compress_prob": compress_prob,
                    "records": meta,
                }))?,
            )?;
            println!("wrote perturbed test set and metadata to {}", out.display());
            Ok(0)
        }
        PerturbCmd::Sweep { kind, grid, manifest, out } => {
            let grid = parse_grid(&grid)?;
            crate::announce(serde_json::json!({
                "cmd": "perturb sweep", "kind": format!("{kind:?}"), "grid": grid,
                "manifest": manifest, "out": out,
            }));
            let m = Manifest::load(&manifest)?;
            for &value in &grid {
                let dir = out.join(match kind {
                    SweepKindArg::Jpeg => format!("jpeg-{value}"),
                    SweepKindArg::Resize => format!("resize-{value}"),
                });
                fs::create_dir_all(&dir)?;
                for r in m.split_records(Split::Test) {
                    let img = Image::load(resolve(&r.path))
                        .with_context(|| format!("record {}", r.id))?;
                    match kind {
                        SweepKindArg::Jpeg => {
                            let std = resize_bilinear(&center_crop(&img, img.min_dim())?, 256, 256);
                            // The sweep's artifact is the JPEG encoding
                            // itself; keep the exact bytes.
                            let _shape_check = sweep_jpeg(&std, value as u8)?;
                            fs::write(dir.join(format!("{}.jpg", r.id)), jpeg_encode(&std, value as u8)?)?;
                        }
                        SweepKindArg::Resize => {
                            let transformed = sweep_resize(&img, value)?;
                            transformed.save_png(dir.join(format!("{}.png", r.id)))?;
                        }
                    }
                }
            }
            println!("wrote {} sweep grids to {}", grid.len(), out.display());
            Ok(0)
        }
    }
}

/// Rebuild the pre-compression image (crop + resize replay) so the lossy
/// bytes written to disk decode to exactly the in-memory result.
fn pre_compression(original: &Image, trace: &synthdet::imgproc::AugTrace) -> Result<Image> {
    let mut img = original.clone();
    for op in &trace.ops {
        match op {
            AppliedOp::Crop { x, y, w, h } => {
                img = synthdet::imgproc::crop(&img, *x, *y, *w, *h);
            }
            AppliedOp::Resize { w, h } => {
                img = resize_bilinear(&img, *w, *h);
            }
            AppliedOp::Jpeg { .. } | AppliedOp::Webp { .. } => break,
            other => bail!("unexpected op in test perturbation trace: {other:?}"),
        }
    }
    Ok(img)
}
