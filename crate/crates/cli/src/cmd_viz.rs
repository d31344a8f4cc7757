use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use clap::Subcommand;
use ndarray::Array2;
use synthdet::dimred::{alpha_search, EmbeddingSet, ProjectionConfig};
use synthdet::eval::render_scatter;
use synthdet::imgproc::{center_crop, resize_bilinear, Image};
use synthdet::manifest::{Manifest, Split};
use synthdet::model::DetectorCheckpoint;
use synthdet::train::images_to_batch;

use crate::cmd_perturb::parse_grid;

#[derive(Subcommand)]
pub enum VizCmd {
    /// Project pooled detector features of the test split to 2D with the
    /// relational autoencoder; writes a scatter PNG plus a raw
    /// coordinates file (id, x, y, label per line).
    Embed {
        #[arg(long)]
        ckpt: PathBuf,
        #[arg(long)]
        manifest: PathBuf,
        #[arg(long, default_value = "0,0.25,0.5,0.75,1")]
        alpha_grid: String,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = 60)]
        epochs: usize,
        /// Cap on test records embedded (0 = all).
        #[arg(long, default_value_t = 512)]
        limit: usize,
    },
}

fn resolve(path: &str) -> String {
    match (crate::data_root_override(), Path::new(path).is_absolute()) {
        (Some(root), false) => Path::new(&root).join(path).to_string_lossy().into_owned(),
        _ => path.to_string(),
    }
}

pub fn run(cmd: VizCmd, seed_override: Option<u64>) -> Result<i32> {
    match cmd {
        VizCmd::Embed { ckpt, manifest, alpha_grid, out, seed, epochs, limit } => {
            let seed = seed_override.unwrap_or(seed);
            let grid = parse_grid(&alpha_grid)?;
            crate::announce(serde_json::json!({
                "cmd": "viz embed", "ckpt": ckpt, "manifest": manifest,
                "alpha_grid": grid, "out": out, "seed": seed, "epochs": epochs, "limit": limit,
            }));
            let net = DetectorCheckpoint::load(&ckpt)?.instantiate()?;
            let m = Manifest::load(&manifest)?;
            let mut records: Vec<_> = m.split_records(Split::Test).collect();
            if records.is_empty() {
                anyhow::bail!("manifest has no test records to embed");
            }
            records.sort_by(|a, b| a.id.cmp(&b.id));
            if limit > 0 && records.len() > limit {
                records.truncate(limit);
            }

            // Pooled backbone features over standardized clean images.
            let mut features: Vec<Array2<f64>> = Vec::new();
            for chunk in records.chunks(8) {
                let images: Vec<Image> = chunk
                    .iter()
                    .map(|r| -> Result<Image> {
                        let img = Image::load(resolve(&r.path))
                            .with_context(|| format!("record {}", r.id))?;
                        let cropped = center_crop(&img, img.min_dim())?;
                        Ok(resize_bilinear(&cropped, 256, 256))
                    })
                    .collect::<Result<_>>()?;
                features.push(net.features_eval(&images_to_batch(&images))?);
            }
            let dim = features[0].ncols();
            let mut vectors = Array2::<f64>::zeros((records.len(), dim));
            let mut offset = 0;
            for block in features {
                let n = block.nrows();
                vectors.slice_mut(ndarray::s![offset..offset + n, ..]).assign(&block);
                offset += n;
            }
            let labels: Vec<String> =
                records.iter().map(|r| r.generator_group.display().to_string()).collect();
            let data = EmbeddingSet::new(vectors, labels.clone())?;

            let template = ProjectionConfig {
                epochs,
                seed,
                batch_size: 32.min(records.len()),
                ..Default::default()
            };
            let search = alpha_search(&data, &grid, &template)?;
            println!(
                "alpha search over {:?}: best alpha {}",
                grid, search.best_alpha
            );
            for row in &search.table {
                println!(
                    "  alpha {:.2}: abs err {:.5}, cosine distance {:.5}, score {:.4}",
                    row.alpha, row.mean_abs_error, row.cosine_distance, row.score
                );
            }

            // Raw coordinates sidecar: id, x, y, label.
            let coords_path = out.with_extension("coords.tsv");
            let mut coords = String::from("id\tx\ty\tlabel\n");
            let mut label_index: Vec<String> = Vec::new();
            let mut points = Vec::new();
            for (i, r) in records.iter().enumerate() {
                let (x, y) = (search.best_fit.projections[[i, 0]], search.best_fit.projections[[i, 1]]);
                coords.push_str(&format!("{}\t{}\t{}\t{}\n", r.id, x, y, labels[i]));
                let idx = match label_index.iter().position(|l| l == &labels[i]) {
                    Some(idx) => idx,
                    None => {
                        label_index.push(labels[i].clone());
                        label_index.len() - 1
                    }
                };
                points.push((x, y, idx));
            }
            fs::write(&coords_path, coords)?;
            render_scatter(&points, &out)?;
            println!(
                "wrote scatter to {} and coordinates to {}",
                out.display(),
                coords_path.display()
            );
            Ok(0)
        }
    }
}
