use std::path::PathBuf;

use anyhow::{Context, Result};
use clap::Subcommand;
use synthdet::manifest::{ContentType, Manifest};
use synthdet::model::DetectorCheckpoint;
use synthdet::train::{calibrate, loocv_ablation, pretrain, TrainConfig};

#[derive(Subcommand)]
pub enum TrainCmd {
    /// Stage-1 contrastive pretraining from a config file.
    Pretrain {
        #[arg(long)]
        config: PathBuf,
    },
    /// Stage-2 calibration of a pretrained checkpoint.
    Calibrate {
        #[arg(long)]
        config: PathBuf,
        /// Pretrained checkpoint; overrides the config's checkpoint_in.
        #[arg(long)]
        from: Option<PathBuf>,
    },
    /// Leave-one-content-type-out ablation.
    Ablation {
        #[arg(long)]
        config: PathBuf,
        /// Comma-separated content types; default: all types present.
        #[arg(long)]
        content_types: Option<String>,
    },
}

fn load_config(path: &PathBuf, seed_override: Option<u64>) -> Result<TrainConfig> {
    let mut cfg = TrainConfig::from_toml_file(path)
        .with_context(|| format!("reading {}", path.display()))?;
    if let Some(seed) = seed_override {
        cfg.seed = seed;
        cfg.model.seed = seed;
    }
    if let Some(root) = crate::data_root_override() {
        cfg.data_root = Some(root);
    }
    Ok(cfg)
}

pub fn run(cmd: TrainCmd, seed_override: Option<u64>) -> Result<i32> {
    match cmd {
        TrainCmd::Pretrain { config } => {
            let cfg = load_config(&config, seed_override)?;
            crate::announce(serde_json::to_value(&cfg)?);
            let manifest = Manifest::load(&cfg.manifest)?;
            let (ckpt, log) = pretrain(&cfg, &manifest)?;
            println!(
                "pretrained {} epochs ({} steps) -> {}",
                ckpt.next_epoch(),
                log.step_essentials().len(),
                cfg.checkpoint_out
            );
            Ok(0)
        }
        TrainCmd::Calibrate { config, from } => {
            let mut cfg = load_config(&config, seed_override)?;
            if let Some(from) = from {
                cfg.checkpoint_in = Some(from.to_string_lossy().into_owned());
            }
            crate::announce(serde_json::to_value(&cfg)?);
            let ckpt_path = cfg
                .checkpoint_in
                .clone()
                .context("calibrate needs --from or checkpoint_in in the config")?;
            let ckpt = DetectorCheckpoint::load(&ckpt_path)?;
            let calib = Manifest::load(&cfg.manifest)?;
            let (out, _) = calibrate(&ckpt, &cfg, &calib)?;
            println!("calibrated checkpoint ({} groups) -> {}", out.config().n_groups, cfg.checkpoint_out);
            Ok(0)
        }
        TrainCmd::Ablation { config, content_types } => {
            let cfg = load_config(&config, seed_override)?;
            crate::announce(serde_json::to_value(&cfg)?);
            let manifest = Manifest::load(&cfg.manifest)?;
            let types: Vec<ContentType> = match content_types {
                Some(spec) => spec
                    .split(',')
                    .map(|s| {
                        ContentType::from_slug(s.trim())
                            .with_context(|| format!("unknown content type {s:?}"))
                    })
                    .collect::<Result<_>>()?,
                None => {
                    let mut present: Vec<ContentType> = ContentType::ALL
                        .into_iter()
                        .filter(|ct| manifest.records.iter().any(|r| r.content_type == *ct))
                        .collect();
                    present.sort();
                    present
                }
            };
            let outcomes = loocv_ablation(&cfg, &manifest, &types)?;
            let out_dir = PathBuf::from(&cfg.checkpoint_out);
            std::fs::create_dir_all(&out_dir)?;
            for outcome in &outcomes {
                let path = out_dir.join(format!("ablation-{}.json", outcome.held_out.slug()));
                std::fs::write(&path, outcome.report.to_json())?;
                println!(
                    "held out {}: mean acc {:.4}, mean auc {:.4} -> {}",
                    outcome.held_out.slug(),
                    outcome.report.mean_accuracy,
                    outcome.report.mean_auc,
                    path.display()
                );
            }
            Ok(0)
        }
    }
}
