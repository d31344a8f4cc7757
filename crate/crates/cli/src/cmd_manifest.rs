use std::path::PathBuf;

use anyhow::{Context, Result};
use clap::Subcommand;
use synthdet::manifest::{
    build_manifest, sample_calibration, scan_source_tree, split_manifest, validate_manifest,
    Manifest,
};

#[derive(Subcommand)]
pub enum ManifestCmd {
    /// Build a balanced manifest from a source tree
    /// (<sources>/<content>/<real|synthetic>/<provider>/<files>).
    Build {
        #[arg(long)]
        sources: PathBuf,
        #[arg(long)]
        total: u64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Assign train/test splits, stratified per cell.
    Split {
        #[arg(long)]
        manifest: PathBuf,
        #[arg(long, default_value_t = 0.8)]
        fraction: f64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Sample a balanced calibration subset from the train split.
    Calibrate {
        #[arg(long)]
        manifest: PathBuf,
        #[arg(long)]
        total: u64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Check every manifest invariant; multiple files are merged first.
    Validate {
        #[arg(required = true)]
        manifests: Vec<PathBuf>,
    },
}

pub fn run(cmd: ManifestCmd, seed_override: Option<u64>) -> Result<i32> {
    match cmd {
        ManifestCmd::Build { sources, total, seed, out } => {
            let seed = seed_override.unwrap_or(seed);
            crate::announce(serde_json::json!({
                "cmd": "manifest build",
                "sources": sources, "total": total, "seed": seed, "out": out,
            }));
            let listings = scan_source_tree(&sources)
                .with_context(|| format!("scanning {}", sources.display()))?;
            let manifest = build_manifest(&listings, total, seed)?;
            manifest.save(&out)?;
            println!("wrote {} records to {}", manifest.len(), out.display());
            Ok(0)
        }
        ManifestCmd::Split { manifest, fraction, seed, out } => {
            let seed = seed_override.unwrap_or(seed);
            crate::announce(serde_json::json!({
                "cmd": "manifest split",
                "manifest": manifest, "fraction": fraction, "seed": seed, "out": out,
            }));
            let m = Manifest::load(&manifest)?;
            let s = split_manifest(&m, fraction, seed)?;
            s.save(&out)?;
            let train = s.split_records(synthdet::manifest::Split::Train).count();
            let test = s.split_records(synthdet::manifest::Split::Test).count();
            println!("wrote {train} train / {test} test records to {}", out.display());
            Ok(0)
        }
        ManifestCmd::Calibrate { manifest, total, seed, out } => {
            let seed = seed_override.unwrap_or(seed);
            crate::announce(serde_json::json!({
                "cmd": "manifest calibrate",
                "manifest": manifest, "total": total, "seed": seed, "out": out,
            }));
            let m = Manifest::load(&manifest)?;
            let calib = sample_calibration(&m, total, seed)?;
            calib.save(&out)?;
            println!("wrote {} calibration records to {}", calib.len(), out.display());
            Ok(0)
        }
        ManifestCmd::Validate { manifests } => {
            crate::announce(serde_json::json!({
                "cmd": "manifest validate",
                "manifests": manifests,
            }));
            let mut merged: Option<Manifest> = None;
            for path in &manifests {
                let m = Manifest::load(path)?;
                match &mut merged {
                    None => merged = Some(m),
                    Some(base) => base.extend_from(&m),
                }
            }
            let merged = merged.expect("at least one manifest required by clap");
            let report = validate_manifest(&merged);
            for w in &report.warnings {
                eprintln!("warning: {w}");
            }
            if report.is_clean() {
                println!("ok: {} records, no violations", merged.len());
                Ok(0)
            } else {
                for v in &report.violations {
                    eprintln!("violation: {v}");
                }
                eprintln!(
                    "{}",
                    serde_json::json!({
                        "violations": report.violations.iter().map(|v| v.to_string()).collect::<Vec<_>>(),
                    })
                );
                Ok(1)
            }
        }
    }
}
