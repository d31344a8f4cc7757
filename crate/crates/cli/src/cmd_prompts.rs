use std::fs;
use std::path::PathBuf;

use anyhow::Result;
use clap::{Subcommand, ValueEnum};
use synthdet::promptgen::{generate_prompts, Affixes, PromptCategory};

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum CategoryArg {
    Painting,
    Face,
}

#[derive(Subcommand)]
pub enum PromptsCmd {
    /// Write one prompt per line plus a sidecar file of negative prompts
    /// (line-aligned).
    Generate {
        #[arg(long, value_enum)]
        category: CategoryArg,
        #[arg(long)]
        count: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
        /// Override the bundled positive-suffix/negative-prompt table.
        #[arg(long)]
        affixes: Option<PathBuf>,
    },
}

pub fn run(cmd: PromptsCmd, seed_override: Option<u64>) -> Result<i32> {
    match cmd {
        PromptsCmd::Generate { category, count, seed, out, affixes } => {
            let seed = seed_override.unwrap_or(seed);
            crate::announce(serde_json::json!({
                "cmd": "prompts generate",
                "category": format!("{category:?}"), "count": count, "seed": seed,
                "out": out, "affixes": affixes,
            }));
            let affixes = match &affixes {
                Some(path) => Affixes::from_toml(&fs::read_to_string(path)?)?,
                None => Affixes::builtin(),
            };
            let category = match category {
                CategoryArg::Painting => PromptCategory::Painting,
                CategoryArg::Face => PromptCategory::Face,
            };
            let specs = generate_prompts(category, count, seed, &affixes);

            let mut positive = String::new();
            let mut negative = String::new();
            for spec in &specs {
                positive.push_str(&spec.positive_text);
                positive.push('\n');
                negative.push_str(&spec.negative_text);
                negative.push('\n');
            }
            fs::write(&out, positive)?;
            let sidecar = out.with_extension("negative.txt");
            fs::write(&sidecar, negative)?;
            println!(
                "wrote {count} prompts to {} and negatives to {}",
                out.display(),
                sidecar.display()
            );
            Ok(0)
        }
    }
}
