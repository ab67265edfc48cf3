//! `gen-dataset`.

use std::path::PathBuf;

use anyhow::{Context, Result};
use clap::Args;
use metacircuit::signals::{gen_dataset as generate, write_dataset, DatasetSpec, Split};

use crate::output::{prepare_dir, UsageError};
use crate::Global;

#[derive(Args, Debug)]
pub struct GenDatasetArgs {
    /// Dataset spec JSON. Without it the default three-class dataset
    /// (30/50/70 Hz pulses) is generated.
    spec: Option<PathBuf>,
}

pub fn gen_dataset(global: &Global, args: GenDatasetArgs) -> Result<()> {
    let out = global.require_out()?;
    let mut spec = match &args.spec {
        Some(path) => {
            let text = std::fs::read_to_string(path)
                .map_err(|e| metacircuit::Error::Io {
                    path: path.clone(),
                    source: e,
                })
                .context("reading dataset spec")?;
            let raw: serde_json::Value = serde_json::from_str(&text).map_err(metacircuit::Error::from)?;
            if global.seed.is_none() && raw.get("seed").is_none() {
                return Err(UsageError("dataset generation needs a seed (--seed or \"seed\" in the dataset file)".into()).into());
            }
            let spec: DatasetSpec = serde_json::from_value(raw).map_err(metacircuit::Error::from)?;
            spec
        }
        None => {
            let seed = global
                .seed
                .ok_or_else(|| UsageError("dataset generation needs --seed".into()))?;
            DatasetSpec::three_class(seed)
        }
    };
    if let Some(seed) = global.seed {
        spec.seed = seed;
    }
    let ds = generate(&spec)?;
    prepare_dir(out, global.force)?;
    write_dataset(out, &ds)?;
    for split in [Split::Train, Split::Test] {
        let samples = ds.split(split);
        let per_class: Vec<String> = (0..ds.n_classes())
            .map(|c| samples.iter().filter(|s| s.label == c).count().to_string())
            .collect();
        println!(
            "{}: {} samples (per class {})",
            match split {
                Split::Train => "train",
                Split::Test => "test",
            },
            samples.len(),
            per_class.join("/")
        );
    }
    println!("wrote {}", out.join(metacircuit::signals::MANIFEST_NAME).display());
    Ok(())
}
