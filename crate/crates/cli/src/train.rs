//! `train`: runs the trainer, writes per-epoch checkpoints and metrics, and
//! exports the trained network as circuit documents.

use std::io::Write;
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use clap::Args;
use metacircuit::lattice::{
    ESeries, LatticeDocument, LatticeSpec, DEFAULT_INNER_MASS, DEFAULT_OUTER_MASS,
};
use metacircuit::signals::{load_dataset, Split};
use metacircuit::trainer::{
    export_trained, init_params, resume, train as run_training, Checkpoint, EpochMetrics,
    ExportReport, InitConfig, StopReason, TrainConfig,
};
use serde::{Deserialize, Serialize};

use crate::output::{create_file, prepare_dir, write_json, UsageError};
use crate::Global;

#[derive(Args, Debug)]
pub struct TrainArgs {
    /// Training config JSON.
    config: PathBuf,
    /// Continue from a checkpoint written by an earlier run.
    #[arg(long)]
    resume: Option<PathBuf>,
}

/// Config file: every [`TrainConfig`] field at the top level plus the
/// problem definition. Relative paths resolve against the config's
/// directory.
#[derive(Debug, Deserialize)]
struct TrainFile {
    dataset: PathBuf,
    /// Lattice spec JSON; the 5×5 default when absent.
    #[serde(default)]
    lattice: Option<PathBuf>,
    /// Initialization band; taken from the dataset's classes when absent.
    #[serde(default)]
    init: Option<InitConfig>,
    #[serde(default = "default_outer_mass")]
    outer_mass: f64,
    #[serde(default = "default_inner_mass")]
    inner_mass: f64,
    /// Geometric-mean resistance of the exported circuit (Ω).
    #[serde(default = "default_r_target")]
    r_target: f64,
    #[serde(default = "default_series")]
    series: ESeries,
    #[serde(flatten)]
    train: TrainConfig,
}

fn default_outer_mass() -> f64 {
    DEFAULT_OUTER_MASS
}

fn default_inner_mass() -> f64 {
    DEFAULT_INNER_MASS
}

fn default_r_target() -> f64 {
    1e6
}

fn default_series() -> ESeries {
    ESeries::E96
}

/// Contents of `final.json`.
#[derive(Serialize)]
struct FinalArtifact<'a> {
    stop: StopReason,
    checkpoint: &'a Checkpoint,
    export: &'a ExportReport,
}

fn resolve(base: &Path, p: &Path) -> PathBuf {
    if p.is_absolute() {
        p.to_path_buf()
    } else {
        base.join(p)
    }
}

fn read_config(path: &Path, seed: Option<u64>) -> Result<TrainFile> {
    let text = std::fs::read_to_string(path).map_err(|e| metacircuit::Error::Io {
        path: path.into(),
        source: e,
    })?;
    let mut raw: serde_json::Value = serde_json::from_str(&text).map_err(metacircuit::Error::from)?;
    let obj = raw
        .as_object_mut()
        .ok_or_else(|| anyhow::anyhow!("{}: config must be a JSON object", path.display()))?;
    match seed {
        Some(s) => {
            obj.insert("seed".into(), s.into());
        }
        None if !obj.contains_key("seed") => {
            return Err(UsageError("training needs a seed (--seed or \"seed\" in the config)".into()).into());
        }
        None => {}
    }
    let cfg: TrainFile = serde_json::from_value(raw)
        .map_err(metacircuit::Error::from)
        .with_context(|| format!("parsing {}", path.display()))?;
    Ok(cfg)
}

fn write_metrics(path: &Path, history: &[EpochMetrics]) -> Result<()> {
    let mut w = create_file(path, true)?;
    writeln!(w, "epoch,loss,train_acc,val_acc")?;
    for m in history {
        let val = m.val_acc.map_or_else(String::new, |v| v.to_string());
        writeln!(w, "{},{},{},{}", m.epoch, m.loss, m.train_acc, val)?;
    }
    w.flush()?;
    Ok(())
}

pub fn train(global: &Global, args: TrainArgs) -> Result<()> {
    let out = global.require_out()?.clone();
    let file = read_config(&args.config, global.seed)?;
    let base = args.config.parent().unwrap_or(Path::new("."));
    let data = load_dataset(&resolve(base, &file.dataset)).context("loading dataset")?;
    let spec = match &file.lattice {
        Some(p) => {
            let p = resolve(base, p);
            let text = std::fs::read_to_string(&p).map_err(|e| metacircuit::Error::Io {
                path: p.clone(),
                source: e,
            })?;
            serde_json::from_str::<LatticeSpec>(&text).map_err(metacircuit::Error::from)?
        }
        None => LatticeSpec::default_5x5(),
    };

    let start = match &args.resume {
        Some(p) => {
            let text = std::fs::read_to_string(p).map_err(|e| metacircuit::Error::Io {
                path: p.clone(),
                source: e,
            })?;
            let mut ck: Checkpoint = serde_json::from_str(&text)
                .map_err(metacircuit::Error::from)
                .with_context(|| format!("parsing checkpoint {}", p.display()))?;
            if ck.spec != spec {
                anyhow::bail!("checkpoint lattice differs from the configured lattice");
            }
            if ck.config.epochs != file.train.epochs {
                log::info!("epoch budget {} -> {}", ck.config.epochs, file.train.epochs);
                ck.config.epochs = file.train.epochs;
            }
            Some(ck)
        }
        None => None,
    };

    prepare_dir(&out, global.force)?;
    let ck_dir = out.join("checkpoints");
    std::fs::create_dir_all(&ck_dir).with_context(|| format!("creating {}", ck_dir.display()))?;
    let metrics_path = out.join("metrics.csv");
    let on_epoch = |ck: &Checkpoint| -> metacircuit::Result<()> {
        let path = ck_dir.join(format!("epoch_{:04}.json", ck.epoch));
        let write = || -> Result<()> {
            write_json(&path, ck, true)?;
            write_metrics(&metrics_path, &ck.history)
        };
        write().map_err(|e| metacircuit::Error::Io {
            path: path.clone(),
            source: std::io::Error::other(format!("{e:#}")),
        })?;
        if let Some(m) = ck.history.last() {
            println!(
                "epoch {:4}  loss {:.6}  train_acc {:.4}  val_acc {}",
                m.epoch,
                m.loss,
                m.train_acc,
                m.val_acc.map_or("-".into(), |v| format!("{v:.4}"))
            );
        }
        Ok(())
    };
    let outcome = match start {
        Some(ck) => {
            write_metrics(&metrics_path, &ck.history)?;
            resume(ck, &data, on_epoch)?
        }
        None => {
            let init = file.init.unwrap_or_else(|| InitConfig::for_dataset(&data));
            let mech = init_params(&spec, file.outer_mass, file.inner_mass, &init, file.train.seed)?;
            run_training(&spec, &mech, &data, &file.train, on_epoch)?
        }
    };

    let held_out = data.split(Split::Test);
    let report = export_trained(
        &spec,
        &outcome.mech,
        file.r_target,
        file.series,
        outcome.dt,
        &held_out,
        outcome.checkpoint.config.prob_epsilon,
    )?;
    let doc = LatticeDocument::new(&spec, &report.circuit, report.scaling)?.with_dt(Some(outcome.dt));
    write_json(&out.join("trained.json"), &doc, true)?;
    let series = serde_json::to_value(file.series)?;
    let quantized = LatticeDocument::new(&spec, &report.quantization.params, report.scaling)?
        .with_dt(Some(outcome.dt));
    write_json(
        &out.join(format!("trained_{}.json", series.as_str().unwrap_or("quantized"))),
        &quantized,
        true,
    )?;
    write_json(
        &out.join("final.json"),
        &FinalArtifact {
            stop: outcome.stop,
            checkpoint: &outcome.checkpoint,
            export: &report,
        },
        true,
    )?;
    println!(
        "stopped: {:?} after {} epochs; held-out accuracy {:.4} (circuit {:.4}, {:?} {:.4})",
        outcome.stop,
        outcome.checkpoint.epoch,
        report.accuracy_mechanical,
        report.accuracy_circuit,
        report.quantization.series,
        report.accuracy_quantized
    );
    Ok(())
}
