//! `classify` and `simulate`: time-domain runs of a stored system.

use std::io::Write;
use std::path::PathBuf;

use anyhow::{Context, Result};
use clap::{Args, ValueEnum};
use metacircuit::signals::{load_csv, load_dataset, Manifest, Signal, Split, MANIFEST_NAME};
use metacircuit::simulator::{classify as readout, integrate_energy, run as simulate_run, Record, SimConfig};
use metacircuit::trainer::{auto_dt, substeps};
use rayon::prelude::*;
use serde::Serialize;

use crate::output::{load_system, sink, LoadedSystem, UsageError};
use crate::Global;

#[derive(Args, Debug)]
pub struct ClassifyArgs {
    /// System document (e.g. `trained.json` from `train`).
    system: PathBuf,
    /// Signal CSV files (`value` or `t,value` columns).
    files: Vec<PathBuf>,
    /// Labeled dataset directory or manifest; adds a confusion matrix.
    #[arg(long)]
    dataset: Option<PathBuf>,
    /// Which part of `--dataset` to classify.
    #[arg(long, value_enum, default_value_t = SplitArg::Test)]
    split: SplitArg,
    /// Sample rate for CSVs without a time column (Hz).
    #[arg(long)]
    rate: Option<f64>,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum SplitArg {
    Train,
    Test,
    All,
}

#[derive(Serialize)]
struct Verdict {
    file: String,
    energies: Vec<f64>,
    probs: Vec<f64>,
    class: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    label: Option<usize>,
}

#[derive(Serialize)]
struct Report {
    results: Vec<Verdict>,
    #[serde(skip_serializing_if = "Option::is_none")]
    confusion: Option<Vec<Vec<usize>>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    accuracy: Option<f64>,
}

/// Simulation step for a signal: the document's stored step, else the
/// automatic choice for this system.
fn step_for(system: &LoadedSystem, sig: &Signal) -> f64 {
    system.doc.dt.unwrap_or_else(|| auto_dt(&system.sys, sig.dt()))
}

/// Output energies of one signal, upsampled by zero-order hold to the
/// simulation step.
fn energies(system: &LoadedSystem, sig: &Signal) -> metacircuit::Result<Vec<f64>> {
    let dt = step_for(system, sig);
    let drive = sig.hold_upsample(substeps(sig.dt(), dt)?)?;
    let traj = simulate_run(&system.sys, &drive, &SimConfig::new(dt))?;
    integrate_energy(&traj, system.sys.output_dofs())
}

pub fn classify(global: &Global, args: ClassifyArgs) -> Result<()> {
    let system = load_system(&args.system)?;
    let mut jobs: Vec<(String, Option<usize>, Signal)> = Vec::new();
    if let Some(ds_path) = &args.dataset {
        let manifest_path = if ds_path.is_dir() {
            ds_path.join(MANIFEST_NAME)
        } else {
            ds_path.clone()
        };
        let ds = load_dataset(&manifest_path).context("loading dataset")?;
        let text = std::fs::read_to_string(&manifest_path).map_err(|e| metacircuit::Error::Io {
            path: manifest_path.clone(),
            source: e,
        })?;
        let manifest: Manifest = serde_json::from_str(&text).map_err(metacircuit::Error::from)?;
        for (s, entry) in ds.samples.into_iter().zip(manifest.samples) {
            let keep = match args.split {
                SplitArg::All => true,
                SplitArg::Train => s.split == Split::Train,
                SplitArg::Test => s.split == Split::Test,
            };
            if keep {
                jobs.push((entry.path.display().to_string(), Some(s.label), s.signal));
            }
        }
    }
    for f in &args.files {
        jobs.push((f.display().to_string(), None, load_csv(f, args.rate)?));
    }
    if jobs.is_empty() {
        return Err(UsageError("no signals to classify".into()).into());
    }
    let results = jobs
        .par_iter()
        .map(|(file, label, sig)| {
            let e = energies(&system, sig).with_context(|| format!("simulating {file}"))?;
            let c = readout(&e).with_context(|| format!("classifying {file}"))?;
            Ok(Verdict {
                file: file.clone(),
                energies: e,
                probs: c.probabilities,
                class: c.class,
                label: *label,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let k = system.sys.output_dofs().len();
    let labeled: Vec<&Verdict> = results.iter().filter(|v| v.label.is_some()).collect();
    let (confusion, accuracy) = if labeled.is_empty() {
        (None, None)
    } else {
        let mut m = vec![vec![0; k]; k];
        for v in &labeled {
            let l = v.label.expect("filtered on labels");
            if l >= k {
                anyhow::bail!("{}: label {l} but the system has {k} outputs", v.file);
            }
            m[l][v.class] += 1;
        }
        let correct = labeled.iter().filter(|v| v.label == Some(v.class)).count();
        (Some(m), Some(correct as f64 / labeled.len() as f64))
    };
    let report = Report {
        results,
        confusion,
        accuracy,
    };
    let mut w = sink(global.out.as_ref(), global.force)?;
    serde_json::to_writer_pretty(&mut w, &report)?;
    writeln!(w)?;
    w.flush()?;
    if let Some(a) = report.accuracy {
        log::info!("accuracy {a:.4}");
    }
    Ok(())
}

#[derive(Args, Debug)]
pub struct SimulateArgs {
    /// System document.
    system: PathBuf,
    /// Input current CSV (`value` or `t,value` columns).
    input: PathBuf,
    /// Record every node instead of only the outputs.
    #[arg(long)]
    all: bool,
    /// Sample rate for an input without a time column (Hz).
    #[arg(long)]
    rate: Option<f64>,
    /// Simulation step (s); must divide the input sample period.
    #[arg(long)]
    dt: Option<f64>,
}

pub fn simulate(global: &Global, args: SimulateArgs) -> Result<()> {
    let system = load_system(&args.system)?;
    let sig = load_csv(&args.input, args.rate)?;
    let dt = args.dt.unwrap_or_else(|| step_for(&system, &sig));
    let drive = sig.hold_upsample(substeps(sig.dt(), dt)?)?;
    let record = if args.all { Record::All } else { Record::Outputs };
    let traj = simulate_run(&system.sys, &drive, &SimConfig::new(dt).record(record))?;

    let mut names = vec![String::new(); system.sys.n_dofs()];
    for (cell, dofs) in system.sys.dof_map().iter().enumerate() {
        if let Some(d) = dofs {
            names[d.outer] = format!("c{cell}o_v");
            names[d.inner] = format!("c{cell}i_v");
        }
    }
    for (i, &d) in system.sys.output_dofs().iter().enumerate() {
        names[d] = format!("out{}_v", i + 1);
    }
    let mut w = csv::Writer::from_writer(sink(global.out.as_ref(), global.force)?);
    let mut header = vec!["t_s".to_string()];
    header.extend(traj.dofs.iter().map(|&d| names[d].clone()));
    w.write_record(&header)?;
    for (t, time) in traj.times().into_iter().enumerate() {
        let mut row = vec![time.to_string()];
        row.extend(traj.channels.iter().map(|ch| ch[t].to_string()));
        w.write_record(&row)?;
    }
    w.flush()?;
    Ok(())
}
