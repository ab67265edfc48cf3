use std::f64::consts::PI;
use std::fs;
use std::path::{Path, PathBuf};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::io::{load_csv, write_csv};
use super::synth::{add_noise_with, gen_pulse, Pulse};
use super::Signal;
use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ClassSpec {
    pub center_hz: f64,
    pub sigma_s: f64,
    pub amplitude: f64,
    /// Training samples for this class.
    pub count: usize,
}

/// Recipe for a labeled Gaussian-pulse dataset. Equal specs give
/// bitwise-equal datasets.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DatasetSpec {
    pub classes: Vec<ClassSpec>,
    /// Held-out samples per class.
    #[serde(default = "default_test_count")]
    pub test_count: usize,
    /// `None` disables noise.
    pub snr_db: Option<f64>,
    pub duration_s: f64,
    pub rate_hz: f64,
    /// Pulse centres are uniform in `duration/2 ± jitter_s`.
    #[serde(default = "default_jitter")]
    pub jitter_s: f64,
    pub seed: u64,
}

fn default_test_count() -> usize {
    20
}

fn default_jitter() -> f64 {
    0.1
}

impl DatasetSpec {
    /// Three classes at 30, 50 and 70 Hz: 2 kHz, 1 s, σ = 0.1 s, 20 dB SNR,
    /// 120 training and 20 held-out samples per class.
    pub fn three_class(seed: u64) -> Self {
        let class = |f| ClassSpec {
            center_hz: f,
            sigma_s: 0.1,
            amplitude: 1.0,
            count: 120,
        };
        Self {
            classes: vec![class(30.0), class(50.0), class(70.0)],
            test_count: 20,
            snr_db: Some(20.0),
            duration_s: 1.0,
            rate_hz: 2000.0,
            jitter_s: 0.1,
            seed,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.classes.is_empty() {
            return Err(Error::invalid("dataset has no classes"));
        }
        if !(self.rate_hz.is_finite() && self.rate_hz > 0.0) {
            return Err(Error::invalid("rate must be positive"));
        }
        if !(self.duration_s.is_finite() && self.duration_s > 0.0) {
            return Err(Error::invalid("duration must be positive"));
        }
        if !(self.jitter_s.is_finite() && self.jitter_s >= 0.0) {
            return Err(Error::invalid("jitter must be non-negative"));
        }
        for (i, c) in self.classes.iter().enumerate() {
            if c.count == 0 {
                return Err(Error::invalid(format!("class {i} has zero samples")));
            }
            if c.center_hz >= self.rate_hz / 2.0 {
                return Err(Error::Nyquist {
                    freq: c.center_hz,
                    rate: self.rate_hz,
                });
            }
            if !(c.sigma_s > 0.0 && c.amplitude.is_finite()) {
                return Err(Error::invalid(format!("class {i} has invalid envelope")));
            }
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Test,
}

#[derive(Clone, Debug, PartialEq)]
pub struct LabeledSignal {
    pub id: usize,
    pub label: usize,
    pub split: Split,
    pub signal: Signal,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Dataset {
    pub rate: f64,
    pub classes: Vec<ClassSpec>,
    pub samples: Vec<LabeledSignal>,
}

impl Dataset {
    pub fn split(&self, split: Split) -> Vec<&LabeledSignal> {
        self.samples.iter().filter(|s| s.split == split).collect()
    }

    pub fn n_classes(&self) -> usize {
        self.classes.len()
    }
}

/// Labels in round-robin class order until every class reaches `count(c)`.
fn round_robin(n_classes: usize, count: impl Fn(usize) -> usize) -> Vec<usize> {
    let counts: Vec<usize> = (0..n_classes).map(count).collect();
    let max = counts.iter().copied().max().unwrap_or(0);
    (0..max)
        .flat_map(|r| (0..n_classes).filter(|&c| r < counts[c]).collect::<Vec<_>>())
        .collect()
}

pub fn gen_dataset(spec: &DatasetSpec) -> Result<Dataset> {
    spec.validate()?;
    let n = spec.classes.len();
    let jobs: Vec<(usize, Split)> = round_robin(n, |c| spec.classes[c].count)
        .into_iter()
        .map(|l| (l, Split::Train))
        .chain(
            round_robin(n, |_| spec.test_count)
                .into_iter()
                .map(|l| (l, Split::Test)),
        )
        .collect();
    let samples = jobs
        .par_iter()
        .enumerate()
        .map(|(id, &(label, split))| {
            let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
            rng.set_stream(id as u64);
            let class = &spec.classes[label];
            let jitter = if spec.jitter_s > 0.0 {
                rng.random_range(-spec.jitter_s..=spec.jitter_s)
            } else {
                0.0
            };
            let pulse = Pulse {
                center_hz: class.center_hz,
                sigma_s: class.sigma_s,
                amplitude: class.amplitude,
                t_center: 0.5 * spec.duration_s + jitter,
                phase: rng.random_range(0.0..2.0 * PI),
            };
            let clean = gen_pulse(&pulse, spec.duration_s, spec.rate_hz)?;
            let signal = match spec.snr_db {
                Some(snr) => add_noise_with(&clean, snr, &mut rng)?,
                None => clean,
            };
            Ok(LabeledSignal {
                id,
                label,
                split,
                signal,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(Dataset {
        rate: spec.rate_hz,
        classes: spec.classes.clone(),
        samples,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ManifestEntry {
    pub path: PathBuf,
    pub label: usize,
    pub split: Split,
}

/// `manifest.json`: sample paths are relative to the manifest's directory.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub rate: f64,
    pub classes: Vec<ClassSpec>,
    pub samples: Vec<ManifestEntry>,
}

pub const MANIFEST_NAME: &str = "manifest.json";

/// Writes one CSV per sample plus `manifest.json` into `dir`.
pub fn write_dataset(dir: &Path, ds: &Dataset) -> Result<Manifest> {
    for split in ["train", "test"] {
        fs::create_dir_all(dir.join(split)).map_err(|e| Error::io(dir.join(split), e))?;
    }
    let mut entries = Vec::with_capacity(ds.samples.len());
    for s in &ds.samples {
        let sub = match s.split {
            Split::Train => "train",
            Split::Test => "test",
        };
        let rel = PathBuf::from(sub).join(format!("{:05}_c{}.csv", s.id, s.label));
        let full = dir.join(&rel);
        let file = fs::File::create(&full).map_err(|e| Error::io(&full, e))?;
        write_csv(&s.signal, std::io::BufWriter::new(file))?;
        entries.push(ManifestEntry {
            path: rel,
            label: s.label,
            split: s.split,
        });
    }
    let manifest = Manifest {
        rate: ds.rate,
        classes: ds.classes.clone(),
        samples: entries,
    };
    let path = dir.join(MANIFEST_NAME);
    fs::write(&path, serde_json::to_string_pretty(&manifest)?).map_err(|e| Error::io(&path, e))?;
    Ok(manifest)
}

/// Loads a dataset from a manifest file or a directory containing one.
pub fn load_dataset(path: &Path) -> Result<Dataset> {
    let manifest_path = if path.is_dir() {
        path.join(MANIFEST_NAME)
    } else {
        path.to_path_buf()
    };
    let text = fs::read_to_string(&manifest_path).map_err(|e| Error::io(&manifest_path, e))?;
    let manifest: Manifest = serde_json::from_str(&text)?;
    let base = manifest_path.parent().unwrap_or(Path::new("."));
    let samples = manifest
        .samples
        .par_iter()
        .enumerate()
        .map(|(id, e)| {
            if e.label >= manifest.classes.len() {
                return Err(Error::invalid(format!(
                    "sample {} has label {} but only {} classes",
                    e.path.display(),
                    e.label,
                    manifest.classes.len()
                )));
            }
            Ok(LabeledSignal {
                id,
                label: e.label,
                split: e.split,
                signal: load_csv(&base.join(&e.path), Some(manifest.rate))?,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(Dataset {
        rate: manifest.rate,
        classes: manifest.classes,
        samples,
    })
}
