//! Error classification and overwrite-safe output helpers.

use std::fmt;
use std::fs::{self, File};
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use metacircuit::lattice::{CircuitParams, LatticeDocument, LatticeSpec};
use metacircuit::simulator::{assemble, SystemMatrices};
use serde::Serialize;

/// Bad command-line usage; maps to exit code 1.
#[derive(Debug)]
pub struct UsageError(pub String);

impl fmt::Display for UsageError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for UsageError {}

/// 1 for usage errors, 3 for numeric failures, 2 for everything else.
pub fn exit_code(err: &anyhow::Error) -> u8 {
    for cause in err.chain() {
        if cause.is::<UsageError>() {
            return 1;
        }
        if let Some(e) = cause.downcast_ref::<metacircuit::Error>() {
            return if e.is_numeric() { 3 } else { 2 };
        }
    }
    2
}

fn refuse_existing(path: &Path, force: bool) -> Result<()> {
    if !force && path.exists() {
        anyhow::bail!("{} already exists (use --force to overwrite)", path.display());
    }
    Ok(())
}

/// Creates `path` for writing, refusing to clobber it without `force`.
pub fn create_file(path: &Path, force: bool) -> Result<BufWriter<File>> {
    refuse_existing(path, force)?;
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    }
    let file = File::create(path).with_context(|| format!("creating {}", path.display()))?;
    Ok(BufWriter::new(file))
}

/// Makes sure `dir` exists and is empty, unless `force` allows reuse.
pub fn prepare_dir(dir: &Path, force: bool) -> Result<()> {
    if dir.exists() {
        let occupied = fs::read_dir(dir)
            .with_context(|| format!("reading {}", dir.display()))?
            .next()
            .is_some();
        if occupied && !force {
            anyhow::bail!("{} is not empty (use --force to overwrite)", dir.display());
        }
    }
    fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))
}

/// Pretty JSON with a trailing newline.
pub fn write_json<T: Serialize>(path: &Path, value: &T, force: bool) -> Result<()> {
    let mut w = create_file(path, force)?;
    serde_json::to_writer_pretty(&mut w, value)?;
    writeln!(w)?;
    w.flush()?;
    Ok(())
}

/// The file named by `--out`, or stdout.
pub fn sink(out: Option<&PathBuf>, force: bool) -> Result<Box<dyn Write>> {
    Ok(match out {
        Some(p) => Box::new(create_file(p, force)?),
        None => Box::new(BufWriter::new(io::stdout().lock())),
    })
}

/// A system document together with its assembled matrices.
pub struct LoadedSystem {
    pub doc: LatticeDocument,
    pub circuit: CircuitParams,
    pub sys: SystemMatrices,
}

impl LoadedSystem {
    pub fn spec(&self) -> &LatticeSpec {
        &self.doc.spec
    }
}

pub fn load_system(path: &Path) -> Result<LoadedSystem> {
    let doc = LatticeDocument::load(path).with_context(|| format!("loading system {}", path.display()))?;
    let circuit = doc.circuit()?;
    let sys = assemble(&doc.spec, &circuit)?;
    Ok(LoadedSystem { doc, circuit, sys })
}

/// Formats a value for CSV; `None` becomes an empty field.
pub fn field(v: Option<f64>) -> String {
    v.map_or_else(String::new, |x| x.to_string())
}
