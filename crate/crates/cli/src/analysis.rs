//! `ac-sweep`, `landscape` and `export-netlist`: frequency-domain views of
//! a stored system.

use std::path::PathBuf;

use anyhow::Result;
use clap::{Args, ValueEnum};
use metacircuit::acsolver::{
    ac_solve, cell_current, edge_currents, impedance_map, transmission, BinFlag, ImpedanceFlag, DEFAULT_GUARD_HZ,
};
use metacircuit::lattice::{quantize_eseries, resistor_ref, Component, ComponentKind, ESeries};
use metacircuit::signals::{measure_transfer, SweepMeasurement, SweepPreset};
use metacircuit::unitcell::{self, UnitCellParams};
use num_complex::Complex64;

use crate::output::{create_file, field, load_system, prepare_dir, sink, UsageError};
use crate::Global;

#[derive(Clone, Copy, Debug, ValueEnum)]
enum Method {
    /// Direct harmonic nodal solve.
    Ac,
    /// Simulated chirp measurement with STFT ridge extraction.
    SweptSine,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum Preset {
    /// 1 to 100 Hz.
    Pulse,
    /// 50 to 250 Hz.
    Speech,
    /// 1 to 120 Hz.
    Vibration,
}

#[derive(Args, Debug)]
pub struct SweepArgs {
    /// System document. Optional with `--fabricated`.
    system: Option<PathBuf>,
    #[arg(long, value_enum, default_value_t = Method::Ac)]
    method: Method,
    #[arg(long, value_enum, default_value_t = Preset::Pulse)]
    preset: Preset,
    /// Start frequency (Hz); overrides the preset.
    #[arg(long)]
    f_start: Option<f64>,
    /// End frequency (Hz); overrides the preset.
    #[arg(long)]
    f_end: Option<f64>,
    /// Grid spacing (Hz).
    #[arg(long, default_value_t = 0.1)]
    step_hz: f64,
    /// Bins this close to an eigenfrequency are flagged (Hz).
    #[arg(long, default_value_t = DEFAULT_GUARD_HZ)]
    guard_hz: f64,
    /// Chirp rate for `swept-sine` (Hz/s).
    #[arg(long)]
    sweep_rate: Option<f64>,
    /// Acquisition rate for `swept-sine` (Hz).
    #[arg(long)]
    rate_hz: Option<f64>,
    /// STFT window for `swept-sine` (s).
    #[arg(long)]
    window_s: Option<f64>,
    /// Single-cell analytics for this cell instead of the lattice spectrum.
    #[arg(long)]
    cell: Option<usize>,
    /// Single-cell analytics for the fabricated cell values.
    #[arg(long, conflicts_with_all = ["system", "cell"])]
    fabricated: bool,
}

fn grid(start: f64, end: f64, step: f64) -> Result<Vec<f64>> {
    if !(start > 0.0 && end >= start && step > 0.0 && start.is_finite() && end.is_finite()) {
        return Err(UsageError(format!("bad frequency grid {start}..{end} step {step}")).into());
    }
    let n = ((end - start) / step + 1e-9).floor() as usize;
    Ok((0..=n).map(|i| start + step * i as f64).collect())
}

pub fn sweep(global: &Global, args: SweepArgs) -> Result<()> {
    let preset = match args.preset {
        Preset::Pulse => SweepPreset::Pulse,
        Preset::Speech => SweepPreset::Speech,
        Preset::Vibration => SweepPreset::Vibration,
    };
    let (lo, hi) = preset.range_hz();
    let freqs = grid(args.f_start.unwrap_or(lo), args.f_end.unwrap_or(hi), args.step_hz)?;
    let mut w = csv::Writer::from_writer(sink(global.out.as_ref(), global.force)?);

    let cell_params = if args.fabricated {
        Some(UnitCellParams::fabricated())
    } else if let Some(cell) = args.cell {
        let path = args
            .system
            .as_ref()
            .ok_or_else(|| UsageError("--cell needs a system document".into()))?;
        let circ = load_system(path)?.circuit;
        if cell >= circ.d_outer.len() {
            return Err(UsageError(format!("cell {cell} out of range")).into());
        }
        Some(UnitCellParams::new(circ.d_outer[cell], circ.d_inner[cell], circ.r_internal[cell])?)
    } else {
        None
    };
    if let Some(p) = cell_params {
        w.write_record(["freq_hz", "d_eff_ohm_f2", "z_eff_ohm", "beta", "h_ohm"])?;
        for r in unitcell::sweep(&p, &freqs)? {
            w.write_record([r.freq_hz.to_string(), field(r.d_eff), field(r.z_eff), field(r.beta), field(r.h)])?;
        }
        w.flush()?;
        return Ok(());
    }

    let path = args
        .system
        .as_ref()
        .ok_or_else(|| UsageError("ac-sweep needs a system document or --fabricated".into()))?;
    let system = load_system(path)?;
    let n_out = system.sys.output_dofs().len();
    let mut header = vec!["freq_hz".to_string()];
    header.extend((1..=n_out).map(|i| format!("h{i}_ohm")));
    header.push("flag".into());
    w.write_record(&header)?;
    match args.method {
        Method::Ac => {
            for bin in transmission(&system.sys, &freqs, args.guard_hz)? {
                let mut row = vec![bin.freq_hz.to_string()];
                if bin.h.is_empty() {
                    row.extend((0..n_out).map(|_| String::new()));
                } else {
                    row.extend(bin.h.iter().map(f64::to_string));
                }
                row.push(
                    match bin.flag {
                        BinFlag::Ok => "ok",
                        BinFlag::Guard => "guard",
                        BinFlag::NearResonance => "near_resonance",
                    }
                    .into(),
                );
                w.write_record(&row)?;
            }
        }
        Method::SweptSine => {
            let mut cfg = SweepMeasurement::new(freqs[0], *freqs.last().expect("grid is non-empty"));
            if let Some(r) = args.sweep_rate {
                cfg.sweep_rate = r;
            }
            if let Some(r) = args.rate_hz {
                cfg.rate_hz = r;
            }
            if let Some(win) = args.window_s {
                cfg.window_s = win;
            }
            let eig = system.sys.eigenfrequencies_hz();
            for p in measure_transfer(&system.sys, &cfg, &freqs)? {
                let near = eig.iter().any(|e| (e - p.freq_hz).abs() < args.guard_hz);
                let mut row = vec![p.freq_hz.to_string()];
                row.extend(p.h.iter().map(f64::to_string));
                row.push(if near { "guard" } else { "ok" }.into());
                w.write_record(&row)?;
            }
        }
    }
    w.flush()?;
    Ok(())
}

#[derive(Args, Debug)]
pub struct LandscapeArgs {
    /// System document.
    system: PathBuf,
    /// Drive frequency (Hz).
    #[arg(long)]
    freq: f64,
}

/// Writes `cells.csv` and `edges.csv` into the `--out` directory for a 1 A
/// drive at the input cell.
pub fn landscape(global: &Global, args: LandscapeArgs) -> Result<()> {
    if !(args.freq.is_finite() && args.freq > 0.0) {
        return Err(UsageError(format!("frequency must be positive, got {}", args.freq)).into());
    }
    let out = global.require_out()?;
    let system = load_system(&args.system)?;
    let spec = system.spec();
    let omega = 2.0 * std::f64::consts::PI * args.freq;
    let sol = ac_solve(&system.sys, omega, Complex64::new(1.0, 0.0))?;
    let impedances = impedance_map(spec, &system.circuit, omega)?;
    prepare_dir(out, global.force)?;

    let mut cells = csv::Writer::from_writer(create_file(&out.join("cells.csv"), global.force)?);
    cells.write_record(["cell", "row", "col", "z_eff_ohm", "log10_abs_z_ohm", "flag", "current_a"])?;
    for imp in &impedances {
        let (row, col) = spec.row_col(imp.cell);
        let current = cell_current(&system.sys, &sol, imp.cell).map(|c| c.norm());
        cells.write_record([
            imp.cell.to_string(),
            row.to_string(),
            col.to_string(),
            field(imp.z_eff),
            field(imp.z_eff.filter(|z| *z != 0.0).map(|z| z.abs().log10())),
            match imp.flag {
                ImpedanceFlag::Ok => "ok",
                ImpedanceFlag::Zero => "zero",
                ImpedanceFlag::Pole => "pole",
            }
            .into(),
            field(current),
        ])?;
    }
    cells.flush()?;

    let mut edges = csv::Writer::from_writer(create_file(&out.join("edges.csv"), global.force)?);
    edges.write_record(["a", "b", "current_a", "log10_abs_current_a", "sign"])?;
    for (&(a, b), current) in spec.edges().iter().zip(edge_currents(spec, &system.sys, &sol)) {
        let Some(i) = current else { continue };
        // lossless lattices give real phasors; the sign is the direction a -> b
        let signed = if i.re.abs() >= i.im.abs() { i.re } else { i.im };
        let mag = i.norm();
        edges.write_record([
            a.to_string(),
            b.to_string(),
            (mag * signed.signum()).to_string(),
            field((mag > 0.0).then(|| mag.log10())),
            if mag == 0.0 { 0 } else { signed.signum() as i32 }.to_string(),
        ])?;
    }
    edges.flush()?;
    println!("{} cells, {} edges", impedances.len(), spec.edges().len());
    Ok(())
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum Series {
    E24,
    E96,
}

#[derive(Args, Debug)]
pub struct NetlistArgs {
    /// System document.
    system: PathBuf,
    #[arg(long, value_enum, default_value_t = Series::E96)]
    series: Series,
}

/// Component list with a `quantized` and `rel_error` column for every
/// resistor. FDNRs are listed at their exact value.
pub fn netlist(global: &Global, args: NetlistArgs) -> Result<()> {
    let system = load_system(&args.system)?;
    let spec = system.spec();
    let series = match args.series {
        Series::E24 => ESeries::E24,
        Series::E96 => ESeries::E96,
    };
    let q = quantize_eseries(&system.circuit, series)?;
    let mut w = csv::Writer::from_writer(sink(global.out.as_ref(), global.force)?);
    w.write_record(["ref", "kind", "value", "unit", "node_a", "node_b", "quantized", "rel_error"])?;
    for c in Component::list(spec, &system.circuit)? {
        let (kind, quantized) = match c.kind {
            ComponentKind::Resistor => (
                "R",
                Some(
                    q.changes
                        .iter()
                        .find(|v| resistor_ref(spec, v.slot) == c.reference)
                        .map_or((c.value, 0.0), |v| (v.quantized, v.rel_error)),
                ),
            ),
            ComponentKind::Fdnr => ("FDNR", None),
        };
        let qv = field(quantized.map(|x| x.0));
        let qe = field(quantized.map(|x| x.1));
        w.write_record([c.reference, kind.into(), c.value.to_string(), c.unit, c.node_a, c.node_b, qv, qe])?;
    }
    w.flush()?;
    log::info!("{} resistors changed, max relative error {:.4}", q.changes.len(), q.max_rel_error);
    Ok(())
}
