//! Harmonic nodal analysis of the lattice.
//!
//! At angular frequency ω an FDNR `D` has admittance `(jω)²D = −ω²D`, so the
//! node equations read `(Y − ω²D)·v = e_in·i_in`. The ideal lattice is
//! lossless, which makes the system matrix real, symmetric and indefinite
//! with true singularities at the eigenfrequencies.

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::lattice::{CircuitParams, LatticeSpec};
use crate::simulator::{BranchKind, SystemMatrices};
use crate::unitcell::{z_eff, UnitCellParams};

/// Bins closer than this to an eigenfrequency are skipped by sweeps (Hz).
pub const DEFAULT_GUARD_HZ: f64 = 0.25;

/// Largest accepted 1-norm condition number of the harmonic system.
pub const CONDITION_LIMIT: f64 = 1e12;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AcSolution {
    pub omega: f64,
    pub node_voltages: Vec<Complex64>,
    pub injected_current: Complex64,
    pub injection_dof: usize,
    /// 1-norm condition number of the solved matrix.
    pub condition: f64,
}

fn harmonic_matrix(sys: &SystemMatrices, omega: f64) -> DMatrix<Complex64> {
    let n = sys.n_dofs();
    let w2 = omega * omega;
    let jwg = Complex64::new(0.0, omega * sys.damping());
    DMatrix::from_fn(n, n, |i, j| {
        let mut a = Complex64::from(sys.admittance()[(i, j)]);
        if i == j {
            a += -w2 * sys.inertia()[i] + jwg;
        }
        a
    })
}

fn norm1(m: &DMatrix<Complex64>) -> f64 {
    m.column_iter()
        .map(|c| c.iter().map(|z| z.norm()).sum::<f64>())
        .fold(0.0, f64::max)
}

/// Steady-state node voltages for a current `i_in` injected at the input DOF.
pub fn ac_solve(sys: &SystemMatrices, omega: f64, i_in: Complex64) -> Result<AcSolution> {
    ac_solve_at(sys, omega, sys.input_dof(), i_in)
}

/// Like [`ac_solve`] with the current injected at an arbitrary DOF.
pub fn ac_solve_at(
    sys: &SystemMatrices,
    omega: f64,
    dof: usize,
    i_in: Complex64,
) -> Result<AcSolution> {
    if !(omega.is_finite() && omega > 0.0) {
        return Err(Error::invalid(format!("angular frequency must be positive, got {omega}")));
    }
    if dof >= sys.n_dofs() {
        return Err(Error::invalid(format!("injection DOF {dof} out of range")));
    }
    let a = harmonic_matrix(sys, omega);
    let lu = a.clone().full_piv_lu();
    let inv = lu
        .try_inverse()
        .ok_or(Error::NearResonance {
            omega,
            condition: f64::INFINITY,
        })?;
    let condition = norm1(&a) * norm1(&inv);
    if !condition.is_finite() || condition > CONDITION_LIMIT {
        return Err(Error::NearResonance { omega, condition });
    }
    let mut b = DVector::zeros(sys.n_dofs());
    b[dof] = i_in;
    let v = lu.solve(&b).ok_or(Error::NearResonance { omega, condition })?;
    Ok(AcSolution {
        omega,
        node_voltages: v.iter().copied().collect(),
        injected_current: i_in,
        injection_dof: dof,
        condition,
    })
}

/// Signed phasor currents derived from a solution.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BranchCurrents {
    /// Current through each branch of `sys.branches()`, flowing from `a`
    /// to `b` (or to ground).
    pub branch: Vec<Complex64>,
    /// Current from each DOF to ground through its FDNR, `−ω²D·v`.
    pub shunt: Vec<Complex64>,
    /// Largest per-node current imbalance relative to |i_in|.
    pub kcl_residual: f64,
}

pub fn branch_currents(sys: &SystemMatrices, sol: &AcSolution) -> BranchCurrents {
    let v = &sol.node_voltages;
    let w = sol.omega;
    let branch: Vec<Complex64> = sys
        .branches()
        .iter()
        .map(|br| {
            let vb = br.b.map_or(Complex64::new(0.0, 0.0), |b| v[b]);
            (v[br.a] - vb) * br.conductance
        })
        .collect();
    let shunt: Vec<Complex64> = v
        .iter()
        .zip(sys.inertia())
        .map(|(vi, d)| vi * (-w * w * d))
        .collect();
    let jwg = Complex64::new(0.0, w * sys.damping());
    let mut leaving: Vec<Complex64> = shunt
        .iter()
        .zip(v)
        .map(|(s, vi)| s + jwg * vi)
        .collect();
    for (br, i) in sys.branches().iter().zip(&branch) {
        leaving[br.a] += i;
        if let Some(b) = br.b {
            leaving[b] -= i;
        }
    }
    leaving[sol.injection_dof] -= sol.injected_current;
    let scale = sol.injected_current.norm();
    let worst = leaving.iter().map(|z| z.norm()).fold(0.0, f64::max);
    let kcl_residual = if scale > 0.0 { worst / scale } else { worst };
    BranchCurrents {
        branch,
        shunt,
        kcl_residual,
    }
}

/// Current into a cell from the lattice: the sum of the currents through
/// its two FDNRs, `−ω²(D_M v_o + D_m v_i)`. This is the branch current that
/// multiplies the cell's effective impedance.
pub fn cell_current(sys: &SystemMatrices, sol: &AcSolution, cell: usize) -> Option<Complex64> {
    let dofs = (*sys.dof_map().get(cell)?)?;
    let w2 = sol.omega * sol.omega;
    let v = &sol.node_voltages;
    Some(
        -(v[dofs.outer] * sys.inertia()[dofs.outer] + v[dofs.inner] * sys.inertia()[dofs.inner])
            * w2,
    )
}

/// Current through each lattice edge from cell `a` to cell `b`; `None` when
/// both ends are grounded.
pub fn edge_currents(
    spec: &LatticeSpec,
    sys: &SystemMatrices,
    sol: &AcSolution,
) -> Vec<Option<Complex64>> {
    let cell_v = |c: usize| {
        sys.dof_map()
            .get(c)
            .copied()
            .flatten()
            .map_or(Complex64::new(0.0, 0.0), |d| sol.node_voltages[d.outer])
    };
    let mut out = vec![None; spec.n_edges()];
    for br in sys.branches() {
        if let BranchKind::Coupling { edge } = br.kind {
            let (a, b) = spec.edges()[edge];
            out[edge] = Some((cell_v(a) - cell_v(b)) * br.conductance);
        }
    }
    out
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ImpedanceFlag {
    Ok,
    Zero,
    Pole,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct CellImpedance {
    pub cell: usize,
    /// Signed Z_eff (Ω); `None` at a pole.
    pub z_eff: Option<f64>,
    pub flag: ImpedanceFlag,
}

/// Effective impedance of every non-grounded cell at ω.
pub fn impedance_map(
    spec: &LatticeSpec,
    circ: &CircuitParams,
    omega: f64,
) -> Result<Vec<CellImpedance>> {
    circ.validate_for(spec)?;
    spec.active_cells()
        .map(|cell| {
            let p = UnitCellParams::new(circ.d_outer[cell], circ.d_inner[cell], circ.r_internal[cell])?;
            Ok(match z_eff(&p, omega) {
                Ok(z) if z == 0.0 => CellImpedance {
                    cell,
                    z_eff: Some(0.0),
                    flag: ImpedanceFlag::Zero,
                },
                Ok(z) => CellImpedance {
                    cell,
                    z_eff: Some(z),
                    flag: ImpedanceFlag::Ok,
                },
                Err(Error::Pole { .. }) => CellImpedance {
                    cell,
                    z_eff: None,
                    flag: ImpedanceFlag::Pole,
                },
                Err(e) => return Err(e),
            })
        })
        .collect()
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BinFlag {
    Ok,
    /// Within the guard band of an eigenfrequency; not solved.
    Guard,
    /// Solved but rejected by the condition check.
    NearResonance,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TransmissionBin {
    pub freq_hz: f64,
    /// |v_out,i / i_in| per output (V/A); empty for flagged bins.
    pub h: Vec<f64>,
    pub flag: BinFlag,
}

/// Per-output transfer magnitudes over a frequency grid. Bins within
/// `guard_hz` of an eigenfrequency, or whose solve is ill-conditioned, are
/// flagged instead of valued.
pub fn transmission(
    sys: &SystemMatrices,
    freqs_hz: &[f64],
    guard_hz: f64,
) -> Result<Vec<TransmissionBin>> {
    if let Some(f) = freqs_hz.iter().find(|f| !(f.is_finite() && **f > 0.0)) {
        return Err(Error::invalid(format!("frequency {f} must be positive")));
    }
    let eig = sys.eigenfrequencies_hz();
    let one = Complex64::new(1.0, 0.0);
    freqs_hz
        .par_iter()
        .map(|&f| {
            if eig.iter().any(|e| (e - f).abs() < guard_hz) {
                return Ok(TransmissionBin {
                    freq_hz: f,
                    h: Vec::new(),
                    flag: BinFlag::Guard,
                });
            }
            match ac_solve(sys, 2.0 * std::f64::consts::PI * f, one) {
                Ok(sol) => Ok(TransmissionBin {
                    freq_hz: f,
                    h: sys
                        .output_dofs()
                        .iter()
                        .map(|&d| sol.node_voltages[d].norm())
                        .collect(),
                    flag: BinFlag::Ok,
                }),
                Err(Error::NearResonance { .. }) => Ok(TransmissionBin {
                    freq_hz: f,
                    h: Vec::new(),
                    flag: BinFlag::NearResonance,
                }),
                Err(e) => Err(e),
            }
        })
        .collect()
}
