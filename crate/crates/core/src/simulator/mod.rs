//! Time-domain simulation of the lattice.
//!
//! The lattice obeys `D ü + Y u = e_in i(t)` where `D` is the diagonal of
//! FDNR values (masses, in the mechanical picture) and `Y` the admittance
//! (stiffness) matrix. It is integrated with the explicit central-difference
//! recurrence
//!
//! ```text
//! u[t+1] = 2 u[t] − u[t−1] − Δt² D⁻¹ Y u[t] + Δt² D⁻¹ e_in i[t]
//! ```
//!
//! which is also the hidden-state update of a linear RNN with
//! `h[t] = [u[t+1], u[t]]`.

mod readout;
mod stepper;

pub use readout::{
    classify, comparator, integrate_energy, Classification, ComparatorConfig,
};
pub use stepper::{
    discrete_energy, run, run_matrix_form, run_visit, step, transition_matrices, Record, SimConfig, SimState, Stepper,
    Trajectory, BLOW_UP_LIMIT,
};
pub(crate) use stepper::check_state;

use nalgebra::{DMatrix, SymmetricEigen};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::lattice::{CircuitParams, LatticeSpec, MechanicalParams};

/// What a conductance in the lattice represents.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum BranchKind {
    /// R_n of a cell (k_n mechanically), between its outer and inner node.
    Internal { cell: usize },
    /// R_c of a lattice edge (k_c mechanically).
    Coupling { edge: usize },
    /// Anything built by hand outside a lattice.
    Other,
}

/// A two-terminal conductance between DOF `a` and DOF `b` (or ground).
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Branch {
    pub a: usize,
    pub b: Option<usize>,
    pub conductance: f64,
    pub kind: BranchKind,
}

/// DOF indices of one cell.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct CellDofs {
    pub outer: usize,
    pub inner: usize,
}

/// Assembled `D` and `Y` over the lattice degrees of freedom.
///
/// Immutable once built. Besides the dense matrices it keeps the branch list
/// that produced `Y`, which the AC solver uses for branch currents and the
/// trainer for parameter derivatives.
#[derive(Clone, Debug)]
pub struct SystemMatrices {
    inertia: Vec<f64>,
    admittance: DMatrix<f64>,
    branches: Vec<Branch>,
    dof_map: Vec<Option<CellDofs>>,
    input_dof: usize,
    output_dofs: Vec<usize>,
    damping: f64,
}

impl SystemMatrices {
    /// Builds a system from per-DOF inertia and a list of branches.
    pub fn from_branches(
        inertia: Vec<f64>,
        branches: Vec<Branch>,
        input_dof: usize,
        output_dofs: Vec<usize>,
    ) -> Result<Self> {
        let n = inertia.len();
        if n == 0 {
            return Err(Error::InvalidLattice("system has no degrees of freedom".into()));
        }
        if let Some(i) = inertia.iter().position(|d| !(d.is_finite() && *d > 0.0)) {
            return Err(Error::invalid(format!("inertia[{i}] = {} is not positive", inertia[i])));
        }
        if input_dof >= n || output_dofs.iter().any(|&o| o >= n) {
            return Err(Error::invalid("input/output DOF out of range"));
        }
        let mut y = DMatrix::zeros(n, n);
        for br in &branches {
            if !(br.conductance.is_finite() && br.conductance > 0.0) {
                return Err(Error::invalid(format!(
                    "branch conductance {} is not positive",
                    br.conductance
                )));
            }
            if br.a >= n || br.b.is_some_and(|b| b >= n || b == br.a) {
                return Err(Error::invalid(format!("branch {:?} has bad terminals", br)));
            }
            let g = br.conductance;
            y[(br.a, br.a)] += g;
            if let Some(b) = br.b {
                y[(b, b)] += g;
                y[(br.a, b)] -= g;
                y[(b, br.a)] -= g;
            }
        }
        Ok(Self {
            inertia,
            admittance: y,
            branches,
            dof_map: Vec::new(),
            input_dof,
            output_dofs,
            damping: 0.0,
        })
    }

    /// Adds a uniform velocity-proportional damping `γ u̇` at every DOF.
    /// The lattice model itself is lossless; this exists for numerical
    /// experiments only.
    pub fn with_damping(mut self, gamma: f64) -> Result<Self> {
        if !(gamma.is_finite() && gamma >= 0.0) {
            return Err(Error::invalid(format!("damping must be non-negative, got {gamma}")));
        }
        self.damping = gamma;
        Ok(self)
    }

    pub fn n_dofs(&self) -> usize {
        self.inertia.len()
    }

    pub fn inertia(&self) -> &[f64] {
        &self.inertia
    }

    pub fn admittance(&self) -> &DMatrix<f64> {
        &self.admittance
    }

    pub fn branches(&self) -> &[Branch] {
        &self.branches
    }

    /// Per-cell DOFs (`None` for grounded cells); empty for hand-built systems.
    pub fn dof_map(&self) -> &[Option<CellDofs>] {
        &self.dof_map
    }

    pub fn input_dof(&self) -> usize {
        self.input_dof
    }

    pub fn output_dofs(&self) -> &[usize] {
        &self.output_dofs
    }

    pub fn damping(&self) -> f64 {
        self.damping
    }

    /// Total conductance from each DOF straight to ground.
    pub fn grounding(&self) -> Vec<f64> {
        let mut g = vec![0.0; self.n_dofs()];
        for br in self.branches.iter().filter(|b| b.b.is_none()) {
            g[br.a] += br.conductance;
        }
        g
    }

    /// Eigenvalues ω² of D⁻¹Y, ascending, via the symmetric form
    /// D^{-1/2} Y D^{-1/2}.
    pub fn eigenvalues(&self) -> Vec<f64> {
        let n = self.n_dofs();
        let s: Vec<f64> = self.inertia.iter().map(|d| 1.0 / d.sqrt()).collect();
        let sym = DMatrix::from_fn(n, n, |i, j| self.admittance[(i, j)] * s[i] * s[j]);
        let mut ev: Vec<f64> = SymmetricEigen::new(sym).eigenvalues.iter().copied().collect();
        ev.sort_by(f64::total_cmp);
        ev
    }

    /// Natural frequencies in Hz, ascending. Tiny negative round-off is
    /// clamped to zero.
    pub fn eigenfrequencies_hz(&self) -> Vec<f64> {
        self.eigenvalues()
            .into_iter()
            .map(|l| l.max(0.0).sqrt() / (2.0 * std::f64::consts::PI))
            .collect()
    }

    /// Stability limit 2/ω_max of the central-difference scheme.
    pub fn max_stable_dt(&self) -> f64 {
        let lmax = self.eigenvalues().last().copied().unwrap_or(0.0);
        if lmax > 0.0 {
            2.0 / lmax.sqrt()
        } else {
            f64::INFINITY
        }
    }

    /// Largest out-of-phase resonance over the cells, in Hz. Falls back to
    /// the top eigenfrequency for hand-built systems.
    pub fn max_cell_f1_hz(&self) -> f64 {
        let f1 = self
            .branches
            .iter()
            .filter_map(|br| match (br.kind, br.b) {
                (BranchKind::Internal { .. }, Some(b)) => {
                    let w1sq = br.conductance * (1.0 / self.inertia[br.a] + 1.0 / self.inertia[b]);
                    Some(w1sq.sqrt() / (2.0 * std::f64::consts::PI))
                }
                _ => None,
            })
            .fold(0.0f64, f64::max);
        if f1 > 0.0 {
            f1
        } else {
            self.eigenfrequencies_hz().last().copied().unwrap_or(0.0)
        }
    }

    /// Default step: 1/(20·f₁,max), capped at half the stability limit.
    pub fn default_dt(&self) -> f64 {
        let f1 = self.max_cell_f1_hz();
        let by_resolution = if f1 > 0.0 { 1.0 / (20.0 * f1) } else { f64::INFINITY };
        by_resolution.min(0.5 * self.max_stable_dt())
    }
}

/// Circuit-domain assembly: D from the FDNR values, Y from 1/R.
pub fn assemble(spec: &LatticeSpec, circ: &CircuitParams) -> Result<SystemMatrices> {
    circ.validate_for(spec)?;
    let g_int: Vec<f64> = circ.r_internal.iter().map(|r| 1.0 / r).collect();
    let g_cpl: Vec<f64> = circ.r_coupling.iter().map(|r| 1.0 / r).collect();
    assemble_lattice(spec, &circ.d_outer, &circ.d_inner, &g_int, &g_cpl)
}

/// Mechanical-domain assembly: D from the masses, Y from the stiffnesses.
/// Equivalent to `assemble` on `mech_to_circuit(mech, 1)` but without the
/// round trip through 1/k.
pub fn assemble_mechanical(spec: &LatticeSpec, mech: &MechanicalParams) -> Result<SystemMatrices> {
    mech.validate_for(spec)?;
    assemble_lattice(
        spec,
        &mech.outer_mass,
        &mech.inner_mass,
        &mech.k_internal,
        &mech.k_coupling,
    )
}

fn assemble_lattice(
    spec: &LatticeSpec,
    d_outer: &[f64],
    d_inner: &[f64],
    g_internal: &[f64],
    g_coupling: &[f64],
) -> Result<SystemMatrices> {
    let reach = spec.reachable_from(spec.input());
    if let Some(&o) = spec.outputs().iter().find(|o| !reach.contains(o)) {
        return Err(Error::Topology(format!(
            "output cell {o} is not connected to input cell {}",
            spec.input()
        )));
    }
    let mut dof_map = vec![None; spec.n_cells()];
    let mut inertia = Vec::with_capacity(2 * spec.n_active());
    for cell in spec.active_cells() {
        let outer = inertia.len();
        inertia.push(d_outer[cell]);
        inertia.push(d_inner[cell]);
        dof_map[cell] = Some(CellDofs {
            outer,
            inner: outer + 1,
        });
    }
    let mut branches = Vec::new();
    for (cell, dofs) in dof_map.iter().enumerate() {
        if let Some(d) = dofs {
            branches.push(Branch {
                a: d.outer,
                b: Some(d.inner),
                conductance: g_internal[cell],
                kind: BranchKind::Internal { cell },
            });
        }
    }
    for (edge, &(a, b)) in spec.edges().iter().enumerate() {
        let (da, db) = (dof_map[a], dof_map[b]);
        let (a_dof, b_dof) = match (da, db) {
            (Some(x), Some(y)) => (x.outer, Some(y.outer)),
            (Some(x), None) => (x.outer, None),
            (None, Some(y)) => (y.outer, None),
            (None, None) => continue,
        };
        branches.push(Branch {
            a: a_dof,
            b: b_dof,
            conductance: g_coupling[edge],
            kind: BranchKind::Coupling { edge },
        });
    }
    let input_dof = dof_map[spec.input()].expect("input is active").outer;
    let output_dofs = spec
        .outputs()
        .iter()
        .map(|&o| dof_map[o].expect("outputs are active").inner)
        .collect();
    let mut sys = SystemMatrices::from_branches(inertia, branches, input_dof, output_dofs)?;
    sys.dof_map = dof_map;
    Ok(sys)
}
