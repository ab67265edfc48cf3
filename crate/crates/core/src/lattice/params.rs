use serde::{Deserialize, Serialize};

use super::LatticeSpec;
use crate::error::{Error, Result};

/// Outer mass (kg) used by default. Together with [`DEFAULT_INNER_MASS`] and a
/// scaling factor of 1e-8 this reproduces the fabricated cell
/// (D_M = 1.307e-11 Ω·F², D_m = 3.530e-11 Ω·F²); k_n = 100 N/m then maps to
/// R_n = 1 MΩ.
pub const DEFAULT_OUTER_MASS: f64 = 1.307e-3;
pub const DEFAULT_INNER_MASS: f64 = 3.530e-3;

/// Mechanical lattice: per-cell masses and internal stiffness, per-edge
/// coupling stiffness.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MechanicalParams {
    pub outer_mass: Vec<f64>,
    pub inner_mass: Vec<f64>,
    pub k_internal: Vec<f64>,
    pub k_coupling: Vec<f64>,
}

/// Circuit lattice: per-cell FDNR values (Ω·F²) and internal resistance,
/// per-edge coupling resistance (Ω).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CircuitParams {
    pub d_outer: Vec<f64>,
    pub d_inner: Vec<f64>,
    pub r_internal: Vec<f64>,
    pub r_coupling: Vec<f64>,
}

/// Multiplier taking masses to FDNR values and stiffnesses to conductances.
#[derive(Clone, Copy, Debug, PartialEq, PartialOrd, Serialize, Deserialize)]
#[serde(try_from = "f64", into = "f64")]
pub struct ScalingFactor(f64);

impl ScalingFactor {
    pub fn new(s: f64) -> Result<Self> {
        if s.is_finite() && s > 0.0 {
            Ok(Self(s))
        } else {
            Err(Error::invalid(format!("scaling factor must be positive, got {s}")))
        }
    }

    pub fn unit() -> Self {
        Self(1.0)
    }

    pub fn value(self) -> f64 {
        self.0
    }
}

impl TryFrom<f64> for ScalingFactor {
    type Error = Error;
    fn try_from(s: f64) -> Result<Self> {
        Self::new(s)
    }
}

impl From<ScalingFactor> for f64 {
    fn from(s: ScalingFactor) -> f64 {
        s.0
    }
}

fn check_positive(name: &str, values: &[f64]) -> Result<()> {
    match values.iter().position(|v| !(v.is_finite() && *v > 0.0)) {
        Some(i) => Err(Error::invalid(format!(
            "{name}[{i}] must be positive and finite, got {}",
            values[i]
        ))),
        None => Ok(()),
    }
}

fn check_len(name: &str, values: &[f64], expected: usize) -> Result<()> {
    if values.len() == expected {
        Ok(())
    } else {
        Err(Error::invalid(format!(
            "{name} has {} entries, expected {expected}",
            values.len()
        )))
    }
}

impl MechanicalParams {
    pub fn uniform(spec: &LatticeSpec, outer_mass: f64, inner_mass: f64, k_n: f64, k_c: f64) -> Self {
        let n = spec.n_cells();
        Self {
            outer_mass: vec![outer_mass; n],
            inner_mass: vec![inner_mass; n],
            k_internal: vec![k_n; n],
            k_coupling: vec![k_c; spec.n_edges()],
        }
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.outer_mass.len();
        check_len("inner_mass", &self.inner_mass, n)?;
        check_len("k_internal", &self.k_internal, n)?;
        check_positive("outer_mass", &self.outer_mass)?;
        check_positive("inner_mass", &self.inner_mass)?;
        check_positive("k_internal", &self.k_internal)?;
        check_positive("k_coupling", &self.k_coupling)
    }

    pub fn validate_for(&self, spec: &LatticeSpec) -> Result<()> {
        self.validate()?;
        check_len("outer_mass", &self.outer_mass, spec.n_cells())?;
        check_len("k_coupling", &self.k_coupling, spec.n_edges())
    }

    fn stiffnesses(&self) -> impl Iterator<Item = f64> + '_ {
        self.k_internal.iter().chain(&self.k_coupling).copied()
    }
}

impl CircuitParams {
    pub fn validate(&self) -> Result<()> {
        let n = self.d_outer.len();
        check_len("d_inner", &self.d_inner, n)?;
        check_len("r_internal", &self.r_internal, n)?;
        check_positive("d_outer", &self.d_outer)?;
        check_positive("d_inner", &self.d_inner)?;
        check_positive("r_internal", &self.r_internal)?;
        check_positive("r_coupling", &self.r_coupling)
    }

    pub fn validate_for(&self, spec: &LatticeSpec) -> Result<()> {
        self.validate()?;
        check_len("d_outer", &self.d_outer, spec.n_cells())?;
        check_len("r_coupling", &self.r_coupling, spec.n_edges())
    }

    pub fn resistances(&self) -> impl Iterator<Item = f64> + '_ {
        self.r_internal.iter().chain(&self.r_coupling).copied()
    }
}

/// D = s·mass, R = 1/(s·k).
pub fn mech_to_circuit(mech: &MechanicalParams, s: ScalingFactor) -> Result<CircuitParams> {
    mech.validate()?;
    let s = s.value();
    Ok(CircuitParams {
        d_outer: mech.outer_mass.iter().map(|m| s * m).collect(),
        d_inner: mech.inner_mass.iter().map(|m| s * m).collect(),
        r_internal: mech.k_internal.iter().map(|k| 1.0 / (s * k)).collect(),
        r_coupling: mech.k_coupling.iter().map(|k| 1.0 / (s * k)).collect(),
    })
}

pub fn circuit_to_mech(circ: &CircuitParams, s: ScalingFactor) -> Result<MechanicalParams> {
    circ.validate()?;
    let s = s.value();
    Ok(MechanicalParams {
        outer_mass: circ.d_outer.iter().map(|d| d / s).collect(),
        inner_mass: circ.d_inner.iter().map(|d| d / s).collect(),
        k_internal: circ.r_internal.iter().map(|r| 1.0 / (s * r)).collect(),
        k_coupling: circ.r_coupling.iter().map(|r| 1.0 / (s * r)).collect(),
    })
}

/// Picks `s` so that the geometric mean of every resulting resistance
/// (internal and coupling) equals `r_target`. Resonance frequencies depend
/// only on ratios D/R⁻¹ and are therefore the same for every `s`.
pub fn choose_scaling(mech: &MechanicalParams, r_target: f64) -> Result<ScalingFactor> {
    mech.validate()?;
    if !(r_target.is_finite() && r_target > 0.0) {
        return Err(Error::invalid(format!("target resistance must be positive, got {r_target}")));
    }
    let (sum_ln, count) = mech
        .stiffnesses()
        .fold((0.0, 0usize), |(acc, n), k| (acc + k.ln(), n + 1));
    if count == 0 {
        return Err(Error::invalid("no stiffness values to scale"));
    }
    let geo_k = (sum_ln / count as f64).exp();
    ScalingFactor::new(1.0 / (r_target * geo_k))
}
