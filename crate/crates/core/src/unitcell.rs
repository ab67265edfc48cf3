//! Closed-form analytics of a single FDNR local resonator.
//!
//! The cell has an outer node carrying `D_M` to ground, an inner node
//! carrying `D_m` to ground, and `R_n` between the two. Everything here is
//! the ideal lossless model, so all quantities are real.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Relative distance (in ω²) below which a frequency counts as sitting on a
/// pole or zero.
pub const POLE_TOLERANCE: f64 = 1e-12;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct UnitCellParams {
    /// D_M (Ω·F²)
    pub d_outer: f64,
    /// D_m (Ω·F²)
    pub d_inner: f64,
    /// R_n (Ω)
    pub r_internal: f64,
}

impl UnitCellParams {
    pub fn new(d_outer: f64, d_inner: f64, r_internal: f64) -> Result<Self> {
        let p = Self {
            d_outer,
            d_inner,
            r_internal,
        };
        p.validate()?;
        Ok(p)
    }

    /// The fabricated cell: D_M = 1.307e-11, D_m = 3.530e-11, R_n = 1 MΩ.
    pub fn fabricated() -> Self {
        Self {
            d_outer: 1.307e-11,
            d_inner: 3.530e-11,
            r_internal: 1e6,
        }
    }

    pub fn validate(&self) -> Result<()> {
        for (name, v) in [
            ("D_M", self.d_outer),
            ("D_m", self.d_inner),
            ("R_n", self.r_internal),
        ] {
            if !(v.is_finite() && v > 0.0) {
                return Err(Error::invalid(format!("{name} must be positive, got {v}")));
            }
        }
        Ok(())
    }

    fn omega0_sq(&self) -> f64 {
        1.0 / (self.d_inner * self.r_internal)
    }

    fn omega1_sq(&self) -> f64 {
        self.omega0_sq() * (self.d_outer + self.d_inner) / self.d_outer
    }
}

fn check_omega(omega: f64, allow_zero: bool) -> Result<()> {
    let ok = omega.is_finite() && (omega > 0.0 || (allow_zero && omega == 0.0));
    if ok {
        Ok(())
    } else {
        Err(Error::invalid(format!("invalid angular frequency {omega}")))
    }
}

fn near(w2: f64, pole_sq: f64) -> bool {
    (w2 - pole_sq).abs() <= POLE_TOLERANCE * pole_sq
}

/// Local resonance ω₀ = 1/√(D_m R_n) and out-of-phase resonance
/// ω₁ = ω₀·√((D_M + D_m)/D_M), both in rad/s.
pub fn resonance_freqs(p: &UnitCellParams) -> Result<(f64, f64)> {
    p.validate()?;
    Ok((p.omega0_sq().sqrt(), p.omega1_sq().sqrt()))
}

/// Voltage amplification between outer and inner node, 1/(1 − (ω/ω₀)²).
pub fn beta(p: &UnitCellParams, omega: f64) -> Result<f64> {
    p.validate()?;
    check_omega(omega, true)?;
    let w0sq = p.omega0_sq();
    let w2 = omega * omega;
    if near(w2, w0sq) {
        return Err(Error::Pole { omega });
    }
    Ok(w0sq / (w0sq - w2))
}

/// Effective FDNR D_M + D_m/(1 − (ω/ω₀)²), signed.
pub fn d_eff(p: &UnitCellParams, omega: f64) -> Result<f64> {
    let b = beta(p, omega)?;
    Ok(p.d_outer + p.d_inner * b)
}

/// Effective impedance −1/(ω² D_eff), evaluated through the pole/zero form
/// −(ω² − ω₀²)/(ω²(ω² − ω₁²) D_M) so that ω₀ yields exactly zero.
pub fn z_eff(p: &UnitCellParams, omega: f64) -> Result<f64> {
    p.validate()?;
    check_omega(omega, false)?;
    let w2 = omega * omega;
    let w1sq = p.omega1_sq();
    if near(w2, w1sq) {
        return Err(Error::Pole { omega });
    }
    let w0sq = p.omega0_sq();
    if near(w2, w0sq) {
        return Ok(0.0);
    }
    Ok(-(w2 - w0sq) / (w2 * (w2 - w1sq) * p.d_outer))
}

/// Transfer coefficient from branch current to inner-node voltage,
/// ω₀²/(ω²(ω² − ω₁²) D_M). Regular at ω₀, simple pole at ω₁.
pub fn transfer_h(p: &UnitCellParams, omega: f64) -> Result<f64> {
    p.validate()?;
    check_omega(omega, false)?;
    let w2 = omega * omega;
    let w1sq = p.omega1_sq();
    if near(w2, w1sq) {
        return Err(Error::Pole { omega });
    }
    Ok(p.omega0_sq() / (w2 * (w2 - w1sq) * p.d_outer))
}

/// One row of a single-cell sweep.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct CellResponse {
    pub freq_hz: f64,
    pub d_eff: Option<f64>,
    pub z_eff: Option<f64>,
    pub beta: Option<f64>,
    pub h: Option<f64>,
}

/// Evaluates every quantity on a frequency grid; poles become `None`.
pub fn sweep(p: &UnitCellParams, freqs_hz: &[f64]) -> Result<Vec<CellResponse>> {
    p.validate()?;
    let two_pi = 2.0 * std::f64::consts::PI;
    freqs_hz
        .iter()
        .map(|&f| {
            let w = two_pi * f;
            check_omega(w, false)?;
            Ok(CellResponse {
                freq_hz: f,
                d_eff: d_eff(p, w).ok(),
                z_eff: z_eff(p, w).ok(),
                beta: beta(p, w).ok(),
                h: transfer_h(p, w).ok(),
            })
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    fn rel(a: f64, b: f64) -> f64 {
        (a - b).abs() / b.abs()
    }

    #[test]
    fn fabricated_cell_resonances() {
        let (w0, w1) = resonance_freqs(&UnitCellParams::fabricated()).unwrap();
        assert!((w0 / (2.0 * PI) - 26.8).abs() < 0.1);
        assert!((w1 / (2.0 * PI) - 51.5).abs() < 0.1);
        assert!(w1 > w0);
    }

    #[test]
    fn symmetric_cell() {
        let p = UnitCellParams::new(2.0, 2.0, 3.0).unwrap();
        let (w0, w1) = resonance_freqs(&p).unwrap();
        assert!(rel(w1, w0 * 2f64.sqrt()) < 1e-15);
    }

    #[test]
    fn d_eff_limits() {
        let p = UnitCellParams::fabricated();
        let (w0, w1) = resonance_freqs(&p).unwrap();
        assert!(rel(d_eff(&p, 0.0).unwrap(), 4.837e-11) < 1e-12);
        assert!(d_eff(&p, w1).unwrap().abs() < 1e-12 * p.d_outer);
        assert!(rel(d_eff(&p, 1000.0 * w0).unwrap(), p.d_outer) < 1e-4);
        assert!(matches!(d_eff(&p, w0), Err(Error::Pole { .. })));
    }

    #[test]
    fn z_eff_signs_and_zero() {
        let p = UnitCellParams::fabricated();
        let (w0, w1) = resonance_freqs(&p).unwrap();
        assert_eq!(z_eff(&p, w0).unwrap(), 0.0);
        assert!(z_eff(&p, 2.0 * PI * 10.0).unwrap() < 0.0);
        assert!(z_eff(&p, 2.0 * PI * 40.0).unwrap() > 0.0);
        assert!(matches!(z_eff(&p, w1), Err(Error::Pole { .. })));
        assert!(z_eff(&p, 0.0).is_err());
    }

    #[test]
    fn z_eff_magnitude_at_40hz() {
        // direct evaluation of −1/(ω² D_eff) with the factors written out
        let p = UnitCellParams::fabricated();
        let w = 2.0 * PI * 40.0;
        let w0sq = 1.0 / (3.530e-11 * 1e6);
        let deff = 1.307e-11 + 3.530e-11 / (1.0 - w * w / w0sq);
        let expected = -1.0 / (w * w * deff);
        assert!(expected > 0.0);
        assert!(rel(z_eff(&p, w).unwrap(), expected) < 1e-12);
    }

    #[test]
    fn beta_values() {
        let p = UnitCellParams::fabricated();
        let (w0, _) = resonance_freqs(&p).unwrap();
        assert_eq!(beta(&p, 0.0).unwrap(), 1.0);
        assert!(rel(beta(&p, w0 / 2f64.sqrt()).unwrap(), 2.0) < 1e-12);
        assert!(rel(beta(&p, w0 * 2f64.sqrt()).unwrap(), -1.0) < 1e-12);
    }

    #[test]
    fn h_is_beta_times_z() {
        let p = UnitCellParams::fabricated();
        let (w0, w1) = resonance_freqs(&p).unwrap();
        // deterministic quasi-random points in (0, 3ω₁)
        let mut x = 0.5f64;
        for _ in 0..100 {
            x = (x * 997.0 + 0.123).fract();
            let w = 3.0 * w1 * x;
            if (w - w0).abs() < 1e-6 * w0 || (w - w1).abs() < 1e-6 * w1 || w == 0.0 {
                continue;
            }
            let h = transfer_h(&p, w).unwrap();
            let bz = beta(&p, w).unwrap() * z_eff(&p, w).unwrap();
            assert!(rel(h, bz) < 1e-12, "w={w}: {h} vs {bz}");
        }
    }

    #[test]
    fn h_continuous_at_omega0() {
        let p = UnitCellParams::fabricated();
        let (w0, w1) = resonance_freqs(&p).unwrap();
        let at = transfer_h(&p, w0).unwrap();
        assert!(at.is_finite());
        // limit from both sides through the β·Z route
        let below = beta(&p, w0 * (1.0 - 1e-6)).unwrap() * z_eff(&p, w0 * (1.0 - 1e-6)).unwrap();
        let above = beta(&p, w0 * (1.0 + 1e-6)).unwrap() * z_eff(&p, w0 * (1.0 + 1e-6)).unwrap();
        assert!(rel(below, at) < 1e-5);
        assert!(rel(above, at) < 1e-5);
        assert!(rel(below, above) < 1e-5);
        // sign flip across ω₁
        assert!(transfer_h(&p, w1 * 0.99).unwrap() < 0.0);
        assert!(transfer_h(&p, w1 * 1.01).unwrap() > 0.0);
    }

    #[test]
    fn z_eff_grows_toward_omega1() {
        let p = UnitCellParams::fabricated();
        let (_, w1) = resonance_freqs(&p).unwrap();
        let mut prev_lo = 0.0;
        let mut prev_hi = 0.0;
        for k in 1..=8 {
            let d = 10f64.powi(-k);
            let lo = z_eff(&p, w1 * (1.0 - d)).unwrap().abs();
            let hi = z_eff(&p, w1 * (1.0 + d)).unwrap().abs();
            assert!(lo > prev_lo && hi > prev_hi);
            prev_lo = lo;
            prev_hi = hi;
        }
    }

    #[test]
    fn sweep_marks_poles() {
        let p = UnitCellParams::new(1.0, 1.0, 1.0 / (2.0 * PI * 10.0).powi(2)).unwrap();
        let rows = sweep(&p, &[5.0, 10.0, 20.0]).unwrap();
        assert!(rows[1].d_eff.is_none());
        assert_eq!(rows[1].z_eff, Some(0.0));
        assert!(rows[0].h.is_some());
    }
}
