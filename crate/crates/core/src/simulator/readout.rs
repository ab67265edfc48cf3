use serde::{Deserialize, Serialize};

use super::Trajectory;
use crate::error::{Error, Result};

/// Time-integrated squared voltage `Σ_t u_i(t)²·Δt` per output DOF.
pub fn integrate_energy(traj: &Trajectory, output_dofs: &[usize]) -> Result<Vec<f64>> {
    output_dofs
        .iter()
        .map(|&d| {
            let ch = traj
                .channel(d)
                .ok_or_else(|| Error::invalid(format!("DOF {d} was not recorded")))?;
            Ok(ch.iter().map(|u| u * u).sum::<f64>() * traj.dt)
        })
        .collect()
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Classification {
    pub class: usize,
    pub probabilities: Vec<f64>,
}

/// L1-normalized energies; the class is the first index of the maximum.
pub fn classify(energies: &[f64]) -> Result<Classification> {
    if energies.is_empty() {
        return Err(Error::invalid("no energies to classify"));
    }
    if let Some(e) = energies.iter().find(|e| !(e.is_finite() && **e >= 0.0)) {
        return Err(Error::invalid(format!("energy {e} is not a finite non-negative value")));
    }
    let total: f64 = energies.iter().sum();
    if total <= 0.0 {
        return Err(Error::Undecidable);
    }
    let mut class = 0;
    for (i, &e) in energies.iter().enumerate() {
        if e > energies[class] {
            class = i;
        }
    }
    Ok(Classification {
        class,
        probabilities: energies.iter().map(|e| e / total).collect(),
    })
}

/// Behavioral model of the amplitude comparison stage.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ComparatorConfig {
    /// Single-pole smoothing time constant (s).
    pub tau: f64,
    /// Relative margin a challenger must exceed to take over.
    pub hysteresis: f64,
    /// Smoothed amplitudes at or below this keep every channel low.
    pub threshold: f64,
}

impl Default for ComparatorConfig {
    fn default() -> Self {
        Self {
            tau: 0.05,
            hysteresis: 0.1,
            threshold: 0.0,
        }
    }
}

/// Converts output traces to per-channel logic levels.
///
/// Each |u| is smoothed by `a += α(|u| − a)` with `α = 1 − exp(−Δt/τ)`. A
/// channel goes high once its smoothed amplitude is the maximum and exceeds
/// every other channel by the hysteresis fraction; it stays high until a
/// challenger beats it by the same margin, or everything falls below the
/// threshold.
pub fn comparator(channels: &[Vec<f64>], dt: f64, cfg: &ComparatorConfig) -> Result<Vec<Vec<bool>>> {
    if !(cfg.tau.is_finite() && cfg.tau > 0.0) {
        return Err(Error::invalid(format!("time constant must be positive, got {}", cfg.tau)));
    }
    if !(cfg.hysteresis.is_finite() && cfg.hysteresis >= 0.0) {
        return Err(Error::invalid("hysteresis must be non-negative"));
    }
    if !(dt.is_finite() && dt > 0.0) {
        return Err(Error::invalid(format!("dt must be positive, got {dt}")));
    }
    let len = channels.first().map_or(0, Vec::len);
    if channels.iter().any(|c| c.len() != len) {
        return Err(Error::invalid("comparator channels differ in length"));
    }
    let alpha = 1.0 - (-dt / cfg.tau).exp();
    let margin = 1.0 + cfg.hysteresis;
    let mut amp = vec![0.0; channels.len()];
    let mut holder: Option<usize> = None;
    let mut out = vec![Vec::with_capacity(len); channels.len()];
    for t in 0..len {
        for (a, ch) in amp.iter_mut().zip(channels) {
            *a += alpha * (ch[t].abs() - *a);
        }
        let mut best = 0;
        for (i, &a) in amp.iter().enumerate() {
            if a > amp[best] {
                best = i;
            }
        }
        if amp.is_empty() || amp[best] <= cfg.threshold {
            holder = None;
        } else {
            match holder {
                Some(h) if h == best => {}
                Some(h) => {
                    if amp[best] > margin * amp[h] {
                        holder = Some(best);
                    }
                }
                None => {
                    let runner_up = amp
                        .iter()
                        .enumerate()
                        .filter(|&(i, _)| i != best)
                        .map(|(_, &a)| a)
                        .fold(0.0, f64::max);
                    if amp[best] > margin * runner_up {
                        holder = Some(best);
                    }
                }
            }
        }
        for (i, o) in out.iter_mut().enumerate() {
            o.push(holder == Some(i));
        }
    }
    Ok(out)
}
