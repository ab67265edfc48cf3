use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::lattice::LatticeSpec;
use crate::signals::LabeledSignal;
use crate::simulator::{check_state, BranchKind, Stepper, SystemMatrices};

/// Safety margin applied to the Gershgorin stability estimate.
const STABILITY_MARGIN: f64 = 0.9;

/// Number of simulation steps per input sample, failing unless `signal_dt`
/// is an integer multiple of `dt`.
pub fn substeps(signal_dt: f64, dt: f64) -> Result<usize> {
    let ratio = signal_dt / dt;
    let k = ratio.round();
    if !(k >= 1.0 && (ratio - k).abs() <= 1e-9 * k) {
        return Err(Error::RateMismatch {
            signal_rate: 1.0 / signal_dt,
            expected_rate: 1.0 / dt,
        });
    }
    Ok(k as usize)
}

/// Picks `signal_dt / n` with the smallest `n` that keeps the step below
/// 90% of a Gershgorin bound on the stability limit. The bound never
/// exceeds the true `2/ω_max`, so no eigen-decomposition is needed.
pub fn auto_dt(sys: &SystemMatrices, signal_dt: f64) -> f64 {
    let y = sys.admittance();
    let lambda_max = (0..sys.n_dofs())
        .map(|i| {
            let radius: f64 = (0..sys.n_dofs()).map(|j| y[(i, j)].abs()).sum();
            radius / sys.inertia()[i]
        })
        .fold(0.0f64, f64::max);
    if lambda_max <= 0.0 {
        return signal_dt;
    }
    let limit = STABILITY_MARGIN * 2.0 / lambda_max.sqrt();
    let n = (signal_dt / limit).ceil().max(1.0);
    signal_dt / n
}

/// Outcome of one sample's forward pass.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SampleResult {
    pub id: usize,
    pub label: usize,
    pub energies: Vec<f64>,
    pub probabilities: Vec<f64>,
    pub loss: f64,
    /// First index of the largest energy; `None` when every energy is zero.
    pub predicted: Option<usize>,
}

impl SampleResult {
    pub fn correct(&self) -> bool {
        self.predicted == Some(self.label)
    }
}

/// `dL/dk` for every lattice stiffness (cell-indexed and edge-indexed).
/// Entries for grounded cells and for edges between two grounded cells are
/// zero.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Gradient {
    pub k_internal: Vec<f64>,
    pub k_coupling: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct BatchResult {
    /// Mean of the per-sample losses.
    pub loss: f64,
    pub samples: Vec<SampleResult>,
    /// Mean gradient over the batch; only filled by [`Network::backward`].
    pub gradient: Option<Gradient>,
}

/// Probabilities `(E + ε)/Σ(E + ε)` with `ε = prob_epsilon·ΣE`, the loss
/// `−ln p_label` and its derivative with respect to each energy. All-zero
/// energies give uniform probabilities and a zero derivative.
pub fn energy_loss(energies: &[f64], label: usize, prob_epsilon: f64) -> (f64, Vec<f64>, Vec<f64>) {
    let k = energies.len();
    let total: f64 = energies.iter().sum();
    if total <= 0.0 {
        let uniform = 1.0 / k as f64;
        return ((k as f64).ln(), vec![uniform; k], vec![0.0; k]);
    }
    let eps = prob_epsilon * total;
    let norm = total + k as f64 * eps;
    let probs: Vec<f64> = energies.iter().map(|e| (e + eps) / norm).collect();
    let target = energies[label] + eps;
    let loss = -probs[label].ln();
    let grad = (0..k)
        .map(|j| {
            let own = if j == label { 1.0 } else { 0.0 };
            -(own + prob_epsilon) / target + 1.0 / total
        })
        .collect();
    (loss, probs, grad)
}

fn argmax(energies: &[f64]) -> Option<usize> {
    if energies.iter().all(|&e| e <= 0.0) {
        return None;
    }
    let mut best = 0;
    for (i, &e) in energies.iter().enumerate() {
        if e > energies[best] {
            best = i;
        }
    }
    Some(best)
}

/// A lattice at one time step, ready for forward and reverse passes.
///
/// Gradients are taken with respect to branch conductances. For a network
/// assembled from mechanical parameters those are the stiffnesses.
pub struct Network {
    sys: SystemMatrices,
    stepper: Stepper,
    /// Transpose of the `u[t]` coefficient matrix in CSR form.
    t_ptr: Vec<usize>,
    t_cols: Vec<usize>,
    t_vals: Vec<f64>,
    /// Weight of `−(Y u[t])_i` in `u[t+1]_i`: `Δt²/D_i`, divided by the
    /// damping factor when there is one.
    coupling_coef: Vec<f64>,
    n_cells: usize,
    n_edges: usize,
}

impl Network {
    pub fn new(spec: &LatticeSpec, sys: SystemMatrices, dt: f64) -> Result<Self> {
        let stepper = Stepper::new(&sys, dt)?;
        let n = sys.n_dofs();
        let (ptr, cols, vals) = stepper.csr();
        let mut rows_t: Vec<Vec<(usize, f64)>> = vec![Vec::new(); n];
        for i in 0..n {
            for k in ptr[i]..ptr[i + 1] {
                rows_t[cols[k]].push((i, vals[k]));
            }
        }
        let mut t_ptr = vec![0];
        let mut t_cols = Vec::new();
        let mut t_vals = Vec::new();
        for row in rows_t {
            for (j, v) in row {
                t_cols.push(j);
                t_vals.push(v);
            }
            t_ptr.push(t_cols.len());
        }
        let coupling_coef = sys
            .inertia()
            .iter()
            .map(|&d| {
                let c = dt * sys.damping() / (2.0 * d);
                dt * dt / d / (1.0 + c)
            })
            .collect();
        Ok(Self {
            sys,
            stepper,
            t_ptr,
            t_cols,
            t_vals,
            coupling_coef,
            n_cells: spec.n_cells(),
            n_edges: spec.n_edges(),
        })
    }

    pub fn system(&self) -> &SystemMatrices {
        &self.sys
    }

    pub fn dt(&self) -> f64 {
        self.stepper.dt()
    }

    /// Runs from rest over the zero-order-held input and returns the output
    /// energies `Σ u_o²·Δt`, plus every state when `keep` is set (state 0 is
    /// the rest state).
    fn simulate(&self, input: &[f64], substeps: usize, keep: bool) -> Result<(Vec<f64>, Vec<f64>)> {
        let n = self.sys.n_dofs();
        let outputs = self.sys.output_dofs();
        let steps = input.len() * substeps;
        let mut states = if keep { Vec::with_capacity((steps + 1) * n) } else { Vec::new() };
        if keep {
            states.resize(n, 0.0);
        }
        let mut prev = vec![0.0; n];
        let mut curr = vec![0.0; n];
        let mut next = vec![0.0; n];
        let mut sums = vec![0.0; outputs.len()];
        for t in 0..steps {
            self.stepper.advance(&curr, &prev, input[t / substeps], &mut next);
            check_state(&next, t)?;
            for (s, &o) in sums.iter_mut().zip(outputs) {
                *s += next[o] * next[o];
            }
            if keep {
                states.extend_from_slice(&next);
            }
            std::mem::swap(&mut prev, &mut curr);
            std::mem::swap(&mut curr, &mut next);
        }
        let dt = self.dt();
        Ok((sums.into_iter().map(|s| s * dt).collect(), states))
    }

    /// Reverse pass: `dL/dg` per branch given `dL/dE` per output.
    ///
    /// With `x[n+1] = S x[n] + P x[n−1] + b[n]` the adjoint obeys
    /// `λ[n] = ∂L/∂x[n] + Sᵀλ[n+1] + Pλ[n+2]`, and since
    /// `∂S/∂g_b = −diag(c)·a_b a_bᵀ` for a branch with incidence vector `a_b`,
    /// `dL/dg_b = −Σ_n (c∘λ[n])ᵀa_b · a_bᵀx[n−1]`.
    fn adjoint(&self, states: &[f64], dl_de: &[f64]) -> Vec<f64> {
        let n = self.sys.n_dofs();
        let steps = states.len() / n - 1;
        let outputs = self.sys.output_dofs();
        let prev_w = self.stepper.prev_weight();
        let two_dt = 2.0 * self.dt();
        let branches = self.sys.branches();
        let mut grad = vec![0.0; branches.len()];
        let mut lam_next = vec![0.0; n];
        let mut lam_next2 = vec![0.0; n];
        let mut lam = vec![0.0; n];
        let mut mu = vec![0.0; n];
        for step in (1..=steps).rev() {
            let x = &states[step * n..(step + 1) * n];
            for j in 0..n {
                let mut acc = 0.0;
                for k in self.t_ptr[j]..self.t_ptr[j + 1] {
                    acc += self.t_vals[k] * lam_next[self.t_cols[k]];
                }
                lam[j] = acc + prev_w[j] * lam_next2[j];
            }
            for (&o, &g) in outputs.iter().zip(dl_de) {
                lam[o] += g * two_dt * x[o];
            }
            for j in 0..n {
                mu[j] = self.coupling_coef[j] * lam[j];
            }
            let x_prev = &states[(step - 1) * n..step * n];
            for (gb, br) in grad.iter_mut().zip(branches) {
                let (dm, dx) = match br.b {
                    Some(b) => (mu[br.a] - mu[b], x_prev[br.a] - x_prev[b]),
                    None => (mu[br.a], x_prev[br.a]),
                };
                *gb -= dm * dx;
            }
            std::mem::swap(&mut lam_next2, &mut lam_next);
            std::mem::swap(&mut lam_next, &mut lam);
        }
        grad
    }

    fn sample(&self, s: &LabeledSignal, prob_epsilon: f64, with_grad: bool) -> Result<(SampleResult, Option<Vec<f64>>)> {
        let n_out = self.sys.output_dofs().len();
        if s.label >= n_out {
            return Err(Error::invalid(format!(
                "label {} out of range for {n_out} outputs",
                s.label
            )));
        }
        let sub = substeps(s.signal.dt(), self.dt())?;
        let (energies, states) = self.simulate(s.signal.samples(), sub, with_grad)?;
        let (loss, probabilities, dl_de) = energy_loss(&energies, s.label, prob_epsilon);
        let grad = with_grad.then(|| self.adjoint(&states, &dl_de));
        Ok((
            SampleResult {
                id: s.id,
                label: s.label,
                predicted: argmax(&energies),
                energies,
                probabilities,
                loss,
            },
            grad,
        ))
    }

    fn batch(&self, batch: &[&LabeledSignal], prob_epsilon: f64, with_grad: bool) -> Result<BatchResult> {
        if batch.is_empty() {
            return Err(Error::invalid("empty batch"));
        }
        let results = batch
            .par_iter()
            .map(|s| {
                self.sample(s, prob_epsilon, with_grad).map_err(|e| Error::Sample {
                    sample: s.id,
                    source: Box::new(e),
                })
            })
            .collect::<Result<Vec<_>>>()?;
        let count = batch.len() as f64;
        let loss = results.iter().map(|(r, _)| r.loss).sum::<f64>() / count;
        let gradient = with_grad.then(|| {
            let mut per_branch = vec![0.0; self.sys.branches().len()];
            for (_, g) in &results {
                for (acc, v) in per_branch.iter_mut().zip(g.as_ref().expect("gradient requested")) {
                    *acc += v;
                }
            }
            let mut out = Gradient {
                k_internal: vec![0.0; self.n_cells],
                k_coupling: vec![0.0; self.n_edges],
            };
            for (br, g) in self.sys.branches().iter().zip(per_branch) {
                match br.kind {
                    BranchKind::Internal { cell } => out.k_internal[cell] += g / count,
                    BranchKind::Coupling { edge } => out.k_coupling[edge] += g / count,
                    BranchKind::Other => {}
                }
            }
            out
        });
        Ok(BatchResult {
            loss,
            samples: results.into_iter().map(|(r, _)| r).collect(),
            gradient,
        })
    }

    /// Per-sample probabilities and the mean cross-entropy loss.
    pub fn forward(&self, batch: &[&LabeledSignal], prob_epsilon: f64) -> Result<BatchResult> {
        self.batch(batch, prob_epsilon, false)
    }

    /// Forward pass plus the batch-mean gradient by backpropagation through
    /// time. Samples run in parallel; their gradients are summed in batch
    /// order so the result does not depend on the thread count.
    pub fn backward(&self, batch: &[&LabeledSignal], prob_epsilon: f64) -> Result<BatchResult> {
        self.batch(batch, prob_epsilon, true)
    }
}
