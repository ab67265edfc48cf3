use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use super::SystemMatrices;
use crate::error::{Error, Result};
use crate::signals::Signal;

/// Any |u| above this aborts a run.
pub const BLOW_UP_LIMIT: f64 = 1e12;

/// Which DOFs a run keeps.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub enum Record {
    #[default]
    Outputs,
    All,
    Dofs(Vec<usize>),
}

/// Run configuration. The run length is taken from the driving signal.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SimConfig {
    pub dt: f64,
    #[serde(default)]
    pub record: Record,
}

impl SimConfig {
    pub fn new(dt: f64) -> Self {
        Self {
            dt,
            record: Record::Outputs,
        }
    }

    /// One step per signal sample.
    pub fn for_signal(sig: &Signal) -> Self {
        Self::new(sig.dt())
    }

    pub fn record(mut self, record: Record) -> Self {
        self.record = record;
        self
    }
}

/// Hidden state `[u[t+1], u[t]]` of the recurrence, stored as the current
/// and previous voltage vectors.
#[derive(Clone, Debug, PartialEq)]
pub struct SimState {
    pub u_curr: Vec<f64>,
    pub u_prev: Vec<f64>,
    pub step_index: usize,
}

impl SimState {
    pub fn zeros(n: usize) -> Self {
        Self {
            u_curr: vec![0.0; n],
            u_prev: vec![0.0; n],
            step_index: 0,
        }
    }
}

/// Precomputed per-`dt` coefficients of the recurrence.
///
/// These are the nonzero entries of the top block row of `Wʰ`: the sparse
/// rows of `2 − Δt²D⁻¹Y`, the diagonal weight on `u[t−1]` (−1 without
/// damping) and the input gain `Δt²/D_in`. With damping every row is
/// divided by `1 + Δt·γ/(2D)`.
#[derive(Clone, Debug)]
pub struct Stepper {
    dt: f64,
    n: usize,
    row_ptr: Vec<usize>,
    cols: Vec<usize>,
    vals: Vec<f64>,
    prev_weight: Vec<f64>,
    input_dof: usize,
    input_gain: f64,
}

impl Stepper {
    /// Fails if `dt` is not positive or exceeds the stability limit.
    pub fn new(sys: &SystemMatrices, dt: f64) -> Result<Self> {
        if !(dt.is_finite() && dt > 0.0) {
            return Err(Error::invalid(format!("dt must be positive, got {dt}")));
        }
        let limit = sys.max_stable_dt();
        if dt >= limit {
            return Err(Error::UnstableTimeStep { dt, limit });
        }
        Ok(Self::unchecked(sys, dt))
    }

    /// Builds coefficients without the eigen-decomposition; callers must
    /// already know `dt` is stable.
    pub(crate) fn unchecked(sys: &SystemMatrices, dt: f64) -> Self {
        let n = sys.n_dofs();
        let rows = top_block_rows(sys, dt);
        let mut row_ptr = Vec::with_capacity(n + 1);
        let mut cols = Vec::new();
        let mut vals = Vec::new();
        let mut prev_weight = Vec::with_capacity(n);
        row_ptr.push(0);
        for (coef, prev, _) in &rows {
            for (j, &c) in coef.iter().enumerate() {
                if c != 0.0 {
                    cols.push(j);
                    vals.push(c);
                }
            }
            row_ptr.push(cols.len());
            prev_weight.push(*prev);
        }
        let input_dof = sys.input_dof();
        Self {
            dt,
            n,
            row_ptr,
            cols,
            vals,
            prev_weight,
            input_dof,
            input_gain: rows[input_dof].2,
        }
    }

    pub fn dt(&self) -> f64 {
        self.dt
    }

    /// CSR view `(row_ptr, cols, vals)` of the coefficients on `u[t]`.
    pub(crate) fn csr(&self) -> (&[usize], &[usize], &[f64]) {
        (&self.row_ptr, &self.cols, &self.vals)
    }

    pub(crate) fn prev_weight(&self) -> &[f64] {
        &self.prev_weight
    }

    pub fn n_dofs(&self) -> usize {
        self.n
    }

    /// Writes `u[t+1]` into `next`.
    #[inline]
    pub fn advance(&self, u_curr: &[f64], u_prev: &[f64], i_t: f64, next: &mut [f64]) {
        for i in 0..self.n {
            let mut acc = 0.0;
            for k in self.row_ptr[i]..self.row_ptr[i + 1] {
                acc += self.vals[k] * u_curr[self.cols[k]];
            }
            next[i] = acc + self.prev_weight[i] * u_prev[i];
        }
        next[self.input_dof] += self.input_gain * i_t;
    }

    pub fn step(&self, state: &SimState, i_t: f64) -> Result<SimState> {
        if state.u_curr.len() != self.n || state.u_prev.len() != self.n {
            return Err(Error::invalid("state length does not match the system"));
        }
        let mut next = vec![0.0; self.n];
        self.advance(&state.u_curr, &state.u_prev, i_t, &mut next);
        check_state(&next, state.step_index)?;
        Ok(SimState {
            u_prev: state.u_curr.clone(),
            u_curr: next,
            step_index: state.step_index + 1,
        })
    }
}

pub(crate) fn check_state(u: &[f64], step: usize) -> Result<()> {
    let mut max = 0.0f64;
    for &x in u {
        if !x.is_finite() {
            return Err(Error::NonFinite { step });
        }
        max = max.max(x.abs());
    }
    if max > BLOW_UP_LIMIT {
        return Err(Error::BlowUp {
            step,
            magnitude: max,
        });
    }
    Ok(())
}

/// One update of the recurrence with input current `i_t`.
pub fn step(sys: &SystemMatrices, state: &SimState, i_t: f64, dt: f64) -> Result<SimState> {
    Stepper::new(sys, dt)?.step(state, i_t)
}

/// Recorded DOF voltages, one row per input sample. Row `t` holds the
/// state after consuming input sample `t`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Trajectory {
    pub dt: f64,
    pub dofs: Vec<usize>,
    /// `channels[k][t]` is DOF `dofs[k]` at step `t`.
    pub channels: Vec<Vec<f64>>,
}

impl Trajectory {
    pub fn len(&self) -> usize {
        self.channels.first().map_or(0, Vec::len)
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn channel(&self, dof: usize) -> Option<&[f64]> {
        self.dofs
            .iter()
            .position(|&d| d == dof)
            .map(|k| self.channels[k].as_slice())
    }

    /// Time stamp of each row (end of the step that produced it).
    pub fn times(&self) -> Vec<f64> {
        (1..=self.len()).map(|t| t as f64 * self.dt).collect()
    }
}

fn recorded_dofs(sys: &SystemMatrices, record: &Record) -> Result<Vec<usize>> {
    let dofs = match record {
        Record::Outputs => sys.output_dofs().to_vec(),
        Record::All => (0..sys.n_dofs()).collect(),
        Record::Dofs(d) => {
            let mut d = d.clone();
            for &o in sys.output_dofs() {
                if !d.contains(&o) {
                    d.push(o);
                }
            }
            d
        }
    };
    if let Some(&bad) = dofs.iter().find(|&&d| d >= sys.n_dofs()) {
        return Err(Error::invalid(format!("recorded DOF {bad} out of range")));
    }
    Ok(dofs)
}

fn check_rate(sig: &Signal, dt: f64) -> Result<()> {
    let expected_rate = 1.0 / dt;
    if (sig.rate() - expected_rate).abs() > 1e-9 * expected_rate {
        return Err(Error::RateMismatch {
            signal_rate: sig.rate(),
            expected_rate,
        });
    }
    Ok(())
}

/// Integrates from rest, one step per signal sample.
pub fn run(sys: &SystemMatrices, signal: &Signal, cfg: &SimConfig) -> Result<Trajectory> {
    check_rate(signal, cfg.dt)?;
    let stepper = Stepper::new(sys, cfg.dt)?;
    run_with(&stepper, signal.samples(), &recorded_dofs(sys, &cfg.record)?)
}

pub(crate) fn run_with(stepper: &Stepper, input: &[f64], dofs: &[usize]) -> Result<Trajectory> {
    let mut channels: Vec<Vec<f64>> = dofs.iter().map(|_| Vec::with_capacity(input.len())).collect();
    run_visit(stepper, input.iter().copied(), |_, u| {
        for (ch, &d) in channels.iter_mut().zip(dofs) {
            ch.push(u[d]);
        }
    })?;
    Ok(Trajectory {
        dt: stepper.dt(),
        dofs: dofs.to_vec(),
        channels,
    })
}

/// Integrates from rest over a streamed input, handing every new state
/// `u[t+1]` to `visit(t, u)` instead of storing it.
pub fn run_visit(
    stepper: &Stepper,
    input: impl IntoIterator<Item = f64>,
    mut visit: impl FnMut(usize, &[f64]),
) -> Result<()> {
    let n = stepper.n_dofs();
    let mut prev = vec![0.0; n];
    let mut curr = vec![0.0; n];
    let mut next = vec![0.0; n];
    for (t, i_t) in input.into_iter().enumerate() {
        stepper.advance(&curr, &prev, i_t, &mut next);
        check_state(&next, t)?;
        visit(t, &next);
        std::mem::swap(&mut prev, &mut curr);
        std::mem::swap(&mut curr, &mut next);
    }
    Ok(())
}

/// Row `i` of the top block of `[Wʰ | Wⁱ]`: coefficients on `u[t]`, the
/// weight on `u[t−1]`, and the input weight (nonzero only at the input DOF).
fn top_block_rows(sys: &SystemMatrices, dt: f64) -> Vec<(Vec<f64>, f64, f64)> {
    let n = sys.n_dofs();
    let h2 = dt * dt;
    (0..n)
        .map(|i| {
            let d = sys.inertia()[i];
            let c = dt * sys.damping() / (2.0 * d);
            let inv = 1.0 / (1.0 + c);
            let mut row: Vec<f64> = (0..n)
                .map(|j| -(h2 / d) * sys.admittance()[(i, j)])
                .collect();
            row[i] += 2.0;
            // without damping inv is exactly 1 and these are no-ops
            row.iter_mut().for_each(|x| *x *= inv);
            let prev = -(1.0 - c) * inv;
            let gain = if i == sys.input_dof() { h2 / d * inv } else { 0.0 };
            (row, prev, gain)
        })
        .collect()
}

/// Dense RNN form `h[t] = Wʰ h[t−1] + Wⁱ i[t]` with `h = [u[t+1], u[t]]`.
///
/// `Wʰ = [[2 − Δt²D⁻¹Y, −1], [1, 0]]` and `Wⁱ = [Δt²D⁻¹e_in; 0]`; with
/// damping the top block rows are rescaled by the implicit velocity factor.
pub fn transition_matrices(sys: &SystemMatrices, dt: f64) -> (DMatrix<f64>, DVector<f64>) {
    let n = sys.n_dofs();
    let mut wh = DMatrix::zeros(2 * n, 2 * n);
    let mut wi = DVector::zeros(2 * n);
    for (i, (row, prev, gain)) in top_block_rows(sys, dt).into_iter().enumerate() {
        for (j, c) in row.into_iter().enumerate() {
            wh[(i, j)] = c;
        }
        wh[(i, n + i)] = prev;
        wh[(n + i, i)] = 1.0;
        wi[i] = gain;
    }
    (wh, wi)
}

/// Same contract as [`run`], iterated through the dense transition matrices.
pub fn run_matrix_form(sys: &SystemMatrices, signal: &Signal, cfg: &SimConfig) -> Result<Trajectory> {
    check_rate(signal, cfg.dt)?;
    let limit = sys.max_stable_dt();
    if cfg.dt >= limit {
        return Err(Error::UnstableTimeStep { dt: cfg.dt, limit });
    }
    let dofs = recorded_dofs(sys, &cfg.record)?;
    let n = sys.n_dofs();
    let (wh, wi) = transition_matrices(sys, cfg.dt);
    let mut h = vec![0.0; 2 * n];
    let mut next = vec![0.0; 2 * n];
    let mut channels: Vec<Vec<f64>> = dofs.iter().map(|_| Vec::with_capacity(signal.len())).collect();
    for (t, &i_t) in signal.samples().iter().enumerate() {
        for (r, out) in next.iter_mut().enumerate() {
            let mut acc = 0.0;
            for (c, &hc) in h.iter().enumerate() {
                acc += wh[(r, c)] * hc;
            }
            *out = acc + wi[r] * i_t;
        }
        std::mem::swap(&mut h, &mut next);
        check_state(&h[..n], t)?;
        for (ch, &d) in channels.iter_mut().zip(&dofs) {
            ch.push(h[d]);
        }
    }
    Ok(Trajectory {
        dt: cfg.dt,
        dofs,
        channels,
    })
}

/// Discrete energy of the leapfrog scheme between levels `t` and `t+1`:
/// `½ v̇ᵀ D v̇ + ½ u[t+1]ᵀ Y u[t]` with `v̇ = (u[t+1] − u[t])/Δt`.
///
/// For an undamped, unforced system this is conserved exactly by the
/// recurrence (up to round-off) and is positive definite for `Δt` below
/// the stability limit.
pub fn discrete_energy(sys: &SystemMatrices, u_next: &[f64], u_curr: &[f64], dt: f64) -> f64 {
    let n = sys.n_dofs();
    let mut kinetic = 0.0;
    for i in 0..n {
        let v = (u_next[i] - u_curr[i]) / dt;
        kinetic += sys.inertia()[i] * v * v;
    }
    let y = sys.admittance();
    let mut potential = 0.0;
    for i in 0..n {
        for j in 0..n {
            potential += u_next[i] * y[(i, j)] * u_curr[j];
        }
    }
    0.5 * (kinetic + potential)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::simulator::{Branch, BranchKind};
    use crate::unitcell::{resonance_freqs, UnitCellParams};
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use std::f64::consts::PI;

    /// Random connected chain with random grounding, inertia and conductance.
    fn random_system(rng: &mut ChaCha8Rng, n: usize) -> SystemMatrices {
        let inertia: Vec<f64> = (0..n).map(|_| rng.random_range(0.5..2.0)).collect();
        let mut branches = Vec::new();
        for i in 1..n {
            let a = rng.random_range(0..i);
            branches.push(Branch {
                a,
                b: Some(i),
                conductance: rng.random_range(0.5..2.0),
                kind: BranchKind::Other,
            });
        }
        for i in 0..n {
            if rng.random_bool(0.3) {
                branches.push(Branch {
                    a: i,
                    b: None,
                    conductance: rng.random_range(0.1..1.0),
                    kind: BranchKind::Other,
                });
            }
        }
        SystemMatrices::from_branches(inertia, branches, 0, vec![n - 1]).unwrap()
    }

    fn random_signal(rng: &mut ChaCha8Rng, rate: f64, len: usize) -> Signal {
        Signal::new(rate, (0..len).map(|_| rng.random_range(-1.0..1.0)).collect()).unwrap()
    }

    fn max_rel_diff(a: &Trajectory, b: &Trajectory) -> f64 {
        let scale = a
            .channels
            .iter()
            .flatten()
            .fold(0.0f64, |m, x| m.max(x.abs()));
        a.channels
            .iter()
            .flatten()
            .zip(b.channels.iter().flatten())
            .map(|(x, y)| (x - y).abs() / scale)
            .fold(0.0, f64::max)
    }

    #[test]
    fn zero_state_is_a_fixed_point() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let sys = random_system(&mut rng, 4);
        let dt = 0.5 * sys.max_stable_dt();
        let s = step(&sys, &SimState::zeros(4), 0.0, dt).unwrap();
        assert!(s.u_curr.iter().all(|&x| x == 0.0));
        assert_eq!(s.step_index, 1);
    }

    #[test]
    fn free_particle_kick() {
        // zero Y: no stiffness, so any dt is stable
        let sys = SystemMatrices::from_branches(vec![1.0, 1.0], vec![], 0, vec![1]).unwrap();
        let s = step(&sys, &SimState::zeros(2), 1.0, 1.0).unwrap();
        assert_eq!(s.u_curr, vec![1.0, 0.0]);
        assert_eq!(s.u_prev, vec![0.0, 0.0]);
    }

    #[test]
    fn rejects_unstable_dt_and_rate_mismatch() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let sys = random_system(&mut rng, 3);
        let limit = sys.max_stable_dt();
        assert!(matches!(
            Stepper::new(&sys, limit * 1.01),
            Err(Error::UnstableTimeStep { .. })
        ));
        let dt = 0.5 * limit;
        let sig = Signal::zeros(1.0 / dt * 1.5, 10).unwrap();
        assert!(matches!(
            run(&sys, &sig, &SimConfig::new(dt)),
            Err(Error::RateMismatch { .. })
        ));
    }

    #[test]
    fn blow_up_is_reported() {
        let sys = SystemMatrices::from_branches(vec![1.0], vec![], 0, vec![0]).unwrap();
        let sig = Signal::new(1.0, vec![1e13, 0.0]).unwrap();
        let err = run(&sys, &sig, &SimConfig::new(1.0)).unwrap_err();
        assert!(matches!(err, Error::BlowUp { step: 0, .. }), "{err:?}");
    }

    /// Undamped oscillator `r'' + ω²r = sin(ωt)` has the exact solution
    /// `(sin ωt − ωt·cos ωt)/(2ω²)`, whose envelope grows linearly.
    fn resonant_reference(w: f64, t: f64) -> f64 {
        ((w * t).sin() - w * t * (w * t).cos()) / (2.0 * w * w)
    }

    fn check_resonant_growth(sys: &SystemMatrices, w: f64, relative: impl Fn(&Trajectory, usize) -> f64) {
        let per_cycle = 400;
        let cycles = 50;
        let dt = 2.0 * PI / w / per_cycle as f64;
        let sig = Signal::new(
            1.0 / dt,
            (0..per_cycle * cycles).map(|t| (w * t as f64 * dt).sin()).collect(),
        )
        .unwrap();
        let traj = run(sys, &sig, &SimConfig::new(dt).record(Record::All)).unwrap();
        let peak = cycles as f64 * 2.0 * PI / (2.0 * w * w);
        for t in 0..traj.len() {
            let exact = resonant_reference(w, (t + 1) as f64 * dt);
            assert!((relative(&traj, t) - exact).abs() < 0.01 * peak, "step {t}");
        }
        // the envelope over the last cycle is ~50× the first
        let last = ((cycles - 1) * per_cycle..cycles * per_cycle)
            .map(|t| relative(&traj, t).abs())
            .fold(0.0, f64::max);
        let first = (0..per_cycle).map(|t| relative(&traj, t).abs()).fold(0.0, f64::max);
        assert!(last > 40.0 * first);
    }

    #[test]
    fn cell_driven_at_omega0_grows_linearly() {
        // Outer node pinned: the inner node alone resonates at ω₀. Unit D_m
        // makes the forcing exactly sin(ω₀t).
        let p = UnitCellParams::new(1.0, 1.0, 1.0 / (2.0 * PI * 3.0).powi(2)).unwrap();
        let (w0, _) = resonance_freqs(&p).unwrap();
        let sys = SystemMatrices::from_branches(
            vec![p.d_inner],
            vec![Branch {
                a: 0,
                b: None,
                conductance: 1.0 / p.r_internal,
                kind: BranchKind::Internal { cell: 0 },
            }],
            0,
            vec![0],
        )
        .unwrap();
        check_resonant_growth(&sys, w0, |tr, t| tr.channels[0][t]);
    }

    #[test]
    fn free_cell_driven_at_omega1_grows_linearly() {
        // With unit masses the relative coordinate u_o − u_i obeys
        // r'' + ω₁²r = i(t).
        let p = UnitCellParams::new(1.0, 1.0, 1.0 / (2.0 * PI * 3.0).powi(2)).unwrap();
        let (_, w1) = resonance_freqs(&p).unwrap();
        let sys = SystemMatrices::from_branches(
            vec![p.d_outer, p.d_inner],
            vec![Branch {
                a: 0,
                b: Some(1),
                conductance: 1.0 / p.r_internal,
                kind: BranchKind::Internal { cell: 0 },
            }],
            0,
            vec![1],
        )
        .unwrap();
        check_resonant_growth(&sys, w1, |tr, t| tr.channels[0][t] - tr.channels[1][t]);
    }

    #[test]
    fn matrix_form_matches_on_random_systems() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for trial in 0..20 {
            let n = rng.random_range(2..10);
            let mut sys = random_system(&mut rng, n);
            if trial % 4 == 3 {
                sys = sys.with_damping(0.05).unwrap();
            }
            let dt = rng.random_range(0.1..0.9) * sys.max_stable_dt();
            let sig = random_signal(&mut rng, 1.0 / dt, 500);
            let cfg = SimConfig::new(dt).record(Record::All);
            let a = run(&sys, &sig, &cfg).unwrap();
            let b = run_matrix_form(&sys, &sig, &cfg).unwrap();
            let d = max_rel_diff(&a, &b);
            assert!(d <= 1e-12, "trial {trial}: {d:e}");
        }
    }

    #[test]
    fn energy_conserved_over_many_steps() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        for _ in 0..3 {
            let n = rng.random_range(2..8);
            let sys = random_system(&mut rng, n);
            let dt = 0.9 * sys.max_stable_dt();
            let stepper = Stepper::new(&sys, dt).unwrap();
            let mut prev: Vec<f64> = (0..n).map(|_| rng.random_range(-1.0..1.0)).collect();
            let mut curr: Vec<f64> = (0..n).map(|_| rng.random_range(-1.0..1.0)).collect();
            let mut next = vec![0.0; n];
            let e0 = discrete_energy(&sys, &curr, &prev, dt);
            assert!(e0 > 0.0);
            let mut worst = 0.0f64;
            for _ in 0..100_000 {
                stepper.advance(&curr, &prev, 0.0, &mut next);
                worst = worst.max((discrete_energy(&sys, &next, &curr, dt) - e0).abs() / e0);
                std::mem::swap(&mut prev, &mut curr);
                std::mem::swap(&mut curr, &mut next);
            }
            assert!(worst < 1e-2, "energy drift {worst}");
        }
    }

    #[test]
    fn collocated_energy_oscillates_by_the_dispersion_factor() {
        // Single oscillator: with v from the two-level central difference,
        // ½mv² + ½ku² oscillates with relative amplitude (ωΔt)²/4. This is
        // why the staggered form above is the invariant.
        let sys = SystemMatrices::from_branches(
            vec![1.0],
            vec![Branch {
                a: 0,
                b: None,
                conductance: 1.0,
                kind: BranchKind::Other,
            }],
            0,
            vec![0],
        )
        .unwrap();
        let dt = 0.45 * sys.max_stable_dt(); // ωΔt = 0.9
        let stepper = Stepper::new(&sys, dt).unwrap();
        let (mut prev, mut curr, mut next) = (vec![1.0], vec![0.3], vec![0.0]);
        let (mut lo, mut hi) = (f64::INFINITY, 0.0f64);
        for _ in 0..2000 {
            stepper.advance(&curr, &prev, 0.0, &mut next);
            let v = (next[0] - prev[0]) / (2.0 * dt);
            let e = 0.5 * v * v + 0.5 * curr[0] * curr[0];
            lo = lo.min(e);
            hi = hi.max(e);
            prev = curr.clone();
            curr = next.clone();
        }
        assert!(((hi - lo) / hi - 0.81 / 4.0).abs() < 0.01);
    }

    #[test]
    fn long_free_run_stays_bounded() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let n = 6;
        let sys = random_system(&mut rng, n);
        let dt = 0.5 * sys.max_stable_dt();
        let stepper = Stepper::new(&sys, dt).unwrap();
        let mut prev: Vec<f64> = (0..n).map(|_| rng.random_range(-1.0..1.0)).collect();
        let mut curr = prev.clone();
        let init = curr.iter().fold(0.0f64, |m, x| m.max(x.abs()));
        let mut next = vec![0.0; n];
        let mut max = 0.0f64;
        for _ in 0..1_000_000 {
            stepper.advance(&curr, &prev, 0.0, &mut next);
            max = next.iter().fold(max, |m, x| m.max(x.abs()));
            std::mem::swap(&mut prev, &mut curr);
            std::mem::swap(&mut curr, &mut next);
        }
        assert!(max <= 10.0 * init, "{max} vs {init}");
    }

    #[test]
    fn records_requested_dofs_plus_outputs() {
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let sys = random_system(&mut rng, 4);
        let dt = 0.5 * sys.max_stable_dt();
        let sig = random_signal(&mut rng, 1.0 / dt, 17);
        let traj = run(&sys, &sig, &SimConfig::new(dt).record(Record::Dofs(vec![1]))).unwrap();
        assert_eq!(traj.dofs, vec![1, 3]);
        assert_eq!(traj.len(), 17);
        assert_eq!(traj.times()[0], dt);
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(32))]

        #[test]
        fn superposition(seed in any::<u64>(), a in -3.0f64..3.0, b in -3.0f64..3.0) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let n = rng.random_range(2..7);
            let sys = random_system(&mut rng, n);
            let dt = 0.7 * sys.max_stable_dt();
            let x = random_signal(&mut rng, 1.0 / dt, 300);
            let y = random_signal(&mut rng, 1.0 / dt, 300);
            let mix = Signal::new(
                1.0 / dt,
                x.samples().iter().zip(y.samples()).map(|(p, q)| a * p + b * q).collect(),
            ).unwrap();
            let cfg = SimConfig::new(dt).record(Record::All);
            let rx = run(&sys, &x, &cfg).unwrap();
            let ry = run(&sys, &y, &cfg).unwrap();
            let rm = run(&sys, &mix, &cfg).unwrap();
            let scale = rm.channels.iter().flatten().fold(1e-300f64, |m, v| m.max(v.abs()))
                .max(rx.channels.iter().flatten().fold(0.0f64, |m, v| m.max(v.abs())))
                .max(ry.channels.iter().flatten().fold(0.0f64, |m, v| m.max(v.abs())));
            for k in 0..rm.channels.len() {
                for t in 0..rm.len() {
                    let lin = a * rx.channels[k][t] + b * ry.channels[k][t];
                    prop_assert!((rm.channels[k][t] - lin).abs() <= 1e-10 * scale);
                }
            }
        }
    }
}
