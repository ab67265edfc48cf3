//! Training of the mechanical network by backpropagation through time.
//!
//! The masses stay fixed and the stiffnesses `k_n` (per cell) and `k_c`
//! (per edge) are trained in log space with Adam. A sample's class
//! probabilities are its L1-normalized output energies and the loss is the
//! cross-entropy of the true class. Trained networks are converted to
//! circuit values with [`export_trained`].

mod bptt;
mod export;

pub use bptt::{auto_dt, energy_loss, substeps, BatchResult, Gradient, Network, SampleResult};
pub use export::{evaluate, export_trained, Evaluation, ExportReport};

use std::f64::consts::PI;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::lattice::{LatticeSpec, MechanicalParams};
use crate::signals::{Dataset, LabeledSignal, Split};
use crate::simulator::assemble_mechanical;

/// Box constraint on every realized stiffness (N/m).
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Bounds {
    pub k_min: f64,
    pub k_max: f64,
}

impl Default for Bounds {
    fn default() -> Self {
        Self {
            k_min: 1e-2,
            k_max: 1e4,
        }
    }
}

impl Bounds {
    fn validate(&self) -> Result<()> {
        if !(self.k_min > 0.0 && self.k_max > self.k_min && self.k_max.is_finite()) {
            return Err(Error::invalid(format!(
                "stiffness bounds must satisfy 0 < k_min < k_max, got {:?}",
                self
            )));
        }
        Ok(())
    }
}

/// Log-space stiffnesses. `k = exp(θ)` with `θ` projected onto
/// `[ln k_min, ln k_max]` after every update, so the realized values can
/// never leave the bounds.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainableParams {
    pub theta_kn: Vec<f64>,
    pub theta_kc: Vec<f64>,
    pub bounds: Bounds,
}

impl TrainableParams {
    pub fn from_mech(mech: &MechanicalParams, bounds: Bounds) -> Result<Self> {
        mech.validate()?;
        bounds.validate()?;
        let mut p = Self {
            theta_kn: mech.k_internal.iter().map(|k| k.ln()).collect(),
            theta_kc: mech.k_coupling.iter().map(|k| k.ln()).collect(),
            bounds,
        };
        p.project();
        Ok(p)
    }

    pub fn len(&self) -> usize {
        self.theta_kn.len() + self.theta_kc.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn project(&mut self) {
        let (lo, hi) = (self.bounds.k_min.ln(), self.bounds.k_max.ln());
        for t in self.theta_kn.iter_mut().chain(&mut self.theta_kc) {
            *t = t.clamp(lo, hi);
        }
    }

    pub fn k_internal(&self) -> Vec<f64> {
        self.theta_kn.iter().map(|t| t.exp()).collect()
    }

    pub fn k_coupling(&self) -> Vec<f64> {
        self.theta_kc.iter().map(|t| t.exp()).collect()
    }

    /// Realized parameters with the given (fixed) masses.
    pub fn to_mech(&self, outer_mass: &[f64], inner_mass: &[f64]) -> MechanicalParams {
        MechanicalParams {
            outer_mass: outer_mass.to_vec(),
            inner_mass: inner_mass.to_vec(),
            k_internal: self.k_internal(),
            k_coupling: self.k_coupling(),
        }
    }

    /// Chain rule through `k = exp(θ)`, flattened as `[k_n…, k_c…]`.
    fn theta_gradient(&self, g: &Gradient) -> Vec<f64> {
        let kn = self.theta_kn.iter().zip(&g.k_internal);
        let kc = self.theta_kc.iter().zip(&g.k_coupling);
        kn.chain(kc).map(|(t, d)| d * t.exp()).collect()
    }

    fn apply(&mut self, adam: &mut AdamState, grads: &[f64]) -> Result<()> {
        let mut flat: Vec<f64> = self.theta_kn.iter().chain(&self.theta_kc).copied().collect();
        adam_step(adam, &mut flat, grads)?;
        let (kn, kc) = flat.split_at(self.theta_kn.len());
        self.theta_kn.copy_from_slice(kn);
        self.theta_kc.copy_from_slice(kc);
        self.project();
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct AdamHyper {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamHyper {
    fn default() -> Self {
        Self {
            lr: 1e-2,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AdamState {
    pub m: Vec<f64>,
    pub v: Vec<f64>,
    pub t: u64,
    pub hyper: AdamHyper,
}

impl AdamState {
    pub fn new(n: usize, hyper: AdamHyper) -> Self {
        Self {
            m: vec![0.0; n],
            v: vec![0.0; n],
            t: 0,
            hyper,
        }
    }
}

/// One bias-corrected Adam update of `params` in place.
pub fn adam_step(state: &mut AdamState, params: &mut [f64], grads: &[f64]) -> Result<()> {
    if params.len() != state.m.len() || grads.len() != state.m.len() {
        return Err(Error::invalid(format!(
            "Adam state has {} entries, got {} parameters and {} gradients",
            state.m.len(),
            params.len(),
            grads.len()
        )));
    }
    let h = state.hyper;
    state.t += 1;
    let c1 = 1.0 - h.beta1.powi(state.t as i32);
    let c2 = 1.0 - h.beta2.powi(state.t as i32);
    for i in 0..params.len() {
        let g = grads[i];
        state.m[i] = h.beta1 * state.m[i] + (1.0 - h.beta1) * g;
        state.v[i] = h.beta2 * state.v[i] + (1.0 - h.beta2) * g * g;
        let m_hat = state.m[i] / c1;
        let v_hat = state.v[i] / c2;
        params[i] -= h.lr * m_hat / (v_hat.sqrt() + h.eps);
    }
    Ok(())
}

/// Random initial stiffnesses for a task band `[f_low, f_high]`.
///
/// Each cell's `k_n` puts its in-phase resonance `√(k_n/m)/2π` uniformly in
/// `[0.8·f_low, 1.2·f_high]`; each `k_c` is log-uniform on `[kc_low, kc_high]`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct InitConfig {
    pub f_low: f64,
    pub f_high: f64,
    pub kc_low: f64,
    pub kc_high: f64,
}

impl InitConfig {
    /// Band taken from the dataset's class centres.
    pub fn for_dataset(ds: &Dataset) -> Self {
        let centres = ds.classes.iter().map(|c| c.center_hz);
        let f_low = centres.clone().fold(f64::INFINITY, f64::min);
        let f_high = centres.fold(0.0, f64::max);
        Self {
            f_low,
            f_high,
            ..Self::default()
        }
    }
}

impl Default for InitConfig {
    fn default() -> Self {
        Self {
            f_low: 30.0,
            f_high: 70.0,
            kc_low: 400.0,
            kc_high: 4000.0,
        }
    }
}

pub fn init_params(
    spec: &LatticeSpec,
    outer_mass: f64,
    inner_mass: f64,
    init: &InitConfig,
    seed: u64,
) -> Result<MechanicalParams> {
    if !(init.f_low > 0.0 && init.f_high >= init.f_low && init.kc_low > 0.0 && init.kc_high >= init.kc_low) {
        return Err(Error::invalid(format!("bad initialization ranges {init:?}")));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(1);
    let (f_lo, f_hi) = (0.8 * init.f_low, 1.2 * init.f_high);
    let (ln_lo, ln_hi) = (init.kc_low.ln(), init.kc_high.ln());
    let k_internal = (0..spec.n_cells())
        .map(|_| {
            let f = f_lo + (f_hi - f_lo) * rng.random::<f64>();
            inner_mass * (2.0 * PI * f).powi(2)
        })
        .collect();
    let k_coupling = (0..spec.n_edges())
        .map(|_| (ln_lo + (ln_hi - ln_lo) * rng.random::<f64>()).exp())
        .collect();
    let mech = MechanicalParams {
        outer_mass: vec![outer_mass; spec.n_cells()],
        inner_mass: vec![inner_mass; spec.n_cells()],
        k_internal,
        k_coupling,
    };
    mech.validate_for(spec)?;
    Ok(mech)
}

/// Missing fields in JSON take their [`Default`] values.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub lr: f64,
    /// Simulation step (s). `None` picks the step per batch with [`auto_dt`].
    pub dt: Option<f64>,
    pub seed: u64,
    /// Training stops once the end-of-epoch training loss reaches this.
    pub loss_floor: f64,
    pub prob_epsilon: f64,
    pub bounds: Bounds,
    pub beta1: f64,
    pub beta2: f64,
    pub adam_eps: f64,
}

fn default_beta1() -> f64 {
    0.9
}

fn default_beta2() -> f64 {
    0.999
}

fn default_adam_eps() -> f64 {
    1e-8
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            epochs: 30,
            batch_size: 16,
            lr: 1e-2,
            dt: None,
            seed: 0,
            loss_floor: 1e-3,
            prob_epsilon: 1e-12,
            bounds: Bounds::default(),
            beta1: default_beta1(),
            beta2: default_beta2(),
            adam_eps: default_adam_eps(),
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.epochs == 0 || self.batch_size == 0 {
            return Err(Error::invalid("epochs and batch size must be positive"));
        }
        for (name, v) in [("lr", self.lr), ("loss floor", self.loss_floor), ("adam eps", self.adam_eps)] {
            if !(v.is_finite() && v > 0.0) {
                return Err(Error::invalid(format!("{name} must be positive, got {v}")));
            }
        }
        if !(self.prob_epsilon.is_finite() && self.prob_epsilon >= 0.0) {
            return Err(Error::invalid("probability epsilon must be non-negative"));
        }
        if !(0.0..1.0).contains(&self.beta1) || !(0.0..1.0).contains(&self.beta2) {
            return Err(Error::invalid("Adam betas must lie in [0, 1)"));
        }
        if let Some(dt) = self.dt {
            if !(dt.is_finite() && dt > 0.0) {
                return Err(Error::invalid(format!("dt must be positive, got {dt}")));
            }
        }
        self.bounds.validate()
    }

    fn adam(&self) -> AdamHyper {
        AdamHyper {
            lr: self.lr,
            beta1: self.beta1,
            beta2: self.beta2,
            eps: self.adam_eps,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpochMetrics {
    pub epoch: usize,
    /// Mean training loss with the parameters at the end of the epoch.
    pub loss: f64,
    pub train_acc: f64,
    /// Held-out accuracy; `None` without a test split.
    pub val_acc: Option<f64>,
    /// Simulation step used for the evaluation.
    pub dt: f64,
}

/// Everything needed to continue a run exactly where it stopped.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Checkpoint {
    /// Completed epochs.
    pub epoch: usize,
    pub config: TrainConfig,
    pub spec: LatticeSpec,
    pub outer_mass: Vec<f64>,
    pub inner_mass: Vec<f64>,
    pub params: TrainableParams,
    pub adam: AdamState,
    pub rng: ChaCha8Rng,
    pub history: Vec<EpochMetrics>,
}

impl Checkpoint {
    pub fn mech(&self) -> MechanicalParams {
        self.params.to_mech(&self.outer_mass, &self.inner_mass)
    }

    /// Step used for the last evaluation.
    pub fn dt(&self) -> Option<f64> {
        self.history.last().map(|m| m.dt)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StopReason {
    LossFloor,
    EpochBudget,
}

#[derive(Clone, Debug)]
pub struct TrainOutcome {
    pub mech: MechanicalParams,
    pub dt: f64,
    pub history: Vec<EpochMetrics>,
    pub stop: StopReason,
    pub checkpoint: Checkpoint,
}

/// Simulation step for `mech` on signals sampled every `signal_dt`.
pub fn resolve_dt(spec: &LatticeSpec, mech: &MechanicalParams, cfg: &TrainConfig, signal_dt: f64) -> Result<f64> {
    match cfg.dt {
        Some(dt) => {
            substeps(signal_dt, dt)?;
            Ok(dt)
        }
        None => Ok(auto_dt(&assemble_mechanical(spec, mech)?, signal_dt)),
    }
}

fn network(spec: &LatticeSpec, mech: &MechanicalParams, cfg: &TrainConfig, signal_dt: f64) -> Result<Network> {
    let dt = resolve_dt(spec, mech, cfg, signal_dt)?;
    Network::new(spec, assemble_mechanical(spec, mech)?, dt)
}

fn check_dataset(spec: &LatticeSpec, data: &Dataset) -> Result<()> {
    if data.split(Split::Train).is_empty() {
        return Err(Error::invalid("dataset has no training samples"));
    }
    if data.n_classes() != spec.outputs().len() {
        return Err(Error::invalid(format!(
            "dataset has {} classes but the lattice has {} outputs",
            data.n_classes(),
            spec.outputs().len()
        )));
    }
    if let Some(s) = data.samples.iter().find(|s| s.label >= data.n_classes()) {
        return Err(Error::invalid(format!("sample {} has label {} out of range", s.id, s.label)));
    }
    Ok(())
}

/// Trains from `init`, calling `on_epoch` with a checkpoint after every
/// epoch. Samples are visited in a seeded shuffle; everything downstream of
/// the seed is deterministic and independent of the thread count.
///
/// A non-finite loss or a failed simulation aborts with
/// [`Error::Diverged`]; the last checkpoint handed to `on_epoch` is the last
/// good state.
pub fn train(
    spec: &LatticeSpec,
    init: &MechanicalParams,
    data: &Dataset,
    cfg: &TrainConfig,
    on_epoch: impl FnMut(&Checkpoint) -> Result<()>,
) -> Result<TrainOutcome> {
    cfg.validate()?;
    init.validate_for(spec)?;
    let params = TrainableParams::from_mech(init, cfg.bounds)?;
    let start = Checkpoint {
        epoch: 0,
        config: cfg.clone(),
        spec: spec.clone(),
        outer_mass: init.outer_mass.clone(),
        inner_mass: init.inner_mass.clone(),
        adam: AdamState::new(params.len(), cfg.adam()),
        params,
        rng: ChaCha8Rng::seed_from_u64(cfg.seed),
        history: Vec::new(),
    };
    resume(start, data, on_epoch)
}

/// Continues from a checkpoint up to its configured epoch budget. Resuming
/// from the checkpoint of epoch `e` reproduces the uninterrupted history.
pub fn resume(
    mut ck: Checkpoint,
    data: &Dataset,
    mut on_epoch: impl FnMut(&Checkpoint) -> Result<()>,
) -> Result<TrainOutcome> {
    let cfg = ck.config.clone();
    let spec = ck.spec.clone();
    cfg.validate()?;
    check_dataset(&spec, data)?;
    let train_set = data.split(Split::Train);
    let test_set = data.split(Split::Test);
    let signal_dt = 1.0 / data.rate;
    let floor_reached = |ck: &Checkpoint| ck.history.last().is_some_and(|m| m.loss <= cfg.loss_floor);
    while ck.epoch < cfg.epochs && !floor_reached(&ck) {
        let epoch = ck.epoch + 1;
        let diverged = |msg: String| Error::Diverged { epoch, msg };
        let mut order: Vec<usize> = (0..train_set.len()).collect();
        order.shuffle(&mut ck.rng);
        for chunk in order.chunks(cfg.batch_size) {
            let batch: Vec<&LabeledSignal> = chunk.iter().map(|&i| train_set[i]).collect();
            let net = network(&spec, &ck.mech(), &cfg, signal_dt).map_err(|e| diverged(e.detail()))?;
            let result = net.backward(&batch, cfg.prob_epsilon).map_err(|e| diverged(e.detail()))?;
            if !result.loss.is_finite() {
                return Err(diverged(format!("batch loss is {}", result.loss)));
            }
            let grads = ck.params.theta_gradient(result.gradient.as_ref().expect("backward fills the gradient"));
            if grads.iter().any(|g| !g.is_finite()) {
                return Err(diverged("non-finite gradient".into()));
            }
            ck.params.apply(&mut ck.adam, &grads)?;
        }
        let net = network(&spec, &ck.mech(), &cfg, signal_dt).map_err(|e| diverged(e.detail()))?;
        let train_eval = evaluate(&net, &train_set, cfg.prob_epsilon).map_err(|e| diverged(e.detail()))?;
        if !train_eval.loss.is_finite() {
            return Err(diverged(format!("training loss is {}", train_eval.loss)));
        }
        let val_acc = if test_set.is_empty() {
            None
        } else {
            Some(evaluate(&net, &test_set, cfg.prob_epsilon).map_err(|e| diverged(e.detail()))?.accuracy)
        };
        let metrics = EpochMetrics {
            epoch,
            loss: train_eval.loss,
            train_acc: train_eval.accuracy,
            val_acc,
            dt: net.dt(),
        };
        log::info!(
            "epoch {epoch}: loss {:.5} train {:.3} val {}",
            metrics.loss,
            metrics.train_acc,
            val_acc.map_or("-".into(), |v| format!("{v:.3}"))
        );
        ck.history.push(metrics);
        ck.epoch = epoch;
        on_epoch(&ck)?;
    }
    let stop = if floor_reached(&ck) {
        StopReason::LossFloor
    } else {
        StopReason::EpochBudget
    };
    let dt = match ck.dt() {
        Some(dt) => dt,
        None => resolve_dt(&spec, &ck.mech(), &cfg, signal_dt)?,
    };
    Ok(TrainOutcome {
        mech: ck.mech(),
        dt,
        history: ck.history.clone(),
        stop,
        checkpoint: ck,
    })
}
