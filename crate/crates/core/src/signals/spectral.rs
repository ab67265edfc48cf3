use std::f64::consts::PI;

use num_complex::Complex64;
use rustfft::FftPlanner;
use serde::{Deserialize, Serialize};

use super::synth::sweep_frequency;
use super::Signal;
use crate::error::{Error, Result};
use crate::simulator::{run_visit, Stepper, SystemMatrices};

/// Periodic Hann window of length `n`.
pub fn hann(n: usize) -> Vec<f64> {
    (0..n)
        .map(|k| 0.5 - 0.5 * (2.0 * PI * k as f64 / n as f64).cos())
        .collect()
}

/// Hann-windowed magnitude spectrogram.
///
/// Choose the window to span at least four periods of the lowest frequency
/// of interest; shorter windows smear it across the DC bins.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Spectrogram {
    pub rate: f64,
    pub window_len: usize,
    pub hop: usize,
    /// Bin centre frequencies `k·rate/N` for `k = 0..=N/2` (Hz).
    pub freqs: Vec<f64>,
    /// Frame centre times (s).
    pub times: Vec<f64>,
    /// `mags[frame][bin]` = |Σ w[n] x[n] e^{−2πjkn/N}|.
    pub mags: Vec<Vec<f64>>,
}

impl Spectrogram {
    fn window_power(&self) -> f64 {
        hann(self.window_len).iter().map(|w| w * w).sum()
    }

    /// Signal energy `Σ x²·Δt` recovered from the grid via Parseval, assuming
    /// the squared windows tile time evenly on average.
    pub fn energy(&self) -> f64 {
        let n = self.window_len;
        let last = n / 2;
        let per_frame: f64 = self
            .mags
            .iter()
            .map(|frame| {
                frame
                    .iter()
                    .enumerate()
                    .map(|(k, m)| {
                        let c = if k == 0 || (n % 2 == 0 && k == last) { 1.0 } else { 2.0 };
                        c * m * m
                    })
                    .sum::<f64>()
                    / n as f64
            })
            .sum();
        per_frame * self.hop as f64 / self.window_power() / self.rate
    }

    /// Index of the bin nearest to `freq`.
    pub fn bin_of(&self, freq: f64) -> usize {
        let k = (freq * self.window_len as f64 / self.rate).round();
        (k.max(0.0) as usize).min(self.freqs.len() - 1)
    }
}

pub fn stft(sig: &Signal, window_s: f64, hop_s: f64) -> Result<Spectrogram> {
    if !(window_s > 0.0 && hop_s > 0.0) {
        return Err(Error::invalid("window and hop must be positive"));
    }
    let n = (window_s * sig.rate()).round() as usize;
    let hop = ((hop_s * sig.rate()).round() as usize).max(1);
    if n < 2 {
        return Err(Error::invalid("window shorter than two samples"));
    }
    if n > sig.len() {
        return Err(Error::WindowTooLong {
            window: n,
            len: sig.len(),
        });
    }
    let w = hann(n);
    let fft = FftPlanner::new().plan_fft_forward(n);
    let mut buf = vec![Complex64::new(0.0, 0.0); n];
    let mut mags = Vec::new();
    let mut times = Vec::new();
    let x = sig.samples();
    let mut start = 0;
    while start + n <= x.len() {
        for (b, (xi, wi)) in buf.iter_mut().zip(x[start..start + n].iter().zip(&w)) {
            *b = Complex64::new(xi * wi, 0.0);
        }
        fft.process(&mut buf);
        mags.push(buf[..=n / 2].iter().map(|z| z.norm()).collect());
        times.push((start as f64 + n as f64 / 2.0) / sig.rate());
        start += hop;
    }
    Ok(Spectrogram {
        rate: sig.rate(),
        window_len: n,
        hop,
        freqs: (0..=n / 2).map(|k| k as f64 * sig.rate() / n as f64).collect(),
        times,
        mags,
    })
}

/// Virtual swept-sine measurement settings.
///
/// The lattice is driven by `g_m·U_sweep(t)` where `U_sweep` is a linear
/// chirp. For an undamped lattice every resonance the chirp passes keeps
/// ringing, so the window must be long enough for Hann leakage from those
/// modes to be negligible at the ridge, and the sweep slow enough that the
/// response stays quasi-stationary within one window.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SweepMeasurement {
    pub f_start: f64,
    pub f_end: f64,
    /// Chirp rate (Hz/s). Keep it under 1 Hz per 10 periods of the lowest
    /// frequency.
    pub sweep_rate: f64,
    /// Simulation and acquisition rate (Hz).
    pub rate_hz: f64,
    pub window_s: f64,
    /// Transconductance of the current source (S).
    pub g_m: f64,
    /// Sweep voltage amplitude (V).
    pub amplitude: f64,
}

impl SweepMeasurement {
    pub fn new(f_start: f64, f_end: f64) -> Self {
        Self {
            f_start,
            f_end,
            sweep_rate: 0.1,
            rate_hz: 10_000.0,
            window_s: 10.0,
            g_m: 1e-6,
            amplitude: 1.0,
        }
    }

    fn validate(&self) -> Result<()> {
        for (name, v) in [
            ("sweep rate", self.sweep_rate),
            ("rate", self.rate_hz),
            ("window", self.window_s),
            ("g_m", self.g_m),
            ("amplitude", self.amplitude),
        ] {
            if !(v.is_finite() && v > 0.0) {
                return Err(Error::invalid(format!("{name} must be positive, got {v}")));
            }
        }
        if !(self.f_start > 0.0 && self.f_end > self.f_start) {
            return Err(Error::invalid("sweep range must be increasing and positive"));
        }
        if self.f_end >= self.rate_hz / 2.0 {
            return Err(Error::Nyquist {
                freq: self.f_end,
                rate: self.rate_hz,
            });
        }
        let slow = 0.1 * self.f_start;
        if self.sweep_rate > slow {
            log::warn!(
                "sweep rate {} Hz/s exceeds 1 Hz per 10 periods at {} Hz",
                self.sweep_rate,
                self.f_start
            );
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TransferPoint {
    pub freq_hz: f64,
    /// |H_i| per output (V/A).
    pub h: Vec<f64>,
}

/// Measures |H_i| at each requested frequency.
///
/// The chirp is extended by half a window's worth of sweep on both sides so
/// that every requested frequency has a full window centred on the instant
/// the chirp passes through it. At that instant the Hann-windowed DFT of the
/// sweep voltage and of each output is evaluated at exactly that frequency,
/// i.e. the spectrograms are sampled on the sweep's time-frequency ridge,
/// and `H_i = |U_i|/(|U_sweep|·g_m)`.
pub fn measure_transfer(
    sys: &SystemMatrices,
    cfg: &SweepMeasurement,
    freqs_hz: &[f64],
) -> Result<Vec<TransferPoint>> {
    cfg.validate()?;
    if let Some(f) = freqs_hz.iter().find(|&&f| !(f >= cfg.f_start && f <= cfg.f_end)) {
        return Err(Error::invalid(format!(
            "frequency {f} outside the sweep range {}..{}",
            cfg.f_start, cfg.f_end
        )));
    }
    let dt = 1.0 / cfg.rate_hz;
    let stepper = Stepper::new(sys, dt)?;
    let half_sweep = 0.5 * cfg.window_s * cfg.sweep_rate;
    let f_lo = (cfg.f_start - half_sweep).max(0.0);
    let f_hi = cfg.f_end + half_sweep;
    let duration = (f_hi - f_lo) / cfg.sweep_rate;
    let n_samples = (duration * cfg.rate_hz).round() as usize;
    let win = hann((cfg.window_s * cfg.rate_hz).round() as usize);
    let n_win = win.len();
    let sweep = |t: usize| {
        let time = t as f64 * dt;
        let k = (f_hi - f_lo) / duration;
        cfg.amplitude * (2.0 * PI * (f_lo * time + 0.5 * k * time * time)).sin()
    };

    struct Window {
        freq: f64,
        start: usize,
        input: Complex64,
        outputs: Vec<Complex64>,
    }
    let mut windows: Vec<Window> = freqs_hz
        .iter()
        .map(|&f| {
            let centre = ((f - f_lo) / cfg.sweep_rate * cfg.rate_hz).round() as usize;
            let start = centre.saturating_sub(n_win / 2);
            let mut input = Complex64::new(0.0, 0.0);
            for (k, w) in win.iter().enumerate() {
                let t = start + k;
                input += Complex64::from_polar(w * sweep(t), -2.0 * PI * f * t as f64 * dt);
            }
            Window {
                freq: f,
                start,
                input,
                outputs: vec![Complex64::new(0.0, 0.0); sys.output_dofs().len()],
            }
        })
        .collect();
    let mut order: Vec<usize> = (0..windows.len()).collect();
    order.sort_by_key(|&i| windows[i].start);
    let total = n_samples.max(order.last().map_or(0, |&i| windows[i].start + n_win));
    let outputs = sys.output_dofs().to_vec();
    let mut first_open = 0;
    run_visit(&stepper, (0..total).map(sweep).map(|u| u * cfg.g_m), |t, u| {
        while first_open < order.len() && windows[order[first_open]].start + n_win <= t {
            first_open += 1;
        }
        for &wi in &order[first_open..] {
            let w = &mut windows[wi];
            if w.start > t {
                break;
            }
            let k = t - w.start;
            if k >= n_win {
                continue;
            }
            // row t of the trajectory is the state at time (t + 1)·dt
            let phase = Complex64::from_polar(win[k], -2.0 * PI * w.freq * (t + 1) as f64 * dt);
            for (acc, &d) in w.outputs.iter_mut().zip(&outputs) {
                *acc += phase * u[d];
            }
        }
    })?;
    Ok(windows
        .into_iter()
        .map(|w| TransferPoint {
            freq_hz: w.freq,
            h: w
                .outputs
                .iter()
                .map(|y| y.norm() / (w.input.norm() * cfg.g_m))
                .collect(),
        })
        .collect())
}

/// Instantaneous frequency of the measurement chirp at time `t`.
pub fn measurement_frequency(cfg: &SweepMeasurement, t: f64) -> f64 {
    let half_sweep = 0.5 * cfg.window_s * cfg.sweep_rate;
    let f_lo = (cfg.f_start - half_sweep).max(0.0);
    let f_hi = cfg.f_end + half_sweep;
    sweep_frequency(f_lo, f_hi, (f_hi - f_lo) / cfg.sweep_rate, t)
}
