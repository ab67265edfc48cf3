use std::f64::consts::PI;

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand::SeedableRng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use super::Signal;
use crate::error::{Error, Result};

/// Gaussian-modulated cosine burst
/// `A·exp(−(t − t_c)²/2σ²)·cos(2πf_c(t − t_c) + φ)`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Pulse {
    pub center_hz: f64,
    pub sigma_s: f64,
    pub amplitude: f64,
    pub t_center: f64,
    #[serde(default)]
    pub phase: f64,
}

fn check_nyquist(freq: f64, rate: f64) -> Result<()> {
    if !(rate.is_finite() && rate > 0.0) {
        return Err(Error::invalid(format!("sample rate must be positive, got {rate}")));
    }
    if !(freq.is_finite() && freq >= 0.0) {
        return Err(Error::invalid(format!("frequency must be non-negative, got {freq}")));
    }
    if freq >= rate / 2.0 {
        return Err(Error::Nyquist { freq, rate });
    }
    Ok(())
}

fn sample_count(duration_s: f64, rate_hz: f64) -> Result<usize> {
    if !(duration_s.is_finite() && duration_s > 0.0) {
        return Err(Error::invalid(format!("duration must be positive, got {duration_s}")));
    }
    Ok((duration_s * rate_hz).round() as usize)
}

pub fn gen_pulse(pulse: &Pulse, duration_s: f64, rate_hz: f64) -> Result<Signal> {
    check_nyquist(pulse.center_hz, rate_hz)?;
    if !(pulse.sigma_s.is_finite() && pulse.sigma_s > 0.0) {
        return Err(Error::invalid(format!("sigma must be positive, got {}", pulse.sigma_s)));
    }
    let n = sample_count(duration_s, rate_hz)?;
    let two_var = 2.0 * pulse.sigma_s * pulse.sigma_s;
    let samples = (0..n)
        .map(|k| {
            let tau = k as f64 / rate_hz - pulse.t_center;
            pulse.amplitude
                * (-tau * tau / two_var).exp()
                * (2.0 * PI * pulse.center_hz * tau + pulse.phase).cos()
        })
        .collect();
    Signal::new(rate_hz, samples)
}

/// Adds white Gaussian noise at the requested SNR; an infinite SNR returns
/// the signal unchanged.
pub fn add_noise(sig: &Signal, snr_db: f64, seed: u64) -> Result<Signal> {
    add_noise_with(sig, snr_db, &mut ChaCha8Rng::seed_from_u64(seed))
}

pub(crate) fn add_noise_with<R: Rng>(sig: &Signal, snr_db: f64, rng: &mut R) -> Result<Signal> {
    if snr_db == f64::INFINITY {
        return Ok(sig.clone());
    }
    if snr_db.is_nan() {
        return Err(Error::invalid("SNR is NaN"));
    }
    let power = sig.power();
    if power <= 0.0 {
        return Err(Error::ZeroPower);
    }
    let sd = (power / 10f64.powf(snr_db / 10.0)).sqrt();
    let normal = Normal::new(0.0, sd).map_err(|e| Error::invalid(e.to_string()))?;
    let samples = sig
        .samples()
        .iter()
        .map(|x| x + normal.sample(rng))
        .collect();
    Signal::new(sig.rate(), samples)
}

/// Frequency ranges used for transmission measurements.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SweepPreset {
    /// 1 to 100 Hz, the Gaussian-pulse band.
    Pulse,
    /// 50 to 250 Hz, the speech band.
    Speech,
    /// 1 to 120 Hz, the vibration band.
    Vibration,
}

impl SweepPreset {
    pub fn range_hz(self) -> (f64, f64) {
        match self {
            SweepPreset::Pulse => (1.0, 100.0),
            SweepPreset::Speech => (50.0, 250.0),
            SweepPreset::Vibration => (1.0, 120.0),
        }
    }
}

/// Unit-amplitude linear chirp `sin(2π(f₀t + (f₁ − f₀)t²/2T))`.
pub fn gen_sweep(f_start: f64, f_end: f64, duration_s: f64, rate_hz: f64) -> Result<Signal> {
    check_nyquist(f_start, rate_hz)?;
    check_nyquist(f_end, rate_hz)?;
    let n = sample_count(duration_s, rate_hz)?;
    let k = (f_end - f_start) / duration_s;
    let samples = (0..n)
        .map(|i| {
            let t = i as f64 / rate_hz;
            (2.0 * PI * (f_start * t + 0.5 * k * t * t)).sin()
        })
        .collect();
    Signal::new(rate_hz, samples)
}

/// Instantaneous frequency of [`gen_sweep`] at time `t`.
pub fn sweep_frequency(f_start: f64, f_end: f64, duration_s: f64, t: f64) -> f64 {
    f_start + (f_end - f_start) * t / duration_s
}

#[cfg(test)]
mod tests {
    use super::*;
    use rustfft::{num_complex::Complex, FftPlanner};

    fn spectrum_peak_hz(sig: &Signal) -> (f64, f64) {
        let n = sig.len();
        let mut buf: Vec<Complex<f64>> = sig.samples().iter().map(|&x| Complex::new(x, 0.0)).collect();
        FftPlanner::new().plan_fft_forward(n).process(&mut buf);
        let mags: Vec<f64> = buf[..n / 2].iter().map(|z| z.norm()).collect();
        let k = (0..mags.len()).max_by(|&a, &b| mags[a].total_cmp(&mags[b])).unwrap();
        let df = sig.rate() / n as f64;
        let power: f64 = mags.iter().map(|m| m * m).sum();
        let centroid = mags.iter().enumerate().map(|(i, m)| i as f64 * df * m * m).sum::<f64>() / power;
        (k as f64 * df, centroid)
    }

    #[test]
    fn pulse_peak_and_limit() {
        let p = Pulse {
            center_hz: 50.0,
            sigma_s: 0.1,
            amplitude: 2.0,
            t_center: 0.5,
            phase: 0.0,
        };
        let s = gen_pulse(&p, 1.0, 2000.0).unwrap();
        assert_eq!(s.len(), 2000);
        assert!((s.samples()[1000] - 2.0).abs() < 1e-12);
        let wide = Pulse { sigma_s: 100.0, ..p };
        let s = gen_pulse(&wide, 1.0, 2000.0).unwrap();
        for (k, &x) in s.samples().iter().enumerate() {
            let pure = 2.0 * (2.0 * PI * 50.0 * (k as f64 / 2000.0 - 0.5)).cos();
            assert!((x - pure).abs() < 1e-3 * 2.0);
        }
        assert!(matches!(
            gen_pulse(&Pulse { center_hz: 1000.0, ..p }, 1.0, 2000.0),
            Err(Error::Nyquist { .. })
        ));
    }

    #[test]
    fn pulse_spectrum_centred() {
        for fc in [30.0, 50.0, 70.0] {
            let p = Pulse {
                center_hz: fc,
                sigma_s: 0.1,
                amplitude: 1.0,
                t_center: 0.5,
                phase: 0.3,
            };
            let s = gen_pulse(&p, 1.0, 2000.0).unwrap();
            let (peak, centroid) = spectrum_peak_hz(&s);
            assert!((peak - fc).abs() <= 1.0, "peak {peak}");
            assert!((centroid - fc).abs() < 0.02 * fc, "centroid {centroid}");
        }
    }

    #[test]
    fn noise_level_and_determinism() {
        let s = gen_sweep(10.0, 10.0, 50.0, 2000.0).unwrap();
        assert_eq!(s.len(), 100_000);
        for snr in [0.0, 10.0, 20.0] {
            let noisy = add_noise(&s, snr, 9).unwrap();
            let noise_power = noisy
                .samples()
                .iter()
                .zip(s.samples())
                .map(|(a, b)| (a - b).powi(2))
                .sum::<f64>()
                / s.len() as f64;
            let measured = 10.0 * (s.power() / noise_power).log10();
            assert!((measured - snr).abs() < 0.5, "{measured} vs {snr}");
        }
        assert_eq!(add_noise(&s, 20.0, 1).unwrap(), add_noise(&s, 20.0, 1).unwrap());
        assert_ne!(add_noise(&s, 20.0, 1).unwrap(), add_noise(&s, 20.0, 2).unwrap());
        assert_eq!(add_noise(&s, f64::INFINITY, 1).unwrap(), s);
        assert!(matches!(
            add_noise(&Signal::zeros(10.0, 5).unwrap(), 10.0, 1),
            Err(Error::ZeroPower)
        ));
    }

    #[test]
    fn sweep_shape() {
        let tone = gen_sweep(5.0, 5.0, 2.0, 1000.0).unwrap();
        for (k, &x) in tone.samples().iter().enumerate() {
            assert!((x - (2.0 * PI * 5.0 * k as f64 / 1000.0).sin()).abs() < 1e-12);
        }
        let (f0, f1, dur) = (1.0, 100.0, 20.0);
        let s = gen_sweep(f0, f1, dur, 5000.0).unwrap();
        let crossings = s
            .samples()
            .windows(2)
            .filter(|w| (w[0] < 0.0) != (w[1] < 0.0))
            .count() as f64;
        let expected = dur * (f0 + f1);
        assert!((crossings - expected).abs() < 0.01 * expected, "{crossings}");
        for preset in [SweepPreset::Pulse, SweepPreset::Speech, SweepPreset::Vibration] {
            let (a, b) = preset.range_hz();
            assert!(gen_sweep(a, b, 1.0, 1000.0).is_ok());
        }
        assert!(gen_sweep(1.0, 600.0, 1.0, 1000.0).is_err());
    }
}
