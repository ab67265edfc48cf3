//! Signals: the sampled waveform type, synthetic datasets, CSV ingestion,
//! STFT and the virtual swept-sine measurement.

mod dataset;
mod io;
mod spectral;
mod synth;

pub use dataset::{
    gen_dataset, load_dataset, write_dataset, ClassSpec, Dataset, DatasetSpec, LabeledSignal,
    Manifest, ManifestEntry, Split, MANIFEST_NAME,
};
pub use io::{load_csv, write_csv};
pub use spectral::{
    hann, measure_transfer, measurement_frequency, stft, Spectrogram, SweepMeasurement,
    TransferPoint,
};
pub use synth::{add_noise, gen_pulse, gen_sweep, sweep_frequency, Pulse, SweepPreset};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Uniformly sampled real waveform.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Signal {
    rate: f64,
    samples: Vec<f64>,
}

impl Signal {
    pub fn new(rate: f64, samples: Vec<f64>) -> Result<Self> {
        if !(rate.is_finite() && rate > 0.0) {
            return Err(Error::invalid(format!("sample rate must be positive, got {rate}")));
        }
        if let Some(i) = samples.iter().position(|x| !x.is_finite()) {
            return Err(Error::invalid(format!("sample {i} is not finite")));
        }
        Ok(Self { rate, samples })
    }

    pub fn zeros(rate: f64, len: usize) -> Result<Self> {
        Self::new(rate, vec![0.0; len])
    }

    pub fn rate(&self) -> f64 {
        self.rate
    }

    pub fn dt(&self) -> f64 {
        1.0 / self.rate
    }

    pub fn samples(&self) -> &[f64] {
        &self.samples
    }

    pub fn into_samples(self) -> Vec<f64> {
        self.samples
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn duration(&self) -> f64 {
        self.samples.len() as f64 / self.rate
    }

    /// Mean square value.
    pub fn power(&self) -> f64 {
        if self.samples.is_empty() {
            return 0.0;
        }
        self.samples.iter().map(|x| x * x).sum::<f64>() / self.samples.len() as f64
    }

    pub fn scaled(&self, a: f64) -> Self {
        Self {
            rate: self.rate,
            samples: self.samples.iter().map(|x| a * x).collect(),
        }
    }

    /// Repeats every sample `factor` times (zero-order hold), multiplying
    /// the rate by `factor`.
    pub fn hold_upsample(&self, factor: usize) -> Result<Self> {
        if factor == 0 {
            return Err(Error::invalid("upsampling factor must be at least 1"));
        }
        let samples = self
            .samples
            .iter()
            .flat_map(|&x| std::iter::repeat_n(x, factor))
            .collect();
        Ok(Self {
            rate: self.rate * factor as f64,
            samples,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rejects_bad_input() {
        assert!(Signal::new(0.0, vec![1.0]).is_err());
        assert!(Signal::new(10.0, vec![f64::NAN]).is_err());
    }

    #[test]
    fn hold_upsample_repeats() {
        let s = Signal::new(10.0, vec![1.0, 2.0]).unwrap();
        let u = s.hold_upsample(3).unwrap();
        assert_eq!(u.rate(), 30.0);
        assert_eq!(u.samples(), &[1.0, 1.0, 1.0, 2.0, 2.0, 2.0]);
    }
}
