use serde::{Deserialize, Serialize};

use super::CircuitParams;
use crate::error::Result;

/// E24 mantissas × 10.
const E24: [u32; 24] = [
    10, 11, 12, 13, 15, 16, 18, 20, 22, 24, 27, 30, 33, 36, 39, 43, 47, 51, 56, 62, 68, 75, 82, 91,
];

/// E96 mantissas × 100.
const E96: [u32; 96] = [
    100, 102, 105, 107, 110, 113, 115, 118, 121, 124, 127, 130, 133, 137, 140, 143, 147, 150, 154,
    158, 162, 165, 169, 174, 178, 182, 187, 191, 196, 200, 205, 210, 215, 221, 226, 232, 237, 243,
    249, 255, 261, 267, 274, 280, 287, 294, 301, 309, 316, 324, 332, 340, 348, 357, 365, 374, 383,
    392, 402, 412, 422, 432, 442, 453, 464, 475, 487, 499, 511, 523, 536, 549, 562, 576, 590, 604,
    619, 634, 649, 665, 681, 698, 715, 732, 750, 768, 787, 806, 825, 845, 866, 887, 909, 931, 953,
    976,
];

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ESeries {
    E24,
    E96,
}

impl ESeries {
    fn table(self) -> (&'static [u32], i32) {
        match self {
            ESeries::E24 => (&E24, 1),
            ESeries::E96 => (&E96, 2),
        }
    }

    /// Ratio between neighbouring grid values that bracket `value`.
    pub fn local_step(self, value: f64) -> f64 {
        let (lo, hi) = self.bracket(value);
        hi / lo
    }

    fn grid_value(mantissa: u32, decade: i32, digits: i32) -> f64 {
        let exp = decade - digits;
        if exp >= 0 {
            mantissa as f64 * 10f64.powi(exp)
        } else {
            mantissa as f64 / 10f64.powi(-exp)
        }
    }

    /// Largest grid value ≤ `value` and smallest grid value > it.
    fn bracket(self, value: f64) -> (f64, f64) {
        let (table, digits) = self.table();
        let decade = value.log10().floor() as i32;
        let mut candidates: Vec<f64> = (decade - 1..=decade + 1)
            .flat_map(|d| table.iter().map(move |&m| Self::grid_value(m, d, digits)))
            .collect();
        candidates.sort_by(f64::total_cmp);
        let idx = candidates.partition_point(|&c| c <= value);
        (candidates[idx - 1], candidates[idx])
    }

    /// Nearest grid value in relative terms.
    pub fn nearest(self, value: f64) -> f64 {
        let (lo, hi) = self.bracket(value);
        if (value - lo) <= (hi - value) {
            lo
        } else {
            hi
        }
    }
}

/// Which resistor a quantized value belongs to.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", content = "index", rename_all = "snake_case")]
pub enum ResistorSlot {
    /// R_n of a cell.
    Internal(usize),
    /// R_c of an edge.
    Coupling(usize),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct QuantizedValue {
    pub slot: ResistorSlot,
    pub original: f64,
    pub quantized: f64,
    pub rel_error: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Quantization {
    pub series: ESeries,
    pub params: CircuitParams,
    pub max_rel_error: f64,
    /// Every resistor whose value moved.
    pub changes: Vec<QuantizedValue>,
}

pub fn quantize_value(value: f64, series: ESeries) -> (f64, f64) {
    let q = series.nearest(value);
    (q, (q - value).abs() / value)
}

/// Snaps every resistance to the nearest standard value; FDNR values are
/// left unchanged.
pub fn quantize_eseries(circ: &CircuitParams, series: ESeries) -> Result<Quantization> {
    circ.validate()?;
    let mut params = circ.clone();
    let mut changes = Vec::new();
    let mut max_rel_error = 0.0f64;
    let slots = params
        .r_internal
        .iter_mut()
        .enumerate()
        .map(|(i, r)| (ResistorSlot::Internal(i), r))
        .chain(
            params
                .r_coupling
                .iter_mut()
                .enumerate()
                .map(|(i, r)| (ResistorSlot::Coupling(i), r)),
        );
    for (slot, r) in slots {
        let original = *r;
        let (quantized, rel_error) = quantize_value(original, series);
        max_rel_error = max_rel_error.max(rel_error);
        if quantized != original {
            changes.push(QuantizedValue {
                slot,
                original,
                quantized,
                rel_error,
            });
        }
        *r = quantized;
    }
    Ok(Quantization {
        series,
        params,
        max_rel_error,
        changes,
    })
}
