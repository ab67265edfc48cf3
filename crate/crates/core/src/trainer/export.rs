use serde::{Deserialize, Serialize};

use super::bptt::{Network, SampleResult};
use crate::error::Result;
use crate::lattice::{
    choose_scaling, mech_to_circuit, quantize_eseries, CircuitParams, ESeries, LatticeSpec, MechanicalParams,
    Quantization, ScalingFactor,
};
use crate::signals::LabeledSignal;
use crate::simulator::{assemble, assemble_mechanical};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Evaluation {
    pub loss: f64,
    pub accuracy: f64,
    /// `confusion[true][predicted]`; undecidable samples are not counted.
    pub confusion: Vec<Vec<usize>>,
    pub samples: Vec<SampleResult>,
}

/// Forward pass over `samples` with accuracy and confusion matrix.
pub fn evaluate(net: &Network, samples: &[&LabeledSignal], prob_epsilon: f64) -> Result<Evaluation> {
    let r = net.forward(samples, prob_epsilon)?;
    let k = net.system().output_dofs().len();
    let mut confusion = vec![vec![0; k]; k];
    for s in &r.samples {
        if let Some(p) = s.predicted {
            confusion[s.label][p] += 1;
        }
    }
    let correct = r.samples.iter().filter(|s| s.correct()).count();
    Ok(Evaluation {
        loss: r.loss,
        accuracy: correct as f64 / r.samples.len() as f64,
        confusion,
        samples: r.samples,
    })
}

/// Circuit realization of a trained network and its held-out accuracy at
/// each stage of the conversion.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExportReport {
    pub scaling: ScalingFactor,
    pub circuit: CircuitParams,
    pub quantization: Quantization,
    pub dt: f64,
    pub accuracy_mechanical: f64,
    pub accuracy_circuit: f64,
    pub accuracy_quantized: f64,
}

/// Scales the trained stiffnesses so the resistances centre on `r_target`,
/// converts to circuit values, snaps every resistor to `series`, and
/// re-evaluates all three networks on `held_out` at step `dt`.
pub fn export_trained(
    spec: &LatticeSpec,
    mech: &MechanicalParams,
    r_target: f64,
    series: ESeries,
    dt: f64,
    held_out: &[&LabeledSignal],
    prob_epsilon: f64,
) -> Result<ExportReport> {
    let scaling = choose_scaling(mech, r_target)?;
    let circuit = mech_to_circuit(mech, scaling)?;
    let quantization = quantize_eseries(&circuit, series)?;
    let accuracy = |net: Network| evaluate(&net, held_out, prob_epsilon).map(|e| e.accuracy);
    let accuracy_mechanical = accuracy(Network::new(spec, assemble_mechanical(spec, mech)?, dt)?)?;
    let accuracy_circuit = accuracy(Network::new(spec, assemble(spec, &circuit)?, dt)?)?;
    let accuracy_quantized = accuracy(Network::new(spec, assemble(spec, &quantization.params)?, dt)?)?;
    Ok(ExportReport {
        scaling,
        circuit,
        quantization,
        dt,
        accuracy_mechanical,
        accuracy_circuit,
        accuracy_quantized,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lattice::{DEFAULT_INNER_MASS, DEFAULT_OUTER_MASS};
    use crate::signals::{gen_dataset, DatasetSpec, Split};
    use crate::trainer::{auto_dt, init_params, InitConfig};

    #[test]
    fn export_preserves_predictions() {
        let spec = LatticeSpec::default_5x5();
        let mut ds_spec = DatasetSpec::three_class(4);
        for c in &mut ds_spec.classes {
            c.count = 1;
        }
        ds_spec.test_count = 4;
        let ds = gen_dataset(&ds_spec).unwrap();
        let test = ds.split(Split::Test);
        let mech = init_params(&spec, DEFAULT_OUTER_MASS, DEFAULT_INNER_MASS, &InitConfig::default(), 1).unwrap();
        let dt = auto_dt(&assemble_mechanical(&spec, &mech).unwrap(), 1.0 / ds.rate);
        let report = export_trained(&spec, &mech, 1e6, ESeries::E96, dt, &test, 1e-12).unwrap();
        assert_eq!(report.accuracy_circuit, report.accuracy_mechanical);
        let geo = report
            .circuit
            .resistances()
            .map(f64::ln)
            .sum::<f64>()
            / (spec.n_cells() + spec.n_edges()) as f64;
        assert!((geo.exp() / 1e6 - 1.0).abs() < 1e-9);
        assert!(report.quantization.max_rel_error <= 0.0149);

        let mech_net = Network::new(&spec, assemble_mechanical(&spec, &mech).unwrap(), dt).unwrap();
        let circ_net = Network::new(&spec, assemble(&spec, &report.circuit).unwrap(), dt).unwrap();
        let a = evaluate(&mech_net, &test, 1e-12).unwrap();
        let b = evaluate(&circ_net, &test, 1e-12).unwrap();
        for (x, y) in a.samples.iter().zip(&b.samples) {
            assert_eq!(x.predicted, y.predicted);
            for (p, q) in x.probabilities.iter().zip(&y.probabilities) {
                assert!((p - q).abs() < 1e-10);
            }
        }
        let total: usize = a.confusion.iter().flatten().sum();
        assert_eq!(total, test.len());
    }
}
