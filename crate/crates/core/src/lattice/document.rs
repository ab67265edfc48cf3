use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{CircuitParams, LatticeSpec, ResistorSlot, ScalingFactor};
use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CellDoc {
    #[serde(rename = "D_M")]
    pub d_outer: f64,
    #[serde(rename = "D_m")]
    pub d_inner: f64,
    #[serde(rename = "R_n")]
    pub r_internal: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EdgeDoc {
    pub a: usize,
    pub b: usize,
    #[serde(rename = "R_c")]
    pub r_coupling: f64,
}

/// On-disk form of a circuit lattice:
/// `{spec, cells:[{D_M,D_m,R_n}], edges:[{a,b,R_c}], scaling}`.
///
/// `dt` is an optional recommended simulation step (s); trained networks
/// carry the step they were trained with so that re-simulation reproduces
/// the trained dynamics exactly.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LatticeDocument {
    pub spec: LatticeSpec,
    pub cells: Vec<CellDoc>,
    pub edges: Vec<EdgeDoc>,
    pub scaling: ScalingFactor,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dt: Option<f64>,
}

impl LatticeDocument {
    pub fn new(spec: &LatticeSpec, circ: &CircuitParams, scaling: ScalingFactor) -> Result<Self> {
        circ.validate_for(spec)?;
        let cells = (0..spec.n_cells())
            .map(|i| CellDoc {
                d_outer: circ.d_outer[i],
                d_inner: circ.d_inner[i],
                r_internal: circ.r_internal[i],
            })
            .collect();
        let edges = spec
            .edges()
            .iter()
            .zip(&circ.r_coupling)
            .map(|(&(a, b), &r)| EdgeDoc { a, b, r_coupling: r })
            .collect();
        Ok(Self {
            spec: spec.clone(),
            cells,
            edges,
            scaling,
            dt: None,
        })
    }

    pub fn with_dt(mut self, dt: Option<f64>) -> Self {
        self.dt = dt;
        self
    }

    /// Checks the edge list against the grid and returns the parameter set.
    pub fn circuit(&self) -> Result<CircuitParams> {
        let spec = &self.spec;
        if self.cells.len() != spec.n_cells() {
            return Err(Error::InvalidLattice(format!(
                "document has {} cells, grid has {}",
                self.cells.len(),
                spec.n_cells()
            )));
        }
        if self.edges.len() != spec.n_edges() {
            return Err(Error::InvalidLattice(format!(
                "document has {} edges, grid has {}",
                self.edges.len(),
                spec.n_edges()
            )));
        }
        for (doc, &(a, b)) in self.edges.iter().zip(spec.edges()) {
            if (doc.a, doc.b) != (a, b) {
                return Err(Error::InvalidLattice(format!(
                    "edge ({}, {}) out of order, expected ({a}, {b})",
                    doc.a, doc.b
                )));
            }
        }
        if let Some(dt) = self.dt {
            if !(dt.is_finite() && dt > 0.0) {
                return Err(Error::invalid(format!("dt must be positive, got {dt}")));
            }
        }
        let circ = CircuitParams {
            d_outer: self.cells.iter().map(|c| c.d_outer).collect(),
            d_inner: self.cells.iter().map(|c| c.d_inner).collect(),
            r_internal: self.cells.iter().map(|c| c.r_internal).collect(),
            r_coupling: self.edges.iter().map(|e| e.r_coupling).collect(),
        };
        circ.validate()?;
        Ok(circ)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let doc: Self = serde_json::from_str(&text)?;
        doc.circuit()?;
        Ok(doc)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum ComponentKind {
    #[serde(rename = "FDNR")]
    Fdnr,
    #[serde(rename = "R")]
    Resistor,
}

/// One row of the flat component list `ref,kind,value,unit,node_a,node_b`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Component {
    #[serde(rename = "ref")]
    pub reference: String,
    pub kind: ComponentKind,
    pub value: f64,
    pub unit: String,
    pub node_a: String,
    pub node_b: String,
}

fn outer_node(spec: &LatticeSpec, cell: usize) -> String {
    if spec.is_grounded(cell) {
        "gnd".to_string()
    } else {
        format!("c{cell}o")
    }
}

/// Reference designator used for a resistor in netlists and reports.
pub fn resistor_ref(spec: &LatticeSpec, slot: ResistorSlot) -> String {
    match slot {
        ResistorSlot::Internal(cell) => format!("Rn{cell}"),
        ResistorSlot::Coupling(edge) => {
            let (a, b) = spec.edges()[edge];
            format!("Rc{a}_{b}")
        }
    }
}

impl Component {
    /// Realized components only: grounded cells contribute nothing, and
    /// couplings into them become grounding resistors.
    pub fn list(spec: &LatticeSpec, circ: &CircuitParams) -> Result<Vec<Component>> {
        circ.validate_for(spec)?;
        let mut out = Vec::new();
        for cell in spec.active_cells() {
            let o = format!("c{cell}o");
            let i = format!("c{cell}i");
            out.push(Component {
                reference: format!("DM{cell}"),
                kind: ComponentKind::Fdnr,
                value: circ.d_outer[cell],
                unit: "ohm_f2".into(),
                node_a: o.clone(),
                node_b: "gnd".into(),
            });
            out.push(Component {
                reference: format!("Dm{cell}"),
                kind: ComponentKind::Fdnr,
                value: circ.d_inner[cell],
                unit: "ohm_f2".into(),
                node_a: i.clone(),
                node_b: "gnd".into(),
            });
            out.push(Component {
                reference: resistor_ref(spec, ResistorSlot::Internal(cell)),
                kind: ComponentKind::Resistor,
                value: circ.r_internal[cell],
                unit: "ohm".into(),
                node_a: o,
                node_b: i,
            });
        }
        for (e, &(a, b)) in spec.edges().iter().enumerate() {
            if spec.is_grounded(a) && spec.is_grounded(b) {
                continue;
            }
            out.push(Component {
                reference: resistor_ref(spec, ResistorSlot::Coupling(e)),
                kind: ComponentKind::Resistor,
                value: circ.r_coupling[e],
                unit: "ohm".into(),
                node_a: outer_node(spec, a),
                node_b: outer_node(spec, b),
            });
        }
        Ok(out)
    }

    pub fn write_csv<W: Write>(components: &[Component], writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        for c in components {
            w.serialize(c)?;
        }
        w.flush().map_err(|e| Error::io("<csv>", e))?;
        Ok(())
    }
}
