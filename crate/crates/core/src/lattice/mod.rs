//! Lattice topology, parameter sets and the mechanical/electrical mapping.
//!
//! A lattice is a `rows × cols` grid of local-resonator unit cells with
//! 4-neighbour coupling. Grounded cells are pinned to zero and carry no
//! degrees of freedom; a coupling into a grounded cell acts as a grounding
//! branch for its neighbour.

mod document;
mod eseries;
mod params;

pub use document::{resistor_ref, CellDoc, Component, ComponentKind, EdgeDoc, LatticeDocument};
pub use eseries::{
    quantize_eseries, quantize_value, ESeries, Quantization, QuantizedValue, ResistorSlot,
};
pub use params::{
    choose_scaling, circuit_to_mech, mech_to_circuit, CircuitParams, MechanicalParams,
    ScalingFactor, DEFAULT_INNER_MASS, DEFAULT_OUTER_MASS,
};

use std::collections::{BTreeSet, VecDeque};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Grid topology with grounded cells, one input cell and ordered output cells.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "RawSpec", into = "RawSpec")]
pub struct LatticeSpec {
    rows: usize,
    cols: usize,
    grounded: BTreeSet<usize>,
    input: usize,
    outputs: Vec<usize>,
    edges: Vec<(usize, usize)>,
}

#[derive(Serialize, Deserialize)]
struct RawSpec {
    rows: usize,
    cols: usize,
    grounded: Vec<usize>,
    input: usize,
    outputs: Vec<usize>,
}

impl TryFrom<RawSpec> for LatticeSpec {
    type Error = Error;

    fn try_from(raw: RawSpec) -> Result<Self> {
        LatticeSpec::new(raw.rows, raw.cols, raw.grounded, raw.input, raw.outputs)
    }
}

impl From<LatticeSpec> for RawSpec {
    fn from(spec: LatticeSpec) -> Self {
        RawSpec {
            rows: spec.rows,
            cols: spec.cols,
            grounded: spec.grounded.into_iter().collect(),
            input: spec.input,
            outputs: spec.outputs,
        }
    }
}

impl LatticeSpec {
    pub fn new(
        rows: usize,
        cols: usize,
        grounded: impl IntoIterator<Item = usize>,
        input: usize,
        outputs: Vec<usize>,
    ) -> Result<Self> {
        if rows == 0 || cols == 0 {
            return Err(Error::InvalidLattice("empty grid".into()));
        }
        let n = rows * cols;
        let grounded: BTreeSet<usize> = grounded.into_iter().collect();
        if let Some(&g) = grounded.iter().find(|&&g| g >= n) {
            return Err(Error::InvalidLattice(format!("grounded cell {g} is off the grid")));
        }
        if input >= n {
            return Err(Error::InvalidLattice(format!("input cell {input} is off the grid")));
        }
        if grounded.contains(&input) {
            return Err(Error::InvalidLattice(format!("input cell {input} is grounded")));
        }
        if outputs.is_empty() {
            return Err(Error::InvalidLattice("no output cells".into()));
        }
        let mut seen = BTreeSet::new();
        for &o in &outputs {
            if o >= n {
                return Err(Error::InvalidLattice(format!("output cell {o} is off the grid")));
            }
            if grounded.contains(&o) {
                return Err(Error::InvalidLattice(format!("output cell {o} is grounded")));
            }
            if o == input {
                return Err(Error::InvalidLattice(format!("output cell {o} is the input cell")));
            }
            if !seen.insert(o) {
                return Err(Error::InvalidLattice(format!("output cell {o} listed twice")));
            }
        }
        let mut edges = Vec::new();
        for r in 0..rows {
            for c in 0..cols {
                let idx = r * cols + c;
                if c + 1 < cols {
                    edges.push((idx, idx + 1));
                }
                if r + 1 < rows {
                    edges.push((idx, idx + cols));
                }
            }
        }
        Ok(Self {
            rows,
            cols,
            grounded,
            input,
            outputs,
            edges,
        })
    }

    /// Grid with the four corner cells grounded.
    pub fn with_grounded_corners(
        rows: usize,
        cols: usize,
        input: usize,
        outputs: Vec<usize>,
    ) -> Result<Self> {
        let corners = [0, cols - 1, (rows - 1) * cols, rows * cols - 1];
        Self::new(rows, cols, corners, input, outputs)
    }

    /// 5×5 grid, corners grounded, input at the middle of the top edge and
    /// three outputs along the bottom edge.
    pub fn default_5x5() -> Self {
        Self::with_grounded_corners(5, 5, 2, vec![21, 22, 23]).expect("default lattice is valid")
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn n_cells(&self) -> usize {
        self.rows * self.cols
    }

    pub fn grounded(&self) -> &BTreeSet<usize> {
        &self.grounded
    }

    pub fn is_grounded(&self, cell: usize) -> bool {
        self.grounded.contains(&cell)
    }

    pub fn input(&self) -> usize {
        self.input
    }

    pub fn outputs(&self) -> &[usize] {
        &self.outputs
    }

    /// Each 4-neighbour adjacent pair `(a, b)` with `a < b`, exactly once.
    pub fn edges(&self) -> &[(usize, usize)] {
        &self.edges
    }

    pub fn n_edges(&self) -> usize {
        self.edges.len()
    }

    /// Non-grounded cells in index order.
    pub fn active_cells(&self) -> impl Iterator<Item = usize> + '_ {
        (0..self.n_cells()).filter(move |c| !self.grounded.contains(c))
    }

    pub fn n_active(&self) -> usize {
        self.n_cells() - self.grounded.len()
    }

    pub fn row_col(&self, cell: usize) -> (usize, usize) {
        (cell / self.cols, cell % self.cols)
    }

    /// Active cells reachable from `from` without passing through ground.
    pub fn reachable_from(&self, from: usize) -> BTreeSet<usize> {
        let mut seen = BTreeSet::new();
        if self.is_grounded(from) {
            return seen;
        }
        let mut queue = VecDeque::from([from]);
        seen.insert(from);
        while let Some(cell) = queue.pop_front() {
            for &(a, b) in &self.edges {
                let other = if a == cell {
                    b
                } else if b == cell {
                    a
                } else {
                    continue;
                };
                if !self.is_grounded(other) && seen.insert(other) {
                    queue.push_back(other);
                }
            }
        }
        seen
    }
}

impl Default for LatticeSpec {
    fn default() -> Self {
        Self::default_5x5()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_lattice_shape() {
        let spec = LatticeSpec::default_5x5();
        assert_eq!(spec.n_cells(), 25);
        assert_eq!(spec.n_active(), 21);
        assert_eq!(
            spec.grounded().iter().copied().collect::<Vec<_>>(),
            vec![0, 4, 20, 24]
        );
        // 2 * 5 * 4 horizontal + vertical pairs
        assert_eq!(spec.n_edges(), 40);
    }

    #[test]
    fn edges_are_unique_neighbours() {
        let spec = LatticeSpec::new(3, 4, [], 0, vec![11]).unwrap();
        let set: BTreeSet<_> = spec.edges().iter().copied().collect();
        assert_eq!(set.len(), spec.n_edges());
        for &(a, b) in spec.edges() {
            assert!(a < b);
            let (ra, ca) = spec.row_col(a);
            let (rb, cb) = spec.row_col(b);
            assert_eq!(ra.abs_diff(rb) + ca.abs_diff(cb), 1);
        }
        assert_eq!(spec.n_edges(), 3 * 3 + 2 * 4);
    }

    #[test]
    fn rejects_bad_layouts() {
        assert!(LatticeSpec::new(5, 5, [0, 4], 0, vec![1]).is_err());
        assert!(LatticeSpec::new(5, 5, [0, 4], 2, vec![4]).is_err());
        assert!(LatticeSpec::new(5, 5, [0, 4], 2, vec![2]).is_err());
        assert!(LatticeSpec::new(5, 5, [30], 2, vec![3]).is_err());
        assert!(LatticeSpec::new(5, 5, [], 2, vec![]).is_err());
        assert!(LatticeSpec::new(5, 5, [], 2, vec![3, 3]).is_err());
    }

    #[test]
    fn grounding_can_disconnect() {
        // 1x3 with the middle grounded splits the chain
        let spec = LatticeSpec::new(1, 3, [1], 0, vec![2]).unwrap();
        assert!(!spec.reachable_from(0).contains(&2));
        let spec = LatticeSpec::default_5x5();
        let reach = spec.reachable_from(spec.input());
        assert_eq!(reach.len(), 21);
    }

    #[test]
    fn spec_json_round_trip() {
        let spec = LatticeSpec::default_5x5();
        let text = serde_json::to_string(&spec).unwrap();
        assert!(text.contains("\"grounded\":[0,4,20,24]"));
        let back: LatticeSpec = serde_json::from_str(&text).unwrap();
        assert_eq!(back, spec);
        let bad = r#"{"rows":5,"cols":5,"grounded":[2],"input":2,"outputs":[21]}"#;
        assert!(serde_json::from_str::<LatticeSpec>(bad).is_err());
    }
}
