//! Resonant recurrent neural networks built from coupled FDNR local
//! resonators.
//!
//! The crate covers the whole pipeline: lattice topology and the
//! mechanical/electrical parameter mapping ([`lattice`]), closed-form
//! single-cell analytics ([`unitcell`]), time-domain simulation
//! ([`simulator`]), harmonic nodal analysis ([`acsolver`]), training by
//! backpropagation through time ([`trainer`]), and signal generation and
//! measurement ([`signals`]).

pub mod acsolver;
pub mod error;
pub mod lattice;
pub mod signals;
pub mod simulator;
pub mod trainer;
pub mod unitcell;

pub use error::{Error, Result};
