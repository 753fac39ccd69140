//! Numerical toolkit for gradient-field ("Stark") quantum probes.
//!
//! A chain of `L` sites with hopping `J`, optional XXZ anisotropy `Delta` and
//! a linear potential `h * sum_l l n_l` is diagonalised exactly in a fixed
//! excitation sector. From the spectrum the crate evolves states, takes the
//! exact derivative with respect to `h`, and turns that into quantum and
//! classical Fisher information. Around that core sit a dephasing master
//! equation, power-law fits for the size and excitation exponents, and a
//! grid maximum-likelihood estimator for `h`.
//!
//! Energies are in units of `J`, times in `1/J`.

// `!(x > 0.0)` is used on purpose: it also rejects NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod basis;
pub mod dynamics;
pub mod error;
pub mod estimation;
pub mod fisher;
pub mod hamiltonian;
pub mod open_dynamics;
pub mod probe;
pub mod scaling;

pub use faer;
pub use num_complex;

pub use basis::{Configuration, InitialState, LatticeSpec, SectorBasis};
pub use dynamics::{ParametricEvolution, QuantumState, SpectralDecomposition};
pub use error::{Error, Result};
pub use fisher::{FisherPoint, LongTimeFisher, LongTimeWindow, ProbabilityVector};
pub use hamiltonian::{GradientGenerator, HamiltonianMatrix, MemoryBudget, Sector};
pub use open_dynamics::{DensityMatrix, DephasingForm, DephasingSpec};
pub use probe::{ProbeSpec, StarkProbe};
pub use scaling::{ScalingFit, TransitionEstimate};
pub use estimation::{EstimateResult, LikelihoodGrid, MeasurementRecord};

/// Shortest round-trip rendering of a float, with an exponent for very
/// large or small magnitudes. Integral values drop the trailing `.0`.
/// Used by every CSV writer.
pub fn csv_float(x: f64) -> String {
    let s = format!("{x:?}");
    match s.strip_suffix(".0") {
        Some(head) => head.to_string(),
        None => s,
    }
}
