//! Iterative protein design on two-dimensional compact lattice models.
//!
//! The crate is `no_std` (with `alloc`) and contains only the algorithmic
//! pieces: conformation enumeration and contact maps, pairwise contact
//! energies and the approximate design score, the exhaustive fold oracle,
//! the fixed-composition QUBO encoding, the annealing solvers, perceptron
//! refinement of the energy matrix and ROC / success metrics.
//!
//! File formats, parallel drivers, the design loop and the command line live
//! in the companion `lattice-design` crate.
//!
//! Residue types are stored zero-based (`0..D`). Textual forms use the
//! conventional one-based labels `1..=D`, so type `0` here is "type 1" in
//! printed sequences and in the QUBO reduction, where it is the implied type
//! carried by an all-zero bit block.

#![no_std]

extern crate alloc;
#[cfg(test)]
extern crate std;

pub mod energy;
pub mod error;
pub mod fold_oracle;
pub mod lattice;
pub mod math;
pub mod metrics;
pub mod qubo;
pub mod refine;
pub mod sequence;
pub mod solvers;

pub use energy::{Composition, DeltaContactMap, DesignScore, EnergyMatrix, Sequence};
pub use error::{Error, Result};
pub use fold_oracle::{Census, FoldEngine, FoldResult, OracleConfig};
pub use lattice::{AverageContactMap, Conformation, ContactMap, Site};
pub use qubo::{QuboProblem, QuboWeights};
pub use refine::{EpsilonVector, LinearConstraint};
pub use sequence::SequenceSpace;
pub use solvers::{AnnealSchedule, SolverRun};
