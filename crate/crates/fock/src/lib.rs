//! Exact reference dynamics for the bosonic many-body problem on a few
//! plane-wave modes with a total particle cutoff.
//!
//! States are prepared as `exp(-sqrt(N) A(phi)) exp(-B(k)) Omega`, evolved by
//! `exp(itH)`, and compared with the quasi-free state built from the mean-field
//! data through correlation tensors and the phase-optimal Fock distance.

pub mod basis;
pub mod conjugation;
pub mod error;
pub mod krylov;
pub mod marginal;
pub mod operator;
pub mod propagate;
pub mod space;
pub mod state;

pub use basis::{ModeBasis, OccupationBasis};
pub use conjugation::{verify_conjugation, ConjugationReport};
pub use error::{OracleError, Result};
pub use krylov::KrylovConfig;
pub use marginal::{marginal, mode_tensor};
pub use operator::SparseOperator;
pub use propagate::{
    coherent_displace, evolve_exact, expectation, fock_error, pair_rotate, pair_unrotate,
    quasi_free_state, squeezed_number_distribution, suggested_cutoff, PhaseDistance,
    PropagationConfig, Propagated,
};
pub use space::FockSpace;
pub use state::FockVector;
