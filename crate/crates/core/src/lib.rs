//! Bell-CGLMP tests for bipartite qudits of dimension `d = 2^N` assembled
//! from `N` entangled qubit pairs.
//!
//! - [`qstate`]: kets, density operators, the N-pair maximally entangled
//!   state and Werner noise.
//! - [`measurements`]: CGLMP eigenbases, their per-qubit product form and
//!   wave-plate angles.
//! - [`bell`]: joint tables, `I_d`, and the local-realistic maximum.
//! - [`witness`]: fidelity-based Schmidt-number lower bounds.
//! - [`experiment`]: photon-counting Monte Carlo, tomography and
//!   reconstruction.

pub mod bell;
pub mod error;
pub mod experiment;
pub mod measurements;
pub mod qstate;
pub mod witness;

pub use error::{Error, Result};
