//! Positive-density Hartree and Vlasov dynamics on a periodic box.
//!
//! The crate is organised bottom-up: [`entropy`] and [`grid`] supply the
//! scalar and lattice plumbing, [`hartree`] and [`vlasov`] evolve quantum and
//! classical states around their translation-invariant references,
//! [`phase_space`] maps between them, and [`inequality`], [`transport`] and
//! [`experiment`] turn the functional inequalities and convergence statements
//! into executable checks.

pub mod entropy;
pub mod error;
pub mod experiment;
pub mod grid;
pub mod hartree;
pub mod inequality;
pub mod io;
pub mod phase_space;
pub mod quad;
pub mod transport;
pub mod vlasov;

pub use error::{Error, Result};
