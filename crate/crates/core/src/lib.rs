//! Numerical tools for quasicentral moduli and condenser capacities of
//! operator tuples.

pub mod error;
pub mod linalg;
pub mod norms;
pub mod operator;
pub mod solver;
pub mod cayley;
pub mod plaplace;
pub mod experiments;
pub mod io;

pub use error::{Error, Result};
