//! Ground-state cooling of a weakly damped target through a controllable
//! auxiliary system: operators, master-equation dynamics, closed-form
//! limits and a constrained protocol optimizer.

pub mod bfgs;
pub mod cli;
pub mod dynamics;
pub mod error;
pub mod limits;
pub mod linalg;
pub mod operators;
pub mod optimizer;
pub mod protocol;

pub use error::{Error, Result};
