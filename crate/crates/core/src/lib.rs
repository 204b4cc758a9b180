//! Recursive dynamic compressed sensing: static and prior-aided sparse
//! recovery, recursive wrappers for sequences, parameter tuning from error
//! bounds, theory checkers, simulators and experiment harnesses.

pub mod dynamic;
pub mod error;
pub mod experiments;
pub mod linalg;
pub mod operators;
pub mod simulation;
pub mod solvers;
pub mod support;
pub mod tuning;

pub use error::{Error, Result};
pub use nalgebra::{DMatrix, DVector};
pub use operators::{MeasurementOperator, RipReport, SupportSet};
pub use solvers::{PriorKnowledge, Problem, SolverOptions, SolverResult, Status};

