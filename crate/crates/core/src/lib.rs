//! Solver and verifier for systems of parabolic equations with interconnected
//! obstacles (optimal switching) under Neumann boundary conditions.

pub mod assumptions;
pub mod barriers;
pub mod config;
pub mod domain;
pub mod error;
pub mod field;
pub mod fixtures;
pub mod grid;
pub mod probe;
pub mod scheme;
pub mod verify;
pub mod problem;
pub mod report;

pub use config::{parse_config, ProblemConfig};
pub use domain::Domain;
pub use error::{Error, Result};
pub use field::Field;
pub use grid::{GridFunction, SpaceTimeGrid};
pub use probe::DerivativeProbe;
pub use problem::{
    BoundaryData, CostBounds, HjbOperator, InitialData, ModeOperator, OpaqueOperator, OperatorSpec,
    ProblemSpec, SwitchingCosts,
};
