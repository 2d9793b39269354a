pub mod basis;
pub mod error;
pub mod families;
pub mod dropout;
pub mod fixtures;
pub mod model;
pub mod optim;
pub mod pmle;
pub mod rng;
pub mod scalar;
pub mod simlab;
pub mod tuning;

pub use error::{Error, Result};
pub use families::FamilyKernel;

pub type GlmSpec = model::GlmSpec<f64>;
pub type SplineBasis = basis::SplineBasis<f64>;
pub type DefParams = families::DefParams<f64>;
