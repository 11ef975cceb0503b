pub mod bias;
pub mod class;
pub mod ensemble;
pub mod error;
pub mod io;
pub mod loss;
pub mod mixture;
pub mod parallel;
pub mod quadrature;
pub mod rng;
pub mod special;
pub mod spectral;
pub mod theory;

pub use class::Class;
pub use error::{Error, Result};
pub use parallel::Execution;
