pub mod energy;
pub mod error;
pub mod fieldio;
pub mod fit;
pub mod grid;
pub mod harness;
pub mod kgz;
pub mod propagator;
pub mod scattering;
pub mod vector_fields;

pub use error::{KgzError, Result};
