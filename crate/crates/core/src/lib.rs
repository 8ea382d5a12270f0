pub mod cli;
pub mod error;
pub mod harness;
pub mod ergodicity;
pub mod io;
pub mod operators;
pub mod perturbation;
pub mod seeds;
pub mod spaces;

pub use error::{Error, Result};
pub use spaces::{Element, SpaceDescriptor};
pub use operators::MarkovOperator;
