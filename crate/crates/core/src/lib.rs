pub mod bonds;
pub mod config;
pub mod damage;
pub mod driver;
pub mod error;
pub mod mechanics;
pub mod mesh;
pub mod output;
pub mod sparse;
pub mod thermal;

pub use error::{Error, Result, SolverError};
