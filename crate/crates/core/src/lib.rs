pub mod cli;
pub mod config;
pub mod data;
pub mod estimators;
pub mod inference;
pub mod io;
pub mod error;
pub mod learners;
pub mod linalg;
pub mod methods;
pub mod link;
pub mod randomization;
pub mod rng;
pub mod scenario;
pub mod sim;
pub mod stats;
pub mod theory;

pub use error::{Error, Result};
