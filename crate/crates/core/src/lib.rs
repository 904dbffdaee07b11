pub mod bounds;
pub mod cli;
pub mod data;
pub mod dpwide;
pub mod estimators;
pub mod intervals;
pub mod sim;
pub mod error;
pub mod slopes;

pub use data::{DataPoint, Dataset};
pub use error::{Error, Result};
