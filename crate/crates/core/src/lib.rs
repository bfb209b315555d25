pub mod dynamics;
pub mod error;
pub mod fitting;
pub mod hilbert;
pub mod meanfield;
pub mod model;
pub mod ode;
pub mod sparse;
pub mod spectroscopy;
pub mod spectrum;

pub use error::{Error, Result};
pub const VERSION: &str = env!("CARGO_PKG_VERSION");
