pub mod criteria;
pub mod error;
pub mod exec;
pub mod hilbert;
pub mod inference;
pub mod oracles;
pub mod sampling;
pub mod states;

pub use error::{Error, Result};
