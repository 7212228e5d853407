pub mod bounds;
pub mod error;
pub mod gaussian;
pub mod io;
pub mod learners;
pub mod pipeline;
pub mod subset;

pub use error::{Error, Result};
