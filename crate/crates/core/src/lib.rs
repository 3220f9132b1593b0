pub mod error;
pub mod grid;
pub mod io;
pub mod loss;
pub mod metrics;
pub mod nms;
pub mod star;
pub mod synth;

pub use error::{Error, Result};
