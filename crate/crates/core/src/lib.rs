pub mod error;
pub mod evaluate;
pub mod gibbs;
pub mod matrixdist;
pub mod model;
pub mod predict;
pub mod svsampler;
pub mod wishartsampler;

pub use error::{Error, Result};
