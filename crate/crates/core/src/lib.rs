pub mod distribution;
pub mod error;
pub mod experiment;
pub mod image;
pub mod imaging;
pub mod io;
pub mod metrics;
pub mod par;
pub mod score;
pub mod special;
pub mod window;

pub use error::{Error, Result};
