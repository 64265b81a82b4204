pub mod dataio;
pub mod dgcl;
pub mod diffcore;
pub mod error;
pub mod eval;
pub mod fam;
pub mod mpe;
pub mod params;
pub mod training;

pub use error::{Error, Result};
