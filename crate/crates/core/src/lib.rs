pub mod carleman3d;
pub mod error;
pub mod forward2d;
pub mod needle2d;
pub mod probe;
pub mod quadrature;
pub mod special;
pub mod vekua;

pub use error::{ProbeError, Result};
