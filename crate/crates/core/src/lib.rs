pub mod config;
pub mod demag;
pub mod drivers;
pub mod error;
pub mod grid;
pub mod io;
pub mod llg;
pub mod presets;
pub mod spin;
pub mod validate;
pub mod vec3;

pub use error::{Error, Result};
