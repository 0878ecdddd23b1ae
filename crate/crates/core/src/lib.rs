pub mod error;
pub mod config;
pub mod hierarchy;
pub mod io;
pub mod observables;
pub mod oracle;
pub mod polefit;
pub mod spectrum;
pub mod verify;

pub use error::{Error, Result};
