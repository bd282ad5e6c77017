pub mod bounds;
pub mod cdag;
pub mod digit;
pub mod error;
pub mod experiment;
pub mod memsim;
pub mod parsim;
pub mod plan;
pub mod toom;
pub mod trace;

pub use digit::DigitString;
pub use error::{Error, Result};
pub use plan::InstructionTree;
