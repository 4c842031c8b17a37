pub mod bcd;
pub mod channels;
pub mod error;
pub mod feasibility;
pub mod harness;
pub mod linalg;
pub mod problem;
pub mod sca;
pub mod scd;
pub mod serde_cx;
pub mod sta;
pub mod stats;

pub use error::{Error, Result};
