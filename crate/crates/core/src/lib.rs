pub mod aging;
pub mod downlink;
pub mod energy;
pub mod error;
pub mod harness;
pub mod estimation;
pub mod linalg;
pub mod model;
pub mod montecarlo;
pub mod rng;
pub mod scenario;
pub mod special;
pub mod uplink;

pub use error::{Error, Result};
