//! Neural-collapse laboratory: deep networks ending in a linear head, trained
//! by full-batch gradient descent with weight decay, together with the
//! collapse metrics and evaluators for the accompanying theoretical bounds.

pub mod bounds;
pub mod data;
pub mod densemat;
pub mod error;
pub mod metrics;
pub mod network;
pub mod ntk;
pub mod par;
pub mod trainer;
pub mod verify;

pub use densemat::Matrix;
pub use error::{Error, Result};
