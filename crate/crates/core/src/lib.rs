//! Capacity and queue-length analysis of a minor road at an unsignalized
//! priority intersection with impatient, heterogeneous drivers.

pub mod cli;
pub mod equilibrium;
pub mod error;
mod factor;
pub mod kernel;
pub mod model;
pub mod queuelen;
pub mod saturation;
pub mod scalar;
pub mod sim;
