//! Simulated experiments for graphsync.

pub mod experiments;
pub mod fit;
pub mod output;
pub mod scenario;
pub mod sim;
pub mod verify;
