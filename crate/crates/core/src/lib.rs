//! Design-space exploration for mapping layered spiking and artificial
//! neural networks onto multicore mesh neuromorphic hardware.

pub mod analytics;
pub mod cli;
pub mod fidelity;
pub mod mesh;
pub mod optimize;
pub mod partition;
pub mod sim;
pub mod workload;
