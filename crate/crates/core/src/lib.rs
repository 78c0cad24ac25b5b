//! Nonlinear consensus + innovations distributed estimation under
//! heavy-tailed noise: simulation, asymptotic covariance and topology sweeps.

pub mod asymptotics;
pub mod error;
pub mod estimator;
pub mod graph;
pub mod lyapunov;
pub mod noise;
pub mod nonlinearity;
pub mod cli;
pub mod config;
mod quad;

pub use error::{Error, Result};
pub use graph::Graph;
pub use noise::NoiseModel;
pub use nonlinearity::Nonlinearity;
