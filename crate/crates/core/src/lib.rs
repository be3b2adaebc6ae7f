//! Stability analysis of single-inverter, infinite-bus systems.

pub mod bifurcation;
pub mod equilibrium;
pub mod error;
pub mod inverter;
pub mod line;
pub mod linalg;
pub mod model;
pub mod report;
pub mod scenario;
pub mod sensitivity;
pub mod space;

pub use error::{Error, Result};
