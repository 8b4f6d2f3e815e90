//! Dissipative preparation of injective tensor-network states.
//!
//! Builds parent Hamiltonians, parent Lindbladians and discrete-time Kraus
//! channels for PEPS on bounded-degree graphs, evolves them densely or by
//! trajectories, and checks fixed points, gaps and local norm bounds.

pub mod dynamics;
pub mod experiments;
pub mod error;
pub mod generators;
pub mod gfamily;
pub mod graph;
pub mod io;
pub mod linalg;
pub mod local;
pub mod mps;
pub mod spectral;
pub mod tensor;

pub use error::{Error, Result};
