//! Level-set reconstruction of a piecewise constant conductivity in the unit
//! disk from boundary current/voltage pairs (continuum EIT model).

pub mod error;
pub mod adjoint;
pub mod cli;
pub mod eit_forward;
pub mod fem;
pub mod levelset;
pub mod mesh;
pub mod optimizer;
pub mod shape;
pub mod synth;
pub mod vtk;

pub use error::{Error, Result};
