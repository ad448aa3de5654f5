//! Chemostat / gradostat simulation with two engines: a reference ODE
//! integrator and a fully implicit, log-concentration finite-volume
//! reactive-transport solver, plus equilibrium stability analysis and
//! parameter sweeps comparing the two.

pub mod cli;
pub mod error;
pub mod io;
pub mod linalg;
pub mod model;
pub mod ode;
pub mod rtm;
pub mod stability;
pub mod sweep;

pub use error::{Error, Result};
