pub mod acquisition;
pub mod bayesopt;
pub mod blr;
pub mod cli;
pub mod error;
pub mod expdesign;
pub mod gp;
pub mod model;
pub mod multifidelity;
pub mod optim;
pub mod outer_loop;
pub mod quadrature;
pub mod rng;
pub mod sensitivity;
pub mod space;
pub mod stats;
pub mod tasks;

pub use error::{Error, Result};
