//! Benchmark objectives and the SEIR epidemic simulator.

pub mod objectives;
pub mod seir;

pub use objectives::{objective, standard_objectives, Objective};
pub use seir::{gillespie_seir, peak_statistics, SeirConfig};
