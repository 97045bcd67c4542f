pub mod geometry;
pub mod model;
pub mod rng;
pub mod cost;
pub mod theory;
pub mod nets;
pub mod hierarchy;
pub mod io;
pub mod harness;
