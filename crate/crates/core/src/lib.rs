pub mod approx;
pub mod error;
pub mod exec;
pub mod io;
pub mod multilinear;
pub mod operators;
pub mod sparse;
pub mod sparse_pm;
pub mod threshold;
pub mod truncated;
