pub mod carleman;
pub mod commands;
pub mod coefficients;
pub mod config;
pub mod error;
pub mod export;
pub mod forward;
pub mod geometry;
pub mod inverse;
pub mod sparse;
