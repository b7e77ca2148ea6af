//! On-disk formats.

pub mod container;

pub use container::{Container, TensorData};
