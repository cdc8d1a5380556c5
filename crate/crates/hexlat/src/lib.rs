//! Hexagonal-lattice image processing and hexagonal CNN kernels.
//!
//! The crate converts square-pixel images to a pseudohexagonal sample grid
//! and back ([`transform`]), measures how faithful such conversions are with
//! exact area-weighted error metrics ([`metrics`]), runs convolution /
//! pooling / dense layers natively on the hexagonal grid with a small
//! deterministic trainer ([`hexnn`]), rasterizes hexagonal arrays for
//! inspection ([`render`]), and reads/writes the container formats used by
//! the `hexlat` CLI ([`files`]).
//!
//! Addressing and geometry primitives shared by all of the above live in
//! [`hexgrid`].

pub mod error;
pub mod files;
pub mod hexgrid;
pub mod hexnn;
pub mod metrics;
pub mod render;
pub mod transform;

pub use error::{Error, Result};
