//! Core algorithms for locating an undisclosed mobility grid on a map and
//! measuring how identifiable its users remain.
//!
//! The crate is `no_std` (with `alloc`). Everything here is pure computation:
//! rasters are built from already-parsed records, polygons arrive as plain
//! coordinate rings, and results are plain values. File formats, CSV/GeoJSON
//! parsing and the command line live in the `gridsleuth` crate.
//!
//! Features:
//! - `parallel`: rayon-backed matching and search (implies `std`). Results are
//!   bit-identical to the sequential path.
//! - `serde`: `Serialize`/`Deserialize` on the public value types.

#![no_std]
#![warn(missing_debug_implementations)]
// `!(x > 0.0)` rejects NaN along with non-positive values.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

extern crate alloc;
#[cfg(feature = "std")]
extern crate std;

pub mod analysis;
pub mod dihedral;
mod error;
pub mod geo;
pub mod georef;
pub mod grid;
pub mod hex;
pub mod matching;
pub mod raster;

pub use dihedral::Dihedral;
pub use error::{Error, Result};
pub use geo::{GeoBBox, LandMask, Polygon, PolygonPart, ProjectionRef};
pub use georef::GeoreferencedGrid;
pub use grid::{Cell, GridSpec, PingRecord};
pub use matching::{MatchResult, Method, SearchConfig, TransformedMatch};
pub use raster::{ActivityRaster, BinaryImage, CountMode, RealRaster};
