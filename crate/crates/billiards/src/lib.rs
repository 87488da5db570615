//! Billiards inside circular polygons.
//!
//! Arc indices are 0-based throughout: arc `j` spans `[a_j, b_j]` and the
//! transition `j` goes from arc `j` to arc `j + 1 mod k`.

pub mod cells;
pub mod counting;
pub mod dynamics;
pub mod polygon;
pub mod ratio;
pub mod realization;
pub mod spectrum;
pub mod symbolic;
