//! External formats: MRC stacks, PGM/PPM rasters, the d-spacing database
//! CSV, and the emitted CSV/JSON reports.
//!
//! All readers are pure functions of the file bytes and safe to call
//! concurrently on distinct paths; writers must not share a target path.

pub mod db;
pub mod mrc;
pub mod pgm;
pub mod report;
