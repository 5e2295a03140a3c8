//! Turns raw high-resolution TEM images and image stacks into identified
//! crystalline components and their spatial/temporal distributions.
//!
//! The processing chain mirrors how an analyst works a lattice image by hand:
//! transform to frequency space ([`fft`]), prepare a viewable FFT image
//! ([`prep`]), find the diffraction spots ([`detect`]), split merged spots
//! into instances ([`instances`]), convert spot geometry to d-spacings and
//! match them against a reference database ([`phase`]), map each matched
//! component back to real space through a masked inverse transform
//! ([`mapping`]), and repeat per frame for video stacks ([`timeline`]).
//!
//! [`synthgen`] builds synthetic lattice images with known ground truth so
//! every stage can be exercised end to end without instrument data, and
//! [`io`] handles the external formats (MRC stacks, PGM/PPM rasters, the
//! d-spacing CSV database, and the emitted reports).

pub mod detect;
pub mod error;
pub mod fft;
pub mod geom;
pub mod image;
pub mod instances;
pub mod io;
pub mod mapping;
pub mod phase;
pub mod pipeline;
pub mod prep;
pub mod synthgen;
pub mod timeline;

pub use detect::{BinaryMask, DetectParams};
pub use error::{Error, Result};
pub use fft::ComplexField;
pub use image::{Image2D, ImageStack};
pub use instances::{Feature, FeatureSet, LabelMap, WatershedParams};
pub use io::db::DSpacingDB;
pub use phase::{ComponentMatch, DiffractionProfile, ScaleChain};
pub use pipeline::{AnalysisResult, PipelineConfig};
pub use timeline::IntensityProfile;
