//! Permeability-map fusion of well-log, well-test and seismic data.

pub mod domain;
pub mod error;
pub mod fusion;
pub mod ingest;
pub mod optimize;
pub mod pipeline;
pub mod preprocess;
pub mod seismic;
pub mod synthgen;

pub use domain::{Boundary, Grid, GridMap, GridSpec, KernelParams, MapKind, Point, Rect, WellRecord};
pub use error::{Error, Result};
pub use fusion::{fuse_map, FusionResult};
