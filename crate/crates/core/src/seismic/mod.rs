//! Seismic RMS cubes, the 3D CNN that maps them to permeability, and the
//! expansion of its training set with high-confidence fused grid points.

mod cube;
mod net;
mod train;

pub use cube::{build_training_set, extract_cube, extract_cube_shaped, quantile, CoordFrame, RmsCube, TrainSample, CUBE_SHAPE};
pub use net::{Cache, Mode, NetConfig, SeismicNet};
pub use train::{grad_check, predict_map, train, Holdout, SeismicPrediction, TrainConfig, TrainReport};
