//! Shared fixtures for the benchmarks.

use permfuse::synthgen::{generate, SynthConfig, SynthDataset};

/// Default-scale synthetic dataset (60x60 grid, 40 wells).
pub fn dataset() -> SynthDataset {
    generate(&SynthConfig::default()).expect("default synthetic config is valid")
}
