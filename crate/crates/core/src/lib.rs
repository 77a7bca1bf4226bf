//! Exact sampling and experiments for systems of interacting spiking chains
//! whose memory reaches back to each neuron's last spike.

pub mod config;
pub mod error;
pub mod field;
pub mod forward;
pub mod graph;
pub mod isi;
pub mod kalikow;
pub mod model;
pub mod perfect;
pub mod rng;
pub mod stats;

pub use error::{Error, Result};
pub use field::{History, SpikeField};
pub use model::ModelSpec;
pub use rng::{RandomCoordinateSource, Stream};

/// Version of this crate, recorded in run manifests.
pub const VERSION: &str = env!("CARGO_PKG_VERSION");
