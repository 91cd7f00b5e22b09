//! Reference detectors to compare against: isolation forest, local outlier
//! factor and mean kNN distance.

pub mod iforest;
pub mod neighbors;

pub use iforest::{average_path_length, iforest_fit, IsolationForestConfig, IsolationForestModel, IsolationTree};
pub use neighbors::{default_k, LofModel, NeighborIndex};
