//! Class-agnostic 3D instance segmentation over superpoint graphs.
//!
//! A scene is over-segmented into superpoints, which become nodes of an
//! adjacency graph. A promptable 2D segmenter, queried with points sampled
//! inside each superpoint's projections, supplies edge weights and node
//! features. A small graph network refines the weights into affinities,
//! trained on sparse labels that whole-image segmentations agree on, and a
//! union-find graph cut turns the affinities into instances.

pub mod bitmap;
pub mod edt;
pub mod error;
pub mod evaluation;
pub mod geometry;
pub mod gnn;
pub mod graph_build;
pub mod graph_cut;
pub mod io;
pub mod mask_oracle;
pub mod model;
pub mod pipeline;
pub mod presegment;
pub mod projection;
pub mod pseudo_label;
pub mod rng;
pub mod scalar;
pub mod synth;
pub mod union_find;

pub use error::{Error, Result};
pub use model::*;
pub use scalar::Scalar;

/// Network parameters in the precision used for training and inference.
pub type GnnParams = gnn::GnnParameters<f32>;
