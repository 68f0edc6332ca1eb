//! Edge-affinity network: a five-layer mean-aggregation graph convolution
//! stack followed by a three-layer edge MLP, with exact hand-written
//! gradients and an Adam trainer.

mod backward;
mod forward;
mod params;
mod train;

pub use backward::{loss_and_gradients, loss_and_gradients_pooled, LossParts, BCE_CLAMP};
pub use forward::{edge_affinities, gcn_forward, infer_graph, GraphInput};
pub use params::{
    load_params, params_from_bytes, params_to_bytes, save_params, Dense, GnnParameters, GCN_DIMS, HIDDEN,
    MLP_DIMS,
};
pub use train::{train, train_pooled, Adam, TrainConfig, TrainOutput};
