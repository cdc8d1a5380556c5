//! Hexagonal convolutional networks and their square reference counterparts.
//!
//! The building blocks: a seven-tap hexagonal convolution whose two row
//! parities share one weight set, hexagonal max pooling whose window offsets
//! are derived (not hand-picked) from a minimum-cost assignment against the
//! next aggregation level's cluster centers, and plain square convolution and
//! pooling for like-for-like comparisons. On top of those sit model
//! descriptions with parameter accounting, a deterministic Adam training
//! loop, and a binary weight container.

mod assignment;
mod kernels;
mod layers;
mod model;
mod pooling;
mod tensor;
mod train;
mod weights;

pub use assignment::assignment_solve;
pub use kernels::{
    hconv2d_backward, hconv2d_forward, hconv2d_output_dims, same_padding_output,
    sconv2d_backward, sconv2d_forward, HexKernelGrad, HexKernelPair, Parity, SquareKernel,
    SquareKernelGrad, EVEN_TAP_OFFSETS, ODD_TAP_OFFSETS,
};
pub use layers::{
    adam_step, dense_backward, dense_forward, dropout_backward, dropout_forward, glorot_init,
    relu_backward, relu_forward, softmax_cross_entropy, AdamConfig, AdamState, DenseGrad,
    DenseParams,
};
pub use model::{
    count_params, group_thousands, summary_table, LayerKind, LayerSpec, LayerSummary, Model,
    ModelOptState, ModelSpec, Shape,
};
pub use pooling::{
    hmaxpool_backward, hmaxpool_forward, hmaxpool_output_dims, pool_offsets, pooling_assignment,
    smaxpool_backward, smaxpool_forward, PoolingAssignment,
};
pub use tensor::Tensor4;
pub use train::{
    build_dataset, evaluate, evaluate_samples, train, Dataset, EpochStats, TrainConfig,
    TrainOutcome,
};
pub use weights::{load_weights, save_weights, WEIGHTS_MAGIC, WEIGHTS_VERSION};
