//! Two-tower retrieval model trained with InfoNCE over real and virtual negatives.

mod checkpoint;
mod loss;
mod tower;
mod train;

pub use checkpoint::{load_checkpoint, write_checkpoint};
pub use loss::{infonce_indexed, infonce_loss, IndexedInfoNce, InfoNce};
pub use tower::{score, user_features, Activation, ForwardCache, Mlp, TowerConfig, TowerParams, UserFeatures};
pub use train::{
    build_examples, ebr_objective, init_params, train_ebr, Batch, BatchStats, EbrConfig, EbrModel, EpochStats, Example, ExampleNegatives,
    NegativeSource, NegativeStrategy,
};
