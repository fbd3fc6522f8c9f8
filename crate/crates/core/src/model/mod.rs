//! The classifier, its ablation variants, training and checkpoints.

mod checkpoint;
mod config;
mod forward;
mod optim;
pub mod params;
mod train;

pub use checkpoint::{decode_checkpoint, encode_checkpoint, load_checkpoint, load_checkpoint_as, save_checkpoint};
pub use config::{PaatConfig, Structure, TrainConfig, Variant};
pub use forward::{bce_loss, AttentionTrace, PaatModel, Prediction, PROB_CLAMP};
pub use optim::{AdamW, OptimizerState};
pub use params::{ParamStore, Tensor};
pub use train::{
    format_epoch_log, mean_bce, score_documents, train_loop, train_loop_with, EpochLog, TrainOutcome, EPOCH_LOG_HEADER,
};
