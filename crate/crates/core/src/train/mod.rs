//! Loss, optimization, augmentation, initialization, and the training loop.

pub mod augment;
pub mod init;
pub mod loss;
pub mod optim;
pub mod trainer;

pub use augment::{augment_flip, flip_axes};
pub use init::init_params;
pub use loss::soft_dice_loss;
pub use optim::{adam_step, adam_update_slice, AdamState, PlateauScheduler};
pub use trainer::{
    train, EpochRecord, TrainConfig, TrainHistory, TrainOutcome, TrainSample,
    HISTORY_CSV_HEADER,
};
