//! Configuration, the training loop, run manifests and the command line.

mod cli;
mod config;
mod train;

pub use cli::{error_line, main_with_args, run_cli};
pub use config::{hyperparameter_defaults, TrainConfig, KNOWN_PROFILES};
pub use train::{
    checkpoint_meta, evaluate, evaluate_masked, load_compatible, load_dataset, manifest_path, train, train_to_file,
    EpochRecord, RunManifest, Trained,
};
