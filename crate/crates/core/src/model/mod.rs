//! The three-branch network: adapters, stacked cross-attention, cosine
//! classifiers with a learned temperature, and checkpoints.

mod checkpoint;
mod forward;
mod layers;
mod params;

pub use checkpoint::{
    checkpoint_hash, decode_checkpoint, encode_checkpoint, load_checkpoint, save_checkpoint, CheckpointMeta,
    CHECKPOINT_MAGIC, CHECKPOINT_VERSION,
};
pub use forward::{
    forward_all, forward_branches, forward_com, forward_osr, forward_sor, inverse_temperature, relation_branch,
    BranchLogits, BranchOutputs, BranchVars, ComVars, ProtoVars, RelationVars,
};
pub use layers::{adapter_forward, cross_attend, Attended};
pub use params::{AdapterParams, AttentionBlockParams, BranchMask, LprModel, LprParams, ModelConfig};
