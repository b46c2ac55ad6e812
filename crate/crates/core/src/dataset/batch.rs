use rand::seq::SliceRandom;

use super::{FeatureRecord, Split};
use crate::seed;

/// Shuffles the train records for `epoch` and cuts them into batches.
/// The last batch may be short.
pub fn batches(records: &[FeatureRecord], batch_size: usize, seed: u64, epoch: u64) -> Vec<Vec<usize>> {
    assert!(batch_size >= 1, "batch size must be at least 1");
    let mut idx: Vec<usize> = records
        .iter()
        .enumerate()
        .filter(|(_, r)| r.split == Split::Train)
        .map(|(i, _)| i)
        .collect();
    idx.shuffle(&mut seed::rng(seed, "shuffle", epoch));
    idx.chunks(batch_size).map(<[usize]>::to_vec).collect()
}
