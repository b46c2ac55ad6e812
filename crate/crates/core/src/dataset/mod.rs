//! Composition space, feature records, the synthetic shared-space generator
//! and the binary feature-file format.

mod bank;
mod batch;
mod io;
mod space;
mod synthetic;

use serde::{Deserialize, Serialize};

pub use bank::{Prototypes, TextBank, UNIT_TOLERANCE};
pub use batch::batches;
pub use io::{decode_features, encode_features, load_features, save_features, sidecar_path, FEATURE_MAGIC, FEATURE_VERSION};
pub use space::{candidate_index, CompositionSpace, Pair, Regime};
pub use synthetic::{generate_synthetic, SyntheticConfig};

use crate::diffmath::{norm, Tensor};
use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Val,
    Test,
}

impl Split {
    pub fn code(self) -> u8 {
        match self {
            Split::Train => 0,
            Split::Val => 1,
            Split::Test => 2,
        }
    }

    pub fn from_code(code: u8) -> Option<Self> {
        match code {
            0 => Some(Split::Train),
            1 => Some(Split::Val),
            2 => Some(Split::Test),
            _ => None,
        }
    }
}

/// One image feature with its composition label.
#[derive(Clone, Debug, PartialEq)]
pub struct FeatureRecord {
    pub feature: Vec<f64>,
    pub label: Pair,
    pub split: Split,
}

/// A composition space, its text bank and all feature records.
#[derive(Clone, Debug, PartialEq)]
pub struct Dataset {
    pub space: CompositionSpace,
    pub bank: TextBank,
    pub records: Vec<FeatureRecord>,
}

impl Dataset {
    /// Checks every record against the space and the bank.
    pub fn new(space: CompositionSpace, bank: TextBank, records: Vec<FeatureRecord>) -> Result<Self> {
        bank.validate(&space)?;
        let d = bank.dim();
        for (k, r) in records.iter().enumerate() {
            validate_record(&space, d, k, r)?;
        }
        Ok(Self { space, bank, records })
    }

    pub fn dim(&self) -> usize {
        self.bank.dim()
    }

    pub fn indices(&self, split: Split) -> Vec<usize> {
        self.records
            .iter()
            .enumerate()
            .filter(|(_, r)| r.split == split)
            .map(|(i, _)| i)
            .collect()
    }

    /// Stacks the features of the given records into a matrix.
    pub fn features(&self, indices: &[usize]) -> Tensor {
        let d = self.dim();
        let mut data = Vec::with_capacity(indices.len() * d);
        for &i in indices {
            data.extend_from_slice(&self.records[i].feature);
        }
        Tensor::matrix(indices.len(), d, data).expect("records share the bank width")
    }

    pub fn labels(&self, indices: &[usize]) -> Vec<Pair> {
        indices.iter().map(|&i| self.records[i].label).collect()
    }

    /// SHA-256 of the canonical feature-file encoding.
    pub fn content_hash(&self) -> String {
        use sha2::{Digest, Sha256};
        hex::encode(Sha256::digest(encode_features(self)))
    }
}

pub(crate) fn validate_record(space: &CompositionSpace, d: usize, k: usize, r: &FeatureRecord) -> Result<()> {
    let bad = |reason: String| Error::ShapeMismatch(format!("record {k}: {reason}"));
    if r.feature.len() != d {
        return Err(bad(format!("feature width {} != {d}", r.feature.len())));
    }
    let n = norm(&r.feature);
    if !((n - 1.0).abs() <= UNIT_TOLERANCE) {
        return Err(bad(format!("non-unit feature (norm {n})")));
    }
    if r.label.state >= space.num_states() || r.label.object >= space.num_objects() {
        return Err(bad(format!("label {} out of range", r.label)));
    }
    match r.split {
        Split::Train | Split::Val if !space.is_seen(r.label) => {
            Err(bad(format!("{:?} record with non-seen label {}", r.split, r.label)))
        }
        Split::Test if !space.closed_world().contains(&r.label) => {
            Err(bad(format!("test label {} is not a closed-world candidate", r.label)))
        }
        _ => Ok(()),
    }
}
