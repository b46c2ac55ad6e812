use std::path::{Path, PathBuf};
use std::time::Instant;

use serde::{Deserialize, Serialize};

use super::config::TrainConfig;
use crate::dataset::{batches, generate_synthetic, load_features, Dataset, Regime, Split};
use crate::diffmath::{Graph, OptimState};
use crate::error::{Error, Result};
use crate::eval::{evaluate_model, EvalReport};
use crate::model::{
    checkpoint_hash, forward_branches, load_checkpoint, save_checkpoint, BranchMask, CheckpointMeta, LprModel,
    ModelConfig, ProtoVars,
};
use crate::objective::{total_loss, FusionWeights, LossBreakdown, TrainTargets};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    /// Sample-weighted mean of the batch losses.
    pub train: LossBreakdown,
    /// Total loss on the validation split, when it is nonempty.
    pub val_loss: Option<f64>,
}

/// Everything needed to reproduce and identify one training run.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub config: TrainConfig,
    pub dataset_hash: String,
    pub checkpoint_hash: String,
    pub wall_clock_secs: f64,
    pub best_epoch: usize,
    pub stopped_early: bool,
    pub trace: Vec<EpochRecord>,
}

impl RunManifest {
    /// Per-epoch total training loss.
    pub fn loss_trace(&self) -> Vec<f64> {
        self.trace.iter().map(|e| e.train.total).collect()
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn load(path: &Path) -> Result<Self> {
        Ok(serde_json::from_str(&std::fs::read_to_string(path)?)?)
    }
}

#[derive(Clone, Debug)]
pub struct Trained {
    pub model: LprModel,
    pub manifest: RunManifest,
}

pub fn checkpoint_meta(ds: &Dataset) -> CheckpointMeta {
    CheckpointMeta {
        num_states: ds.space.num_states(),
        num_objects: ds.space.num_objects(),
        dataset_hash: ds.content_hash(),
    }
}

/// The feature file named by `cfg.data`, or the synthetic dataset.
pub fn load_dataset(cfg: &TrainConfig) -> Result<Dataset> {
    match &cfg.data {
        Some(p) => load_features(p),
        None => generate_synthetic(&cfg.synthetic),
    }
}

/// Mean total loss of `indices` under `mask`, without gradients.
fn split_loss(model: &LprModel, ds: &Dataset, indices: &[usize], cfg: &TrainConfig) -> Result<f64> {
    let seen = ds.space.seen();
    let protos = ds.bank.prototypes(&ds.space, seen);
    let targets = TrainTargets::from_labels(&ds.space, seen, &ds.labels(indices))?;
    let mut g = Graph::new();
    let x = g.input(ds.features(indices));
    let pv = ProtoVars::bind(&mut g, &protos);
    let vars = forward_branches(&mut g, model, x, &pv, cfg.branches)?;
    let (_, br) = total_loss(&mut g, &vars, &targets, cfg.loss)?;
    Ok(br.total)
}

/// Trains one model with the branches in `cfg.branches`.
///
/// Each epoch shuffles the training split, then runs forward, loss,
/// backward and one optimizer step per batch. The returned model is the
/// one with the lowest validation loss (the last one without a validation
/// split); training stops after `cfg.patience` epochs without improvement.
pub fn train(cfg: &TrainConfig, ds: &Dataset) -> Result<Trained> {
    cfg.validate()?;
    let start = Instant::now();
    let mut model = LprModel::new(ModelConfig::for_dim(ds.dim()), cfg.seed);
    model.mask = cfg.branches;
    let mut opt = OptimState::new(cfg.optimizer, &model.store);

    let seen = ds.space.seen();
    let protos = ds.bank.prototypes(&ds.space, seen);
    let val = ds.indices(Split::Val);
    if ds.indices(Split::Train).is_empty() {
        return Err(Error::EmptyPartition("train"));
    }

    let mut trace = Vec::with_capacity(cfg.epochs);
    let mut best: Option<(f64, usize, LprModel)> = None;
    let mut stale = 0;
    let mut stopped_early = false;
    for epoch in 1..=cfg.epochs {
        let mut sum = LossBreakdown::default();
        let mut count = 0usize;
        for (b, idx) in batches(&ds.records, cfg.batch_size, cfg.seed, epoch as u64).into_iter().enumerate() {
            let at = |what: String| Error::Diverged(format!("{what} at epoch {epoch}, batch {}", b + 1));
            let targets = TrainTargets::from_labels(&ds.space, seen, &ds.labels(&idx))?;
            let mut g = Graph::new();
            let x = g.input(ds.features(&idx));
            let pv = ProtoVars::bind(&mut g, &protos);
            let vars = forward_branches(&mut g, &model, x, &pv, cfg.branches)?;
            let (loss, br) = total_loss(&mut g, &vars, &targets, cfg.loss)?;
            if !br.total.is_finite() {
                return Err(at(format!("non-finite loss {}", br.total)));
            }
            model.store.zero_grad();
            g.backward(loss)?.apply_to(&mut model.store);
            opt.step(&mut model.store).map_err(|e| at(e.to_string()))?;
            accumulate(&mut sum, &br, idx.len() as f64);
            count += idx.len();
        }
        scale(&mut sum, 1.0 / count as f64);
        let val_loss = if val.is_empty() {
            None
        } else {
            Some(split_loss(&model, ds, &val, cfg)?)
        };
        trace.push(EpochRecord {
            epoch,
            train: sum,
            val_loss,
        });

        let score = val_loss.unwrap_or(f64::NEG_INFINITY);
        if best.as_ref().is_none_or(|(s, ..)| score < *s || val_loss.is_none()) {
            best = Some((score, epoch, model.clone()));
            stale = 0;
        } else {
            stale += 1;
            if cfg.patience > 0 && stale >= cfg.patience {
                stopped_early = epoch < cfg.epochs;
                break;
            }
        }
    }
    let (_, best_epoch, model) = best.expect("at least one epoch ran");
    let manifest = RunManifest {
        config: cfg.clone(),
        dataset_hash: ds.content_hash(),
        checkpoint_hash: checkpoint_hash(&model, &checkpoint_meta(ds)),
        wall_clock_secs: start.elapsed().as_secs_f64(),
        best_epoch,
        stopped_early,
        trace,
    };
    Ok(Trained { model, manifest })
}

fn accumulate(acc: &mut LossBreakdown, br: &LossBreakdown, w: f64) {
    acc.com += w * br.com;
    acc.sor += w * br.sor;
    acc.osr += w * br.osr;
    acc.total += w * br.total;
    acc.sor_composition_ce += w * br.sor_composition_ce;
    acc.sor_state_ce += w * br.sor_state_ce;
    acc.sor_object_ce += w * br.sor_object_ce;
    acc.osr_composition_ce += w * br.osr_composition_ce;
    acc.osr_object_ce += w * br.osr_object_ce;
    acc.osr_state_ce += w * br.osr_state_ce;
}

fn scale(acc: &mut LossBreakdown, k: f64) {
    let copy = *acc;
    *acc = LossBreakdown::default();
    accumulate(acc, &copy, k);
}

/// Path of the manifest written next to a checkpoint.
pub fn manifest_path(ckpt: &Path) -> PathBuf {
    let mut s = ckpt.as_os_str().to_owned();
    s.push(".manifest.json");
    PathBuf::from(s)
}

/// Trains, then writes the checkpoint to `out` and the manifest beside it.
pub fn train_to_file(cfg: &TrainConfig, ds: &Dataset, out: &Path) -> Result<Trained> {
    let trained = train(cfg, ds)?;
    if let Some(dir) = out.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir)?;
    }
    save_checkpoint(out, &trained.model, &checkpoint_meta(ds))?;
    std::fs::write(manifest_path(out), trained.manifest.to_json()?)?;
    Ok(trained)
}

/// Loads a checkpoint and checks it can score `ds`.
pub fn load_compatible(ckpt: &Path, ds: &Dataset) -> Result<LprModel> {
    let (model, meta) = load_checkpoint(ckpt)?;
    meta.verify_space(&ds.space)?;
    if model.config.dim != ds.dim() {
        return Err(Error::ShapeMismatch(format!(
            "checkpoint adapter weights expect width {} but feature records have width {}",
            model.config.dim,
            ds.dim()
        )));
    }
    Ok(model)
}

/// Evaluates a checkpoint on the test split of `ds`.
pub fn evaluate(ckpt: &Path, ds: &Dataset, regime: Regime, fw: FusionWeights, seed: u64) -> Result<EvalReport> {
    let model = load_compatible(ckpt, ds)?;
    evaluate_model(&model, ds, regime, fw, seed)
}

/// Evaluates through `mask`, which must be among the trained branches.
pub fn evaluate_masked(
    ckpt: &Path,
    ds: &Dataset,
    regime: Regime,
    fw: FusionWeights,
    mask: BranchMask,
    seed: u64,
) -> Result<EvalReport> {
    let mut model = load_compatible(ckpt, ds)?;
    model.check_mask(mask)?;
    model.mask = mask;
    evaluate_model(&model, ds, regime, fw, seed)
}
