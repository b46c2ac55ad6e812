use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::report::write_pair;
use super::sweep::{bias_sweep, metrics, Metrics};
use super::{keep_all, report_from, TestProbabilities};
use crate::dataset::{Dataset, Regime};
use crate::error::{Error, Result};
use crate::model::{load_checkpoint, save_checkpoint, BranchMask, LprModel};
use crate::objective::FusionWeights;
use crate::runner::{checkpoint_meta, train, TrainConfig};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AblationRow {
    pub branches: String,
    pub mask: BranchMask,
    pub metrics: Metrics,
}

/// Open-world metrics of one model per non-empty branch mask.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AblationTable {
    pub fusion: FusionWeights,
    pub seed: u64,
    pub rows: Vec<AblationRow>,
}

impl AblationTable {
    pub fn row(&self, mask: BranchMask) -> Option<&AblationRow> {
        self.rows.iter().find(|r| r.mask == mask)
    }

    pub fn to_table(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "{:^5} {:^5} {:^5} {:>6} {:>6} {:>6} {:>6}", "com", "sor", "osr", "S", "U", "HM", "AUC");
        let tick = |b: bool| if b { "x" } else { "" };
        for r in &self.rows {
            let m = &r.metrics;
            let _ = writeln!(
                s,
                "{:^5} {:^5} {:^5} {:>6.1} {:>6.1} {:>6.1} {:>6.1}",
                tick(r.mask.com),
                tick(r.mask.sor),
                tick(r.mask.osr),
                m.seen,
                m.unseen,
                m.hm,
                m.auc
            );
        }
        s
    }

    pub fn write(&self, stem: &Path) -> Result<()> {
        write_pair(stem, &serde_json::to_string_pretty(self)?, &self.to_table())
    }
}

/// Checkpoint file for `mask` inside an ablation directory.
pub fn ablation_checkpoint_path(dir: &Path, mask: BranchMask) -> PathBuf {
    dir.join(format!("ablation-{}.ckpt", mask.to_string().replace('+', "-")))
}

fn ablation_model(cfg: &TrainConfig, ds: &Dataset, mask: BranchMask, dir: Option<&Path>, allow_training: bool) -> Result<LprModel> {
    let path = dir.map(|d| ablation_checkpoint_path(d, mask));
    if let Some(p) = path.as_ref().filter(|p| p.is_file()) {
        let (model, meta) = load_checkpoint(p)?;
        meta.verify_space(&ds.space)?;
        if model.mask != mask {
            return Err(Error::Checkpoint {
                path: p.clone(),
                reason: format!("trained with branches {}, expected {mask}", model.mask),
            });
        }
        return Ok(model);
    }
    if !allow_training {
        let missing = path.unwrap_or_else(|| ablation_checkpoint_path(Path::new("."), mask));
        return Err(Error::MissingCheckpoint(missing));
    }
    let cfg = TrainConfig {
        branches: mask,
        ..cfg.clone()
    };
    let model = train(&cfg, ds)?.model;
    if let (Some(p), Some(d)) = (&path, dir) {
        std::fs::create_dir_all(d)?;
        save_checkpoint(p, &model, &checkpoint_meta(ds))?;
    }
    Ok(model)
}

/// Trains (or loads from `ckpt_dir`) one model per branch mask, each with
/// only that mask's loss terms, and evaluates it in the open world.
///
/// Rows follow [`BranchMask::ablation_order`].
pub fn run_path_ablation(cfg: &TrainConfig, ds: &Dataset, ckpt_dir: Option<&Path>, allow_training: bool) -> Result<AblationTable> {
    let mut rows = Vec::with_capacity(7);
    for mask in BranchMask::ablation_order() {
        let model = ablation_model(cfg, ds, mask, ckpt_dir, allow_training)?;
        let probs = TestProbabilities::compute(&model, ds, Regime::Open, &keep_all)?;
        let report = report_from(&probs, Regime::Open, cfg.fusion, mask, cfg.seed)?;
        rows.push(AblationRow {
            branches: mask.to_string(),
            mask,
            metrics: report.metrics,
        });
    }
    Ok(AblationTable {
        fusion: cfg.fusion,
        seed: cfg.seed,
        rows,
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct AlphaRow {
    pub alpha: f64,
    pub beta: f64,
    pub metrics: Metrics,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AlphaSweepTable {
    pub regime: Regime,
    pub rows: Vec<AlphaRow>,
}

impl AlphaSweepTable {
    pub fn alphas(&self) -> Vec<f64> {
        self.rows.iter().map(|r| r.alpha).collect()
    }

    pub fn seen(&self) -> Vec<f64> {
        self.rows.iter().map(|r| r.metrics.seen).collect()
    }

    pub fn unseen(&self) -> Vec<f64> {
        self.rows.iter().map(|r| r.metrics.unseen).collect()
    }

    pub fn to_table(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "{:>6} {:>6} {:>6} {:>6} {:>6} {:>6}", "alpha", "beta", "S", "U", "HM", "AUC");
        for r in &self.rows {
            let m = &r.metrics;
            let _ = writeln!(
                s,
                "{:>6.2} {:>6.2} {:>6.1} {:>6.1} {:>6.1} {:>6.1}",
                r.alpha, r.beta, m.seen, m.unseen, m.hm, m.auc
            );
        }
        s
    }

    pub fn write(&self, stem: &Path) -> Result<()> {
        write_pair(stem, &serde_json::to_string_pretty(self)?, &self.to_table())
    }
}

/// Inference-only sweep over α with `β = 1 - α`, through the model's
/// trained branches.
pub fn run_alpha_sweep(model: &LprModel, ds: &Dataset, grid: &[f64], regime: Regime) -> Result<AlphaSweepTable> {
    if let Some(a) = grid.iter().find(|a| !(0.0..=1.0).contains(*a)) {
        return Err(Error::Config(format!("alpha {a} outside [0, 1]")));
    }
    let probs = TestProbabilities::compute(model, ds, regime, &keep_all)?;
    let rows = grid
        .iter()
        .map(|&alpha| {
            let fw = FusionWeights::from_alpha(alpha);
            let curve = bias_sweep(&probs.scores(fw, model.mask)?)?;
            Ok(AlphaRow {
                alpha,
                beta: fw.beta,
                metrics: metrics(&curve),
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(AlphaSweepTable { regime, rows })
}

/// `start:stop:step` (inclusive) or a comma-separated list.
pub fn parse_alpha_grid(spec: &str) -> Result<Vec<f64>> {
    let bad = || Error::Config(format!("invalid alpha grid {spec:?}"));
    let num = |s: &str| s.trim().parse::<f64>().map_err(|_| bad());
    let parts: Vec<&str> = spec.split(':').collect();
    if parts.len() == 1 {
        return spec.split(',').map(num).collect();
    }
    let [start, stop, step] = parts[..] else {
        return Err(bad());
    };
    let (start, stop, step) = (num(start)?, num(stop)?, num(step)?);
    if !(step > 0.0) || stop < start {
        return Err(bad());
    }
    let n = ((stop - start) / step + 1e-9).floor() as usize;
    // Round to 12 decimals so 0.2 + 3 * 0.1 prints as 0.5.
    Ok((0..=n).map(|i| ((start + i as f64 * step) * 1e12).round() / 1e12).collect())
}

fn ranks(v: &[f64]) -> Vec<f64> {
    let mut idx: Vec<usize> = (0..v.len()).collect();
    idx.sort_by(|&a, &b| v[a].total_cmp(&v[b]));
    let mut r = vec![0.0; v.len()];
    let mut i = 0;
    while i < idx.len() {
        let mut j = i;
        while j + 1 < idx.len() && v[idx[j + 1]] == v[idx[i]] {
            j += 1;
        }
        let avg = (i + j) as f64 / 2.0 + 1.0;
        for &k in &idx[i..=j] {
            r[k] = avg;
        }
        i = j + 1;
    }
    r
}

/// Spearman rank correlation with averaged ranks for ties. `None` when
/// either input is constant or the lengths differ.
pub fn spearman(x: &[f64], y: &[f64]) -> Option<f64> {
    if x.len() != y.len() || x.len() < 2 {
        return None;
    }
    let (rx, ry) = (ranks(x), ranks(y));
    let n = x.len() as f64;
    let (mx, my) = (rx.iter().sum::<f64>() / n, ry.iter().sum::<f64>() / n);
    let mut sxy = 0.0;
    let mut sxx = 0.0;
    let mut syy = 0.0;
    for (a, b) in rx.iter().zip(&ry) {
        sxy += (a - mx) * (b - my);
        sxx += (a - mx) * (a - mx);
        syy += (b - my) * (b - my);
    }
    (sxx > 0.0 && syy > 0.0).then(|| sxy / (sxx * syy).sqrt())
}
