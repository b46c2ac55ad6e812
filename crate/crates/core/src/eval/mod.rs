//! Closed- and open-world scoring, the calibration-bias sweep, the four
//! summary metrics and the path-ablation and α-sweep experiments.

mod experiments;
mod report;
mod sweep;

use std::thread;

pub use experiments::{
    ablation_checkpoint_path, parse_alpha_grid, run_alpha_sweep, run_path_ablation, spearman, AblationRow,
    AblationTable, AlphaRow, AlphaSweepTable,
};
pub use report::{ConfigEcho, Diagnostics, EvalReport};
pub use sweep::{bias_sweep, harmonic_mean, metrics, CurvePoint, Metrics, ScoreMatrix};

use crate::dataset::{candidate_index, CompositionSpace, Dataset, Pair, Regime, Split};
use crate::error::{Error, Result};
use crate::model::{forward_all, BranchMask, LprModel};
use crate::objective::{fuse_masked, BranchProbs, FusionWeights};

const SCORE_CHUNK: usize = 128;

/// Decides which candidate compositions are scored. The default keeps all.
pub type CandidateFilter<'a> = &'a dyn Fn(&CompositionSpace, Pair) -> bool;

pub fn keep_all(_: &CompositionSpace, _: Pair) -> bool {
    true
}

/// Branch distributions of every test record over one candidate set.
///
/// Fusion weights only enter after this point, so several weightings can be
/// scored from one forward pass.
#[derive(Clone, Debug, PartialEq)]
pub struct TestProbabilities {
    pub candidates: Vec<Pair>,
    pub seen_columns: Vec<bool>,
    pub labels: Vec<usize>,
    pub probs: Vec<BranchProbs>,
}

impl TestProbabilities {
    pub fn compute(model: &LprModel, ds: &Dataset, regime: Regime, filter: CandidateFilter) -> Result<Self> {
        let space = &ds.space;
        if model.config.dim != ds.dim() {
            return Err(Error::ShapeMismatch(format!(
                "model width {} but features have width {}",
                model.config.dim,
                ds.dim()
            )));
        }
        let candidates: Vec<Pair> = space
            .candidates(regime)
            .iter()
            .copied()
            .filter(|&p| filter(space, p))
            .collect();
        let test = ds.indices(Split::Test);
        let labels = ds
            .labels(&test)
            .into_iter()
            .map(|p| {
                candidate_index(&candidates, p).ok_or(Error::LabelNotInCandidates {
                    state: p.state,
                    object: p.object,
                })
            })
            .collect::<Result<Vec<_>>>()?;
        let protos = ds.bank.prototypes(space, &candidates);

        let chunks: Vec<&[usize]> = test.chunks(SCORE_CHUNK).collect();
        let workers = thread::available_parallelism().map_or(1, |n| n.get()).min(chunks.len().max(1));
        let per_worker = chunks.len().div_ceil(workers.max(1)).max(1);
        let results: Vec<Result<Vec<BranchProbs>>> = thread::scope(|s| {
            let handles: Vec<_> = chunks
                .chunks(per_worker)
                .map(|group| {
                    let protos = &protos;
                    s.spawn(move || {
                        let mut out = Vec::new();
                        for idx in group {
                            let logits = forward_all(model, &ds.features(idx), protos)?.logits;
                            for i in 0..idx.len() {
                                out.push(BranchProbs::from_logits(&logits, i)?);
                            }
                        }
                        Ok(out)
                    })
                })
                .collect();
            handles.into_iter().map(|h| h.join().expect("scoring thread panicked")).collect()
        });
        let mut probs = Vec::with_capacity(test.len());
        for r in results {
            probs.extend(r?);
        }
        Ok(Self {
            seen_columns: candidates.iter().map(|&p| space.is_seen(p)).collect(),
            candidates,
            labels,
            probs,
        })
    }

    /// Fused scores under `fw`, using only the branches in `mask`.
    pub fn scores(&self, fw: FusionWeights, mask: BranchMask) -> Result<ScoreMatrix> {
        let rows = self
            .probs
            .iter()
            .map(|p| fuse_masked(p, fw, mask, &self.candidates))
            .collect::<Result<Vec<_>>>()?;
        if rows.is_empty() {
            return Err(Error::EmptyPartition("test"));
        }
        ScoreMatrix::from_rows(&rows, self.labels.clone(), self.seen_columns.clone())
    }

    /// Unbiased composition, state and object accuracy of a score matrix
    /// built from these probabilities.
    pub fn diagnostics(&self, m: &ScoreMatrix) -> Diagnostics {
        let pred = m.predict_with_bias(0.0);
        let n = pred.len().max(1) as f64;
        let mut d = Diagnostics::default();
        for (&p, &l) in pred.iter().zip(&self.labels) {
            let (pp, lp) = (self.candidates[p], self.candidates[l]);
            d.composition_accuracy += (p == l) as u8 as f64;
            d.state_accuracy += (pp.state == lp.state) as u8 as f64;
            d.object_accuracy += (pp.object == lp.object) as u8 as f64;
        }
        d.composition_accuracy *= 100.0 / n;
        d.state_accuracy *= 100.0 / n;
        d.object_accuracy *= 100.0 / n;
        d
    }
}

/// Fused test scores over the candidates of `regime`, through the branches
/// the model was trained with.
pub fn score_testset(model: &LprModel, ds: &Dataset, regime: Regime, fw: FusionWeights) -> Result<ScoreMatrix> {
    score_testset_masked(model, ds, regime, fw, model.mask)
}

/// Like [`score_testset`] but restricted to `mask`, which must be a subset
/// of the trained branches.
pub fn score_testset_masked(
    model: &LprModel,
    ds: &Dataset,
    regime: Regime,
    fw: FusionWeights,
    mask: BranchMask,
) -> Result<ScoreMatrix> {
    model.check_mask(mask)?;
    TestProbabilities::compute(model, ds, regime, &keep_all)?.scores(fw, mask)
}

/// Scores, sweeps and summarizes one regime.
pub fn evaluate_model(model: &LprModel, ds: &Dataset, regime: Regime, fw: FusionWeights, seed: u64) -> Result<EvalReport> {
    let probs = TestProbabilities::compute(model, ds, regime, &keep_all)?;
    report_from(&probs, regime, fw, model.mask, seed)
}

pub(crate) fn report_from(
    probs: &TestProbabilities,
    regime: Regime,
    fw: FusionWeights,
    mask: BranchMask,
    seed: u64,
) -> Result<EvalReport> {
    let m = probs.scores(fw, mask)?;
    let curve = bias_sweep(&m)?;
    Ok(EvalReport {
        regime,
        metrics: metrics(&curve),
        diagnostics: probs.diagnostics(&m),
        config: ConfigEcho {
            alpha: fw.alpha,
            beta: fw.beta,
            mask: mask.to_string(),
            seed,
        },
        curve,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::{generate_synthetic, SyntheticConfig};
    use crate::model::ModelConfig;

    fn small() -> (LprModel, Dataset) {
        let cfg = SyntheticConfig {
            num_states: 3,
            num_objects: 4,
            dim: 8,
            train_per_seen: 4,
            test_per_composition: 2,
            ..SyntheticConfig::default()
        };
        let ds = generate_synthetic(&cfg).unwrap();
        (LprModel::new(ModelConfig::for_dim(8), 1), ds)
    }

    #[test]
    fn column_counts_and_row_sums() {
        let (model, ds) = small();
        let fw = FusionWeights { alpha: 0.3, beta: 0.9 };
        let closed = score_testset(&model, &ds, Regime::Closed, fw).unwrap();
        assert_eq!(closed.scores().cols(), ds.space.closed_world().len());
        let open = score_testset(&model, &ds, Regime::Open, fw).unwrap();
        assert_eq!(open.scores().cols(), 12);
        for row in open.scores().row_iter() {
            assert!((row.iter().sum::<f64>() - (fw.alpha + 2.0 * fw.beta)).abs() < 1e-6);
        }
    }

    #[test]
    fn label_outside_candidates_is_rejected() {
        let (model, ds) = small();
        let drop_first_test_label = ds.labels(&ds.indices(Split::Test))[0];
        let filter = move |_: &CompositionSpace, p: Pair| p != drop_first_test_label;
        let err = TestProbabilities::compute(&model, &ds, Regime::Open, &filter).unwrap_err();
        assert!(matches!(err, Error::LabelNotInCandidates { .. }));
        assert!(err.to_string().contains("label not in candidate set"));
    }

    #[test]
    fn incompatible_mask_is_rejected() {
        let (mut model, ds) = small();
        model.mask = BranchMask::COM;
        let res = score_testset_masked(&model, &ds, Regime::Closed, FusionWeights::default(), BranchMask::FULL);
        assert!(matches!(res, Err(Error::IncompatibleMask { .. })));
    }

    #[test]
    fn report_echoes_config() {
        let (model, ds) = small();
        let fw = FusionWeights { alpha: 0.7, beta: 0.2 };
        let r = evaluate_model(&model, &ds, Regime::Closed, fw, 99).unwrap();
        assert_eq!((r.config.alpha, r.config.beta, r.config.seed), (0.7, 0.2, 99));
        assert_eq!(r.config.mask, "com+sor+osr");
        assert!(r.curve.windows(2).all(|w| w[0].bias < w[1].bias));
        for v in [r.metrics.seen, r.metrics.unseen, r.metrics.hm, r.metrics.auc] {
            assert!((0.0..=100.0).contains(&v));
        }
    }
}
