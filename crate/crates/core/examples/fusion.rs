// Fused open-world scores for a few test samples of an untrained model:
// the seven branch distributions, the weighted sum over candidates, and
// the same scores with the relation branches masked out.

use lpr::dataset::{generate_synthetic, Regime, Split, SyntheticConfig};
use lpr::model::{forward_all, BranchMask, LprModel, ModelConfig};
use lpr::objective::{fuse, fuse_masked, predict, BranchProbs, FusionWeights};

pub fn run_example() -> lpr::Result<()> {
    let ds = generate_synthetic(&SyntheticConfig::default())?;
    let model = LprModel::new(ModelConfig::for_dim(ds.dim()), 7);
    let candidates = ds.space.candidates(Regime::Open);
    let protos = ds.bank.prototypes(&ds.space, candidates);
    let rows: Vec<usize> = ds.indices(Split::Test).into_iter().step_by(97).take(4).collect();
    let out = forward_all(&model, &ds.features(&rows), &protos)?;

    let fw = FusionWeights::default();
    println!("alpha {} beta {}; fused scores sum to alpha + 2 beta = {}", fw.alpha, fw.beta, fw.alpha + 2.0 * fw.beta);
    for (i, &r) in rows.iter().enumerate() {
        let p = BranchProbs::from_logits(&out.logits, i)?;
        let full = fuse(&p, fw, candidates)?;
        let com_only = fuse_masked(&p, fw, BranchMask::COM, candidates)?;
        let name = |c: usize| ds.space.name(candidates[c]);
        println!(
            "sample {r} ({}): full -> {} (sum {:.6}), com only -> {} (sum {:.6})",
            ds.space.name(ds.records[r].label),
            name(predict(&full)),
            full.iter().sum::<f64>(),
            name(predict(&com_only)),
            com_only.iter().sum::<f64>()
        );
    }
    Ok(())
}

#[allow(dead_code)]
fn main() -> lpr::Result<()> {
    run_example()
}
