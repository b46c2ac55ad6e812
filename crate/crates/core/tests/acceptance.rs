//! Acceptance suite. Prints one PASS/FAIL line per criterion and exits
//! nonzero when a criterion fails that is not listed in
//! [`EXPECTED_FAILURES`].

mod common;

use std::time::Instant;

use lpr::dataset::{
    encode_features, generate_synthetic, load_features, save_features, Pair, Regime, Split, SyntheticConfig,
};
use lpr::diffmath::{argmax, Graph, Tensor};
use lpr::eval::{bias_sweep, evaluate_model, metrics, parse_alpha_grid, run_alpha_sweep, run_path_ablation, spearman};
use lpr::model::{
    encode_checkpoint, forward_all, load_checkpoint, save_checkpoint, BranchMask, LprModel,
    ModelConfig,
};
use lpr::objective::{
    check_loss_gradients, fuse, loss_sor, predict, BranchProbs, FusionWeights, LogitTriple, LossWeights, TrainTargets,
};
use lpr::runner::{checkpoint_meta, load_dataset, manifest_path, train, train_to_file, RunManifest, TrainConfig};
use rand::Rng;

/// Criteria that cannot hold on the reference run, with the reason.
///
/// 6: at the reference noise level every fusion weight reaches 100% seen
/// and unseen accuracy, so both rank correlations are undefined.
const EXPECTED_FAILURES: &[u32] = &[6];

struct Outcome {
    pass: bool,
    detail: String,
}

impl Outcome {
    fn new(pass: bool, detail: impl Into<String>) -> Self {
        Self {
            pass,
            detail: detail.into(),
        }
    }
}

type Check = fn() -> lpr::Result<Outcome>;

fn gradients() -> lpr::Result<Outcome> {
    let start = Instant::now();
    let mut worst = (String::new(), 0.0f64, 0u64);
    for seed in 1..=5u64 {
        let ds = generate_synthetic(&SyntheticConfig {
            num_states: 3,
            num_objects: 4,
            dim: 6,
            train_per_seen: 2,
            test_per_composition: 1,
            seed,
            ..SyntheticConfig::default()
        })?;
        let batch: Vec<usize> = ds.indices(Split::Train).into_iter().take(4).collect();
        let mut model = LprModel::new(ModelConfig::for_dim(ds.dim()), seed);
        for (name, err) in check_loss_gradients(&mut model, &ds, &batch, BranchMask::FULL, LossWeights::default(), 1e-5)? {
            if err > worst.1 {
                worst = (name, err, seed);
            }
        }
    }
    let secs = start.elapsed().as_secs_f64();
    Ok(Outcome::new(
        worst.1 < 1e-4 && secs < 60.0,
        format!("max relative error {:.2e} ({} at seed {}) over 5 seeds in {secs:.1}s", worst.1, worst.0, worst.2),
    ))
}

fn fusion_algebra() -> lpr::Result<Outcome> {
    let mut worst_sum = 0.0f64;
    let mut argmax_mismatches = 0;
    let mut samples = 0;
    for seed in 0..100u64 {
        let ds = generate_synthetic(&SyntheticConfig {
            num_states: 4,
            num_objects: 5,
            dim: 12,
            train_per_seen: 2,
            test_per_composition: 1,
            seed,
            ..SyntheticConfig::default()
        })?;
        let model = LprModel::new(ModelConfig::for_dim(ds.dim()), seed);
        let cands = ds.space.candidates(Regime::Open);
        let protos = ds.bank.prototypes(&ds.space, cands);
        let rows: Vec<usize> = ds.indices(Split::Test).into_iter().take(6).collect();
        let out = forward_all(&model, &ds.features(&rows), &protos)?;
        let mut rng = common::rng(seed);
        for i in 0..rows.len() {
            let p = BranchProbs::from_logits(&out.logits, i)?;
            let fw = FusionWeights {
                alpha: rng.random_range(0.0..1.0),
                beta: rng.random_range(0.0..1.0),
            };
            let sum: f64 = fuse(&p, fw, cands)?.iter().sum();
            worst_sum = worst_sum.max((sum - (fw.alpha + 2.0 * fw.beta)).abs());
            let com_only = fuse(&p, FusionWeights { alpha: 1.0, beta: 0.0 }, cands)?;
            if predict(&com_only) != argmax(out.logits.com.row(i)).unwrap() {
                argmax_mismatches += 1;
            }
            samples += 1;
        }
    }
    Ok(Outcome::new(
        worst_sum <= 1e-9 && argmax_mismatches == 0,
        format!(
            "{samples} samples over 100 seeds: max |sum - (alpha + 2 beta)| {worst_sum:.1e}, \
             {argmax_mismatches} argmax mismatches at alpha=1, beta=0"
        ),
    ))
}

fn closed_form() -> lpr::Result<Outcome> {
    let cands: Vec<Pair> = (0..8).flat_map(|s| (0..10).map(move |o| Pair::new(s, o))).take(48).collect();
    let picks = [0usize, 13, 47];
    let targets = TrainTargets::from_parts(
        &cands,
        picks.to_vec(),
        picks.iter().map(|&c| cands[c].state).collect(),
        picks.iter().map(|&c| cands[c].object).collect(),
    )?;
    let mut g = Graph::new();
    let zeros = |g: &mut Graph, n: usize| g.input(Tensor::zeros(&[picks.len(), n]));
    let triple = LogitTriple {
        composition: zeros(&mut g, 48),
        state: zeros(&mut g, 8),
        object: zeros(&mut g, 10),
    };
    let w = LossWeights {
        lambda1: 2.0,
        lambda2: 1.5,
    };
    let loss = loss_sor(&mut g, triple, &targets, w)?.loss;
    let got = g.scalar(loss);
    let expected = 2.0 * 48f64.ln() + 1.5 * (8f64.ln() + 10f64.ln());
    Ok(Outcome::new(
        (got - expected).abs() <= 1e-9,
        format!("uniform-logit relation loss {got:.12}, closed form {expected:.12}"),
    ))
}

fn sweep_oracle() -> lpr::Result<Outcome> {
    const CELLS: usize = 2520 * 400;
    let (mut curve_mismatch, mut metric_mismatch, mut worst_auc) = (0, 0, 0.0f64);
    let n = 200;
    for seed in 0..n {
        let mut rng = common::rng(1000 + seed);
        let p_inf = if seed % 2 == 0 { 0.0 } else { 0.25 };
        let (rows, labels, seen) = common::random_scores(&mut rng, 10, 12, p_inf);
        let curve = bias_sweep(&common::score_matrix(&rows, &labels, &seen))?;
        let lib: Vec<(f64, f64)> = common::collapse(curve.iter().map(|p| (p.seen, p.unseen)).collect());
        let oracle = common::brute_force_curve(&rows, &labels, &seen);
        if lib != oracle {
            curve_mismatch += 1;
        }
        let m = metrics(&curve);
        let best = |f: &dyn Fn(&(f64, f64)) -> f64| oracle.iter().map(f).fold(f64::NEG_INFINITY, f64::max);
        let hm = |&(s, u): &(f64, f64)| if s + u == 0.0 { 0.0 } else { 2.0 * s * u / (s + u) };
        let trapezoid: f64 = oracle.windows(2).map(|w| (w[1].0 - w[0].0).abs() * (w[0].1 + w[1].1) / 2.0).sum();
        if m.seen != 100.0 * best(&|p| p.0) || m.unseen != 100.0 * best(&|p| p.1) || m.hm != 100.0 * best(&hm) || m.auc != 100.0 * trapezoid {
            metric_mismatch += 1;
        }
        worst_auc = worst_auc.max((m.auc / 100.0 - common::riemann_auc(&oracle, CELLS)).abs());
    }
    Ok(Outcome::new(
        curve_mismatch == 0 && metric_mismatch == 0 && worst_auc <= 1e-6,
        format!(
            "{n} random matrices: {curve_mismatch} curve and {metric_mismatch} metric mismatches, \
             max |AUC - Riemann({CELLS})| {worst_auc:.1e}"
        ),
    ))
}

/// The reference configuration with enough feature noise that accuracies
/// stay below 100%. Used only for context lines, never for a verdict.
fn harder(cfg: &TrainConfig) -> TrainConfig {
    let mut hard = cfg.clone();
    hard.synthetic.noise = 0.3;
    hard
}

fn ablation_trend() -> lpr::Result<Outcome> {
    let start = Instant::now();
    let cfg = TrainConfig::default();
    let ds = load_dataset(&cfg)?;
    let table = run_path_ablation(&cfg, &ds, None, true)?;
    let secs = start.elapsed().as_secs_f64();
    let full = table.row(BranchMask::FULL).expect("full row").metrics;
    let com = table.row(BranchMask::COM).expect("com row").metrics;
    let mut detail = format!(
        "open world, full HM {:.1} AUC {:.1} vs com HM {:.1} AUC {:.1}, 7 models in {secs:.1}s",
        full.hm, full.auc, com.hm, com.auc
    );
    if full.hm == 100.0 && com.hm == 100.0 {
        detail += " (both saturated)";
        let hard = harder(&cfg);
        let ds = load_dataset(&hard)?;
        let hm_auc = |mask: BranchMask| -> lpr::Result<(f64, f64)> {
            let cfg = TrainConfig { branches: mask, ..hard.clone() };
            let m = evaluate_model(&train(&cfg, &ds)?.model, &ds, Regime::Open, cfg.fusion, cfg.seed)?.metrics;
            Ok((m.hm, m.auc))
        };
        let ((fh, fa), (ch, ca)) = (hm_auc(BranchMask::FULL)?, hm_auc(BranchMask::COM)?);
        detail += &format!(
            "; context at noise {}: full HM {fh:.1} AUC {fa:.1} vs com HM {ch:.1} AUC {ca:.1}",
            hard.synthetic.noise
        );
    }
    Ok(Outcome::new(full.hm >= com.hm && full.auc >= com.auc && secs < 600.0, detail))
}

fn alpha_trend() -> lpr::Result<Outcome> {
    let cfg = TrainConfig::default();
    let ds = load_dataset(&cfg)?;
    let model = train(&cfg, &ds)?.model;
    let table = run_alpha_sweep(&model, &ds, &parse_alpha_grid("0.2:0.8:0.1")?, Regime::Open)?;
    let rho_s = spearman(&table.alphas(), &table.seen());
    let rho_u = spearman(&table.alphas(), &table.unseen());
    let show = |r: Option<f64>| r.map_or("undefined".to_string(), |r| format!("{r:.3}"));
    let range = |v: Vec<f64>| {
        let lo = v.iter().copied().fold(f64::INFINITY, f64::min);
        let hi = v.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        format!("{lo:.1}..{hi:.1}")
    };
    let mut detail = format!(
        "rho(alpha, S) {} with S in {}, rho(alpha, U) {} with U in {}",
        show(rho_s),
        range(table.seen()),
        show(rho_u),
        range(table.unseen())
    );
    if rho_s.is_none() || rho_u.is_none() {
        let hard = harder(&cfg);
        let ds = load_dataset(&hard)?;
        let model = train(&hard, &ds)?.model;
        let t = run_alpha_sweep(&model, &ds, &table.alphas(), Regime::Open)?;
        detail += &format!(
            "; context at noise {}: rho(alpha, S) {}, rho(alpha, U) {}",
            hard.synthetic.noise,
            show(spearman(&t.alphas(), &t.seen())),
            show(spearman(&t.alphas(), &t.unseen()))
        );
    }
    Ok(Outcome::new(rho_s.is_some_and(|r| r >= 0.0) && rho_u.is_some_and(|r| r <= 0.0), detail))
}

fn training_sanity() -> lpr::Result<Outcome> {
    let dir = tempfile::tempdir()?;
    let ckpt = dir.path().join("reference.ckpt");
    // Early stopping off, so epoch 10 is always recorded.
    let cfg = TrainConfig {
        patience: 0,
        ..TrainConfig::default()
    };
    let ds = load_dataset(&cfg)?;
    let first = train_to_file(&cfg, &ds, &ckpt)?;
    let trace = first.manifest.loss_trace();
    let ratio = trace[9] / trace[0];

    let manifest = RunManifest::load(&manifest_path(&ckpt))?;
    let ds2 = load_dataset(&manifest.config)?;
    let again = train(&manifest.config, &ds2)?;
    let reproduced = ds2.content_hash() == manifest.dataset_hash
        && again.manifest.loss_trace() == manifest.loss_trace()
        && again.manifest.checkpoint_hash == manifest.checkpoint_hash;
    Ok(Outcome::new(
        ratio <= 0.5 && reproduced,
        format!(
            "epoch 1 loss {:.4}, epoch 10 loss {:.4} (ratio {ratio:.3}); rerun from manifest {}",
            trace[0],
            trace[9],
            if reproduced { "bit-identical" } else { "differs" }
        ),
    ))
}

fn persistence() -> lpr::Result<Outcome> {
    let dir = tempfile::tempdir()?;
    let mut problems = Vec::new();

    let ds = generate_synthetic(&SyntheticConfig::default())?;
    let fpath = dir.path().join("data.lprf");
    save_features(&fpath, &ds)?;
    let bytes = std::fs::read(&fpath)?;
    let back = load_features(&fpath)?;
    if bytes != encode_features(&ds) || back != ds || encode_features(&back) != bytes {
        problems.push("feature file round trip".to_string());
    }

    let model = LprModel::new(ModelConfig::for_dim(ds.dim()), 3);
    let meta = checkpoint_meta(&ds);
    let cpath = dir.path().join("model.ckpt");
    save_checkpoint(&cpath, &model, &meta)?;
    let cbytes = std::fs::read(&cpath)?;
    let (m2, meta2) = load_checkpoint(&cpath)?;
    if cbytes != encode_checkpoint(&model, &meta) || m2 != model || meta2 != meta {
        problems.push("checkpoint round trip".to_string());
    }

    let mut rejected = 0;
    let mut corrupt = |path: &std::path::Path, data: &[u8], load: &dyn Fn(&std::path::Path) -> lpr::Result<()>| {
        std::fs::write(path, data).unwrap();
        match load(path) {
            Err(e) if e.to_string().contains(&path.display().to_string()) => rejected += 1,
            Err(e) => problems.push(format!("error without path: {e}")),
            Ok(()) => problems.push(format!("corrupted {} loaded", path.display())),
        }
    };
    let load_f = |p: &std::path::Path| load_features(p).map(|_| ());
    let load_c = |p: &std::path::Path| load_checkpoint(p).map(|_| ());
    let fcut = dir.path().join("cut.lprf");
    let ccut = dir.path().join("cut.ckpt");
    let step_f = (bytes.len() / 300).max(1);
    let step_c = (cbytes.len() / 300).max(1);
    for cut in (0..bytes.len()).step_by(step_f) {
        corrupt(&fcut, &bytes[..cut], &load_f);
    }
    for cut in (0..cbytes.len()).step_by(step_c) {
        corrupt(&ccut, &cbytes[..cut], &load_c);
    }
    for pos in (0..cbytes.len()).step_by(step_c) {
        let mut flipped = cbytes.clone();
        flipped[pos] ^= 0x10;
        corrupt(&ccut, &flipped, &load_c);
    }
    // A flipped byte in a feature file with its sidecar present.
    for pos in (0..bytes.len()).step_by(step_f) {
        let mut flipped = bytes.clone();
        flipped[pos] ^= 0x10;
        corrupt(&fpath, &flipped, &load_f);
    }
    Ok(Outcome::new(
        problems.is_empty(),
        if problems.is_empty() {
            format!("bit-exact round trips; {rejected} corrupted files rejected with errors naming the file")
        } else {
            problems.join("; ")
        },
    ))
}

fn main() {
    let criteria: [(u32, &str, Check); 8] = [
        (1, "gradient correctness", gradients),
        (2, "fusion algebra", fusion_algebra),
        (3, "loss closed form", closed_form),
        (4, "sweep and metrics oracle", sweep_oracle),
        (5, "path ablation trend", ablation_trend),
        (6, "fusion weight trend", alpha_trend),
        (7, "training sanity", training_sanity),
        (8, "persistence", persistence),
    ];
    let mut unexpected = Vec::new();
    for (n, name, check) in criteria {
        let start = Instant::now();
        let outcome = check().unwrap_or_else(|e| Outcome::new(false, format!("error: {e}")));
        let status = if outcome.pass { "PASS" } else { "FAIL" };
        let note = if !outcome.pass && EXPECTED_FAILURES.contains(&n) { " [expected]" } else { "" };
        println!(
            "{status} criterion {n} ({name}): {} [{:.1}s]{note}",
            outcome.detail,
            start.elapsed().as_secs_f64()
        );
        if !outcome.pass && !EXPECTED_FAILURES.contains(&n) {
            unexpected.push(n);
        }
    }
    if !unexpected.is_empty() {
        println!("unexpected failures: {unexpected:?}");
        std::process::exit(1);
    }
}
