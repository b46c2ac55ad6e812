//! Command-line surface. Every flag overrides the config key of the same
//! name; failures print one JSON line `{"error": kind, "message": ...}` to
//! stderr and exit with a nonzero status.

use std::ffi::OsString;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};

use super::config::TrainConfig;
use super::train::{load_compatible, load_dataset, manifest_path, train_to_file, RunManifest};
use crate::dataset::{load_features, save_features, Regime};
use crate::error::{Error, Result};
use crate::eval::{evaluate_model, parse_alpha_grid, run_alpha_sweep, run_path_ablation};
use crate::model::BranchMask;
use crate::objective::FusionWeights;

#[derive(Debug, Parser)]
#[command(name = "lpr", version, about = "Primitive-relation compositional zero-shot learning")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Generate the synthetic dataset and write it as a feature file.
    GenData {
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
        #[command(flatten)]
        overrides: Overrides,
    },
    /// Train one model and write its checkpoint and manifest.
    Train {
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        data: Option<PathBuf>,
        #[arg(long)]
        out: Option<PathBuf>,
        #[command(flatten)]
        overrides: Overrides,
    },
    /// Evaluate a checkpoint on the test split.
    Eval {
        #[arg(long)]
        ckpt: PathBuf,
        #[arg(long)]
        data: PathBuf,
        #[arg(long, default_value = "closed")]
        regime: Regime,
        #[arg(long)]
        alpha: Option<f64>,
        #[arg(long)]
        beta: Option<f64>,
        /// Evaluate through a subset of the trained branches.
        #[arg(long)]
        branches: Option<BranchMask>,
        /// Report path without extension; defaults to beside the checkpoint.
        #[arg(long)]
        report: Option<PathBuf>,
    },
    /// Path ablation: one model per branch mask, open-world metrics.
    Ablate {
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        data: Option<PathBuf>,
        /// Directory to load checkpoints from and save new ones to.
        #[arg(long)]
        ckpt_dir: Option<PathBuf>,
        /// Fail instead of training when a checkpoint is missing.
        #[arg(long)]
        no_train: bool,
        #[command(flatten)]
        overrides: Overrides,
    },
    /// Inference-only sweep of the fusion weight α with β = 1 - α.
    SweepAlpha {
        #[arg(long)]
        ckpt: PathBuf,
        #[arg(long)]
        data: PathBuf,
        #[arg(long, default_value = "0.2:0.8:0.1")]
        grid: String,
        #[arg(long, default_value = "open")]
        regime: Regime,
        #[arg(long)]
        report: Option<PathBuf>,
    },
}

#[derive(Debug, Args)]
struct Overrides {
    #[arg(long)]
    epochs: Option<String>,
    #[arg(long)]
    batch_size: Option<String>,
    #[arg(long)]
    seed: Option<String>,
    #[arg(long)]
    branches: Option<String>,
    #[arg(long)]
    alpha: Option<String>,
    #[arg(long)]
    beta: Option<String>,
    #[arg(long)]
    lambda1: Option<String>,
    #[arg(long)]
    lambda2: Option<String>,
    #[arg(long)]
    profile: Option<String>,
    #[arg(long)]
    reports: Option<String>,
    /// Any other config key, as `key=value`. Repeatable.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    set: Vec<String>,
}

impl Overrides {
    fn pairs(&self, extra: &[(&str, Option<&Path>)]) -> Result<Vec<(String, String)>> {
        let mut out: Vec<(String, String)> = [
            ("epochs", &self.epochs),
            ("batch_size", &self.batch_size),
            ("seed", &self.seed),
            ("branches", &self.branches),
            ("alpha", &self.alpha),
            ("beta", &self.beta),
            ("lambda1", &self.lambda1),
            ("lambda2", &self.lambda2),
            ("profile", &self.profile),
            ("reports", &self.reports),
        ]
        .into_iter()
        .filter_map(|(k, v)| v.as_ref().map(|v| (k.to_string(), v.clone())))
        .collect();
        for kv in &self.set {
            let (k, v) = kv
                .split_once('=')
                .ok_or_else(|| Error::Config(format!("--set expects key=value, got {kv:?}")))?;
            out.push((k.trim().to_string(), v.trim().to_string()));
        }
        for (k, v) in extra {
            if let Some(v) = v {
                out.push((k.to_string(), v.display().to_string()));
            }
        }
        Ok(out)
    }
}

fn resolve_config(path: Option<&Path>, overrides: &[(String, String)]) -> Result<TrainConfig> {
    let (text, source) = match path {
        Some(p) => (std::fs::read_to_string(p)?, p.to_path_buf()),
        None => (String::new(), PathBuf::from("<defaults>")),
    };
    TrainConfig::parse_with_overrides(&text, &source, overrides)
}

fn sibling(path: &Path, suffix: &str) -> PathBuf {
    let mut s = path.as_os_str().to_owned();
    s.push(suffix);
    PathBuf::from(s)
}

/// Fusion weights and seed recorded beside a checkpoint, if any.
fn recorded(ckpt: &Path) -> (FusionWeights, u64) {
    match RunManifest::load(&manifest_path(ckpt)) {
        Ok(m) => (m.config.fusion, m.config.seed),
        Err(_) => {
            let d = TrainConfig::default();
            (d.fusion, d.seed)
        }
    }
}

fn execute(cli: Cli) -> Result<String> {
    match cli.command {
        Command::GenData { config, out, overrides } => {
            let mut cfg = resolve_config(config.as_deref(), &overrides.pairs(&[])?)?;
            cfg.data = None;
            let ds = load_dataset(&cfg)?;
            if let Some(dir) = out.parent().filter(|d| !d.as_os_str().is_empty()) {
                std::fs::create_dir_all(dir)?;
            }
            save_features(&out, &ds)?;
            Ok(format!(
                "wrote {} records ({} states, {} objects, dim {}) to {}\n",
                ds.records.len(),
                ds.space.num_states(),
                ds.space.num_objects(),
                ds.dim(),
                out.display()
            ))
        }
        Command::Train {
            config,
            data,
            out,
            overrides,
        } => {
            let cfg = resolve_config(
                config.as_deref(),
                &overrides.pairs(&[("data", data.as_deref()), ("out", out.as_deref())])?,
            )?;
            let out = cfg
                .out
                .clone()
                .ok_or_else(|| Error::Config("no checkpoint path (set --out or the out key)".into()))?;
            let ds = load_dataset(&cfg)?;
            let t = train_to_file(&cfg, &ds, &out)?;
            let trace: Vec<String> = t.manifest.loss_trace().iter().map(|l| format!("{l:.4}")).collect();
            Ok(format!(
                "trained {} epochs (best {}) in {:.1}s\nloss trace: {}\ncheckpoint {} sha256 {}\n",
                t.manifest.trace.len(),
                t.manifest.best_epoch,
                t.manifest.wall_clock_secs,
                trace.join(" "),
                out.display(),
                t.manifest.checkpoint_hash
            ))
        }
        Command::Eval {
            ckpt,
            data,
            regime,
            alpha,
            beta,
            branches,
            report,
        } => {
            let ds = load_features(&data)?;
            let mut model = load_compatible(&ckpt, &ds)?;
            let (mut fw, seed) = recorded(&ckpt);
            if let Some(a) = alpha {
                fw = FusionWeights::from_alpha(a);
            }
            if let Some(b) = beta {
                fw.beta = b;
            }
            if let Some(mask) = branches {
                model.check_mask(mask)?;
                model.mask = mask;
            }
            let r = evaluate_model(&model, &ds, regime, fw, seed)?;
            r.write(&report.unwrap_or_else(|| sibling(&ckpt, &format!(".eval-{regime}"))))?;
            Ok(r.to_table())
        }
        Command::Ablate {
            config,
            data,
            ckpt_dir,
            no_train,
            overrides,
        } => {
            let cfg = resolve_config(config.as_deref(), &overrides.pairs(&[("data", data.as_deref())])?)?;
            let ds = load_dataset(&cfg)?;
            let table = run_path_ablation(&cfg, &ds, ckpt_dir.as_deref(), !no_train)?;
            let dir = cfg.reports.clone().or(ckpt_dir).unwrap_or_else(|| PathBuf::from("."));
            table.write(&dir.join("ablation"))?;
            Ok(table.to_table())
        }
        Command::SweepAlpha {
            ckpt,
            data,
            grid,
            regime,
            report,
        } => {
            let ds = load_features(&data)?;
            let model = load_compatible(&ckpt, &ds)?;
            let table = run_alpha_sweep(&model, &ds, &parse_alpha_grid(&grid)?, regime)?;
            table.write(&report.unwrap_or_else(|| sibling(&ckpt, ".alpha-sweep")))?;
            Ok(table.to_table())
        }
    }
}

/// Parses `args` (including the program name) and runs the command,
/// returning what would be printed on success.
pub fn run_cli<I, T>(args: I) -> Result<String>
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = Cli::try_parse_from(args).map_err(|e| Error::Config(e.to_string().trim().replace('\n', " ")))?;
    execute(cli)
}

/// One-line machine-readable form of an error.
pub fn error_line(e: &Error) -> String {
    serde_json::json!({ "error": e.kind(), "message": e.to_string() }).to_string()
}

/// Process entry point: prints the result and returns the exit code.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) if !e.use_stderr() => {
            print!("{e}");
            return 0;
        }
        Err(e) => {
            eprintln!("{}", error_line(&Error::Config(e.to_string().trim().replace('\n', " "))));
            return 2;
        }
    };
    match execute(cli) {
        Ok(out) => {
            print!("{out}");
            0
        }
        Err(e) => {
            eprintln!("{}", error_line(&e));
            1
        }
    }
}
