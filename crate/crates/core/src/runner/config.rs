//! Flat `key = value` configuration.
//!
//! Blank lines are ignored and `#` starts a comment. Every key is optional;
//! an empty file describes the reference synthetic experiment.
//!
//! | key | default | meaning |
//! |-----|---------|---------|
//! | `profile` | `synthetic` | hyperparameter preset, applied before explicit keys |
//! | `epochs` | 30 | training epochs (at least 1) |
//! | `batch_size` | 64 | training batch size |
//! | `seed` | 7 | root seed for initialization and shuffling |
//! | `patience` | 5 | epochs without validation improvement before stopping; 0 disables |
//! | `branches` | `com,sor,osr` | active branches |
//! | `lambda1`, `lambda2` | 2.0, 1.5 | relation-loss weights |
//! | `alpha` | 0.4 | composition-branch fusion weight |
//! | `beta` | `1 - alpha` | relation-branch fusion weight |
//! | `lr`, `adam_beta1`, `adam_beta2`, `adam_eps`, `weight_decay` | 5e-4, 0.9, 0.999, 1e-8, 1e-4 | optimizer |
//! | `data` | unset | feature file; when unset the synthetic generator is used |
//! | `out` | unset | checkpoint path |
//! | `reports` | unset | directory for experiment reports |
//! | `synthetic.<field>` | see [`SyntheticConfig`] | generator settings |

use std::collections::HashSet;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::dataset::SyntheticConfig;
use crate::diffmath::AdamW;
use crate::error::{Error, Result};
use crate::model::BranchMask;
use crate::objective::{FusionWeights, LossWeights};

/// Hyperparameter presets: `(name, α, λ1, λ2)`.
pub const KNOWN_PROFILES: [(&str, f64, f64, f64); 4] = [
    ("MIT-States", 0.4, 2.0, 1.5),
    ("UT-Zappos", 0.7, 3.0, 1.0),
    ("C-GQA", 0.4, 2.0, 1.5),
    ("synthetic", 0.4, 2.0, 1.5),
];

/// `(α, λ1, λ2)` for a named dataset.
pub fn hyperparameter_defaults(name: &str) -> Result<(f64, f64, f64)> {
    KNOWN_PROFILES
        .iter()
        .find(|(n, ..)| *n == name)
        .map(|&(_, a, l1, l2)| (a, l1, l2))
        .ok_or_else(|| {
            let names: Vec<&str> = KNOWN_PROFILES.iter().map(|p| p.0).collect();
            Error::Config(format!("unknown dataset {name:?}; known: {}", names.join(", ")))
        })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub profile: String,
    pub epochs: usize,
    pub batch_size: usize,
    pub seed: u64,
    pub patience: usize,
    pub branches: BranchMask,
    pub loss: LossWeights,
    pub fusion: FusionWeights,
    pub optimizer: AdamW,
    pub data: Option<PathBuf>,
    pub out: Option<PathBuf>,
    pub reports: Option<PathBuf>,
    pub synthetic: SyntheticConfig,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            profile: "synthetic".into(),
            epochs: 30,
            batch_size: 64,
            seed: 7,
            patience: 5,
            branches: BranchMask::FULL,
            loss: LossWeights::default(),
            fusion: FusionWeights::default(),
            optimizer: AdamW::default(),
            data: None,
            out: None,
            reports: None,
            synthetic: SyntheticConfig::default(),
        }
    }
}

fn parse_value<T: FromStr>(key: &str, value: &str) -> Result<T, String> {
    value
        .parse()
        .map_err(|_| format!("invalid value {value:?} for {key}"))
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.epochs == 0 {
            return Err(Error::Config("epochs must be at least 1".into()));
        }
        if self.batch_size == 0 {
            return Err(Error::Config("batch_size must be at least 1".into()));
        }
        let o = &self.optimizer;
        if !(o.lr > 0.0 && o.eps > 0.0 && (0.0..1.0).contains(&o.beta1) && (0.0..1.0).contains(&o.beta2) && o.weight_decay >= 0.0) {
            return Err(Error::Config(format!("invalid optimizer settings {o:?}")));
        }
        self.loss.validate()?;
        self.fusion.validate()?;
        if let Some(p) = &self.data {
            if !p.is_file() {
                return Err(Error::Config(format!("data file {} does not exist", p.display())));
            }
        } else {
            self.synthetic.validate()?;
        }
        Ok(())
    }

    /// Parses `key = value` lines on top of the defaults. `source` names the
    /// input in error messages.
    pub fn parse(text: &str, source: &Path) -> Result<Self> {
        Self::parse_with_overrides(text, source, &[])
    }

    /// [`TrainConfig::parse`], then `overrides` applied on top in order.
    pub fn parse_with_overrides(text: &str, source: &Path, overrides: &[(String, String)]) -> Result<Self> {
        let mut pairs = Vec::new();
        let mut keys = HashSet::new();
        for (n, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let err = |reason: String| Error::Parse {
                path: source.to_path_buf(),
                reason: format!("line {}: {reason}", n + 1),
            };
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| err(format!("expected key = value, got {line:?}")))?;
            let (k, v) = (k.trim(), v.trim());
            if !keys.insert(k.to_string()) {
                return Err(err(format!("duplicate key {k}")));
            }
            pairs.push((n + 1, k.to_string(), v.to_string()));
        }
        let file = pairs.iter().map(|(n, k, v)| (Some(*n), k.as_str(), v.as_str()));
        let flags = overrides.iter().map(|(k, v)| (None, k.as_str(), v.as_str()));
        Self::from_pairs(file.chain(flags), source)
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::parse(&std::fs::read_to_string(path)?, path)
    }

    /// Builds a config from `(line, key, value)` triples. `profile` is
    /// applied first and `beta` falls back to `1 - alpha`.
    pub fn from_pairs<'a>(pairs: impl IntoIterator<Item = (Option<usize>, &'a str, &'a str)>, source: &Path) -> Result<Self> {
        let pairs: Vec<_> = pairs.into_iter().collect();
        let mut cfg = Self::default();
        let at = |line: Option<usize>, reason: String| Error::Parse {
            path: source.to_path_buf(),
            reason: match line {
                Some(n) => format!("line {n}: {reason}"),
                None => reason,
            },
        };
        if let Some(&(line, _, v)) = pairs.iter().rev().find(|(_, k, _)| *k == "profile") {
            let (alpha, l1, l2) = hyperparameter_defaults(v).map_err(|e| at(line, e.to_string()))?;
            cfg.profile = v.to_string();
            cfg.fusion = FusionWeights::from_alpha(alpha);
            cfg.loss = LossWeights {
                lambda1: l1,
                lambda2: l2,
            };
        }
        let mut beta_set = false;
        for &(line, key, value) in &pairs {
            cfg.set(key, value).map_err(|reason| at(line, reason))?;
            beta_set |= key == "beta";
        }
        if !beta_set {
            cfg.fusion.beta = 1.0 - cfg.fusion.alpha;
        }
        Ok(cfg)
    }

    fn set(&mut self, key: &str, v: &str) -> Result<(), String> {
        let s = &mut self.synthetic;
        match key {
            "profile" => {}
            "epochs" => self.epochs = parse_value(key, v)?,
            "batch_size" => self.batch_size = parse_value(key, v)?,
            "seed" => self.seed = parse_value(key, v)?,
            "patience" => self.patience = parse_value(key, v)?,
            "branches" => self.branches = v.parse().map_err(|e: Error| e.to_string())?,
            "lambda1" => self.loss.lambda1 = parse_value(key, v)?,
            "lambda2" => self.loss.lambda2 = parse_value(key, v)?,
            "alpha" => self.fusion.alpha = parse_value(key, v)?,
            "beta" => self.fusion.beta = parse_value(key, v)?,
            "lr" => self.optimizer.lr = parse_value(key, v)?,
            "adam_beta1" => self.optimizer.beta1 = parse_value(key, v)?,
            "adam_beta2" => self.optimizer.beta2 = parse_value(key, v)?,
            "adam_eps" => self.optimizer.eps = parse_value(key, v)?,
            "weight_decay" => self.optimizer.weight_decay = parse_value(key, v)?,
            "data" => self.data = Some(PathBuf::from(v)),
            "out" => self.out = Some(PathBuf::from(v)),
            "reports" => self.reports = Some(PathBuf::from(v)),
            "synthetic.num_states" => s.num_states = parse_value(key, v)?,
            "synthetic.num_objects" => s.num_objects = parse_value(key, v)?,
            "synthetic.dim" => s.dim = parse_value(key, v)?,
            "synthetic.train_per_seen" => s.train_per_seen = parse_value(key, v)?,
            "synthetic.test_per_composition" => s.test_per_composition = parse_value(key, v)?,
            "synthetic.seen_fraction" => s.seen_fraction = parse_value(key, v)?,
            "synthetic.unseen_fraction" => s.unseen_fraction = parse_value(key, v)?,
            "synthetic.val_fraction" => s.val_fraction = parse_value(key, v)?,
            "synthetic.noise" => s.noise = parse_value(key, v)?,
            "synthetic.interaction" => s.interaction = parse_value(key, v)?,
            "synthetic.seed" => s.seed = parse_value(key, v)?,
            other => return Err(format!("unknown key {other:?}")),
        }
        Ok(())
    }

    /// Renders every field in the same format [`TrainConfig::parse`] reads.
    pub fn to_text(&self) -> String {
        let mut lines = vec![
            format!("profile = {}", self.profile),
            format!("epochs = {}", self.epochs),
            format!("batch_size = {}", self.batch_size),
            format!("seed = {}", self.seed),
            format!("patience = {}", self.patience),
            format!("branches = {}", self.branches),
            format!("lambda1 = {}", self.loss.lambda1),
            format!("lambda2 = {}", self.loss.lambda2),
            format!("alpha = {}", self.fusion.alpha),
            format!("beta = {}", self.fusion.beta),
            format!("lr = {}", self.optimizer.lr),
            format!("adam_beta1 = {}", self.optimizer.beta1),
            format!("adam_beta2 = {}", self.optimizer.beta2),
            format!("adam_eps = {}", self.optimizer.eps),
            format!("weight_decay = {}", self.optimizer.weight_decay),
        ];
        for (k, p) in [("data", &self.data), ("out", &self.out), ("reports", &self.reports)] {
            if let Some(p) = p {
                lines.push(format!("{k} = {}", p.display()));
            }
        }
        let s = &self.synthetic;
        lines.extend([
            format!("synthetic.num_states = {}", s.num_states),
            format!("synthetic.num_objects = {}", s.num_objects),
            format!("synthetic.dim = {}", s.dim),
            format!("synthetic.train_per_seen = {}", s.train_per_seen),
            format!("synthetic.test_per_composition = {}", s.test_per_composition),
            format!("synthetic.seen_fraction = {}", s.seen_fraction),
            format!("synthetic.unseen_fraction = {}", s.unseen_fraction),
            format!("synthetic.val_fraction = {}", s.val_fraction),
            format!("synthetic.noise = {}", s.noise),
            format!("synthetic.interaction = {}", s.interaction),
            format!("synthetic.seed = {}", s.seed),
        ]);
        lines.join("\n") + "\n"
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn parse(text: &str) -> Result<TrainConfig> {
        TrainConfig::parse(text, Path::new("test.cfg"))
    }

    #[test]
    fn empty_config_is_reference() {
        let cfg = parse("# nothing\n\n").unwrap();
        assert_eq!(cfg, TrainConfig::default());
        assert_eq!(cfg.fusion, FusionWeights { alpha: 0.4, beta: 0.6 });
        cfg.validate().unwrap();
    }

    #[test]
    fn keys_and_profiles() {
        let cfg = parse("profile = UT-Zappos\nepochs = 3 # short\nbranches = com+osr\n").unwrap();
        assert_eq!(cfg.epochs, 3);
        assert_eq!(cfg.loss, LossWeights { lambda1: 3.0, lambda2: 1.0 });
        assert_eq!(cfg.fusion.alpha, 0.7);
        assert!((cfg.fusion.beta - 0.3).abs() < 1e-15);
        assert_eq!(cfg.branches.to_string(), "com+osr");
        let cfg = parse("alpha = 0.9\nbeta = 2\nprofile = C-GQA\n").unwrap();
        assert_eq!(cfg.fusion, FusionWeights { alpha: 0.9, beta: 2.0 });
    }

    #[test]
    fn parse_errors_name_the_line() {
        let e = parse("epochs = 3\nbogus = 1\n").unwrap_err().to_string();
        assert!(e.contains("line 2") && e.contains("bogus"), "{e}");
        assert!(parse("epochs 3").is_err());
        assert!(parse("epochs = x").is_err());
        assert!(parse("seed = 1\nseed = 2").is_err());
        assert!(parse("epochs = 0").unwrap().validate().is_err());
    }

    #[test]
    fn overrides_win() {
        let o = vec![("epochs".to_string(), "4".to_string()), ("alpha".to_string(), "0.9".to_string())];
        let cfg = TrainConfig::parse_with_overrides("epochs = 3\nalpha = 0.5\n", Path::new("x"), &o).unwrap();
        assert_eq!(cfg.epochs, 4);
        assert_eq!(cfg.fusion.alpha, 0.9);
        assert!((cfg.fusion.beta - 0.1).abs() < 1e-15);
    }

    #[test]
    fn text_round_trip() {
        let mut cfg = parse("profile = UT-Zappos\nsynthetic.noise = 0.25\nout = /tmp/x.ckpt").unwrap();
        cfg.fusion.beta = 0.125;
        assert_eq!(parse(&cfg.to_text()).unwrap(), cfg);
    }

    #[test]
    fn known_profiles() {
        assert_eq!(hyperparameter_defaults("MIT-States").unwrap(), (0.4, 2.0, 1.5));
        assert_eq!(hyperparameter_defaults("UT-Zappos").unwrap(), (0.7, 3.0, 1.0));
        assert_eq!(hyperparameter_defaults("C-GQA").unwrap(), (0.4, 2.0, 1.5));
        assert_eq!(hyperparameter_defaults("synthetic").unwrap(), (0.4, 2.0, 1.5));
        let e = hyperparameter_defaults("ImageNet").unwrap_err().to_string();
        assert!(e.contains("MIT-States") && e.contains("UT-Zappos") && e.contains("C-GQA"));
    }
}
