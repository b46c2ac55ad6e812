use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::sweep::{CurvePoint, Metrics};
use crate::dataset::Regime;
use crate::error::Result;

/// Inputs an evaluation was run with.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ConfigEcho {
    pub alpha: f64,
    pub beta: f64,
    pub mask: String,
    pub seed: u64,
}

/// Unbiased top-1 accuracies in percent. Diagnostic only.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Diagnostics {
    pub composition_accuracy: f64,
    pub state_accuracy: f64,
    pub object_accuracy: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub regime: Regime,
    pub metrics: Metrics,
    pub diagnostics: Diagnostics,
    pub config: ConfigEcho,
    /// Sorted by increasing bias.
    pub curve: Vec<CurvePoint>,
}

impl EvalReport {
    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn to_table(&self) -> String {
        let m = &self.metrics;
        let mut s = String::new();
        let _ = writeln!(s, "{:<8} {:>6} {:>6} {:>6} {:>6}", "regime", "S", "U", "HM", "AUC");
        let _ = writeln!(
            s,
            "{:<8} {:>6.1} {:>6.1} {:>6.1} {:>6.1}",
            self.regime.to_string(),
            m.seen,
            m.unseen,
            m.hm,
            m.auc
        );
        let c = &self.config;
        let _ = writeln!(
            s,
            "alpha={} beta={} branches={} seed={} curve_points={}",
            c.alpha,
            c.beta,
            c.mask,
            c.seed,
            self.curve.len()
        );
        s
    }

    /// Writes `<stem>.json` and `<stem>.txt`.
    pub fn write(&self, stem: &Path) -> Result<()> {
        write_pair(stem, &self.to_json()?, &self.to_table())
    }
}

/// Writes `<stem>.json` and `<stem>.txt`. Dots already in the stem are kept.
pub(crate) fn write_pair(stem: &Path, json: &str, text: &str) -> Result<()> {
    if let Some(dir) = stem.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir)?;
    }
    let with = |ext: &str| {
        let mut s = stem.as_os_str().to_owned();
        s.push(ext);
        std::path::PathBuf::from(s)
    };
    fs::write(with(".json"), json)?;
    fs::write(with(".txt"), text)?;
    Ok(())
}
