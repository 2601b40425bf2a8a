//! JSON experiment description.

use std::collections::BTreeMap;
use std::fmt;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{CliError, CliResult};

/// Training algorithms the runner knows about.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Method {
    Elm,
    Relm,
    Orelm,
    Grelm,
    Gorelm,
    Irelm,
    Igorelm,
    Ielm,
    Emelm,
}

impl Method {
    pub const ALL: [Method; 9] = [
        Method::Elm,
        Method::Relm,
        Method::Orelm,
        Method::Grelm,
        Method::Gorelm,
        Method::Irelm,
        Method::Igorelm,
        Method::Ielm,
        Method::Emelm,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Method::Elm => "elm",
            Method::Relm => "relm",
            Method::Orelm => "orelm",
            Method::Grelm => "grelm",
            Method::Gorelm => "gorelm",
            Method::Irelm => "irelm",
            Method::Igorelm => "igorelm",
            Method::Ielm => "ielm",
            Method::Emelm => "emelm",
        }
    }

    pub fn parse(s: &str) -> Option<Method> {
        Method::ALL.into_iter().find(|m| m.name() == s)
    }

    /// Which hyperparameters the method takes.
    pub fn tuning(self) -> Tuning {
        match self {
            Method::Elm | Method::Ielm | Method::Emelm => Tuning::None,
            Method::Relm | Method::Orelm | Method::Irelm => Tuning::C,
            Method::Grelm => Tuning::CAlpha,
            Method::Gorelm | Method::Igorelm => Tuning::LambdaAlpha,
        }
    }

    /// Method whose search result this one reuses; incremental variants share
    /// the hyperparameters of their batch counterpart.
    pub fn search_key(self) -> Method {
        match self {
            Method::Irelm => Method::Relm,
            Method::Igorelm => Method::Gorelm,
            m => m,
        }
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Tuning {
    None,
    C,
    CAlpha,
    LambdaAlpha,
}

/// Where the data comes from.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "format", rename_all = "lowercase", deny_unknown_fields)]
pub enum DatasetSource {
    Arff {
        path: PathBuf,
        targets: usize,
    },
    Csv {
        path: PathBuf,
        targets: usize,
        #[serde(default = "yes")]
        has_header: bool,
        #[serde(default = "comma")]
        delimiter: char,
    },
    /// Generated smooth task, handy for smoke tests.
    Synthetic {
        samples: usize,
        features: usize,
        targets: usize,
        #[serde(default = "default_noise")]
        noise: f64,
        #[serde(default)]
        seed: u64,
    },
}

/// Fixed hyperparameters; anything absent is looked up in the search output.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MethodParams {
    pub c: Option<f64>,
    pub lambda: Option<f64>,
    pub alpha: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SearchConfig {
    /// Inclusive exponent range of the power-of-two grid for `C` or `λ`.
    #[serde(default = "default_exponents")]
    pub exponents: [i32; 2],
    #[serde(default = "default_alphas")]
    pub alphas: Vec<f64>,
    #[serde(default = "default_folds")]
    pub folds: usize,
}

impl Default for SearchConfig {
    fn default() -> Self {
        Self {
            exponents: default_exponents(),
            alphas: default_alphas(),
            folds: default_folds(),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct IncrementalConfig {
    pub initial: usize,
    pub batch: usize,
    pub max_total: usize,
}

impl Default for IncrementalConfig {
    fn default() -> Self {
        Self {
            initial: 100,
            batch: 100,
            max_total: 1000,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AdmmConfig {
    pub tau: f64,
    pub rho: f64,
    pub eps_abs: f64,
    pub eps_rel: f64,
    pub k_max: usize,
}

impl Default for AdmmConfig {
    fn default() -> Self {
        Self {
            tau: 1.0,
            rho: 1.0,
            eps_abs: 1e-3,
            eps_rel: 1e-2,
            k_max: 1000,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub name: String,
    pub dataset: DatasetSource,
    #[serde(default = "two_thirds")]
    pub train_fraction: f64,
    /// Defaults to a seed derived from `base_seed`.
    #[serde(default)]
    pub split_seed: Option<u64>,
    #[serde(default = "default_ratios")]
    pub ratios: Vec<f64>,
    pub methods: Vec<Method>,
    #[serde(default)]
    pub params: BTreeMap<Method, MethodParams>,
    #[serde(default)]
    pub search: SearchConfig,
    #[serde(default = "default_reps")]
    pub repetitions: usize,
    #[serde(default = "default_nodes")]
    pub hidden_nodes: usize,
    #[serde(default)]
    pub incremental: IncrementalConfig,
    #[serde(default = "default_orelm_iters")]
    pub orelm_iterations: usize,
    #[serde(default)]
    pub admm: AdmmConfig,
    #[serde(default)]
    pub base_seed: u64,
}

fn yes() -> bool {
    true
}
fn comma() -> char {
    ','
}
fn default_noise() -> f64 {
    0.05
}
fn default_exponents() -> [i32; 2] {
    [-20, 20]
}
fn default_alphas() -> Vec<f64> {
    vec![0.0, 0.25, 0.5, 0.75, 1.0]
}
fn default_folds() -> usize {
    5
}
fn two_thirds() -> f64 {
    2.0 / 3.0
}
fn default_ratios() -> Vec<f64> {
    vec![0.0, 0.2, 0.4]
}
fn default_reps() -> usize {
    100
}
fn default_nodes() -> usize {
    1000
}
fn default_orelm_iters() -> usize {
    20
}

impl ExperimentConfig {
    /// Reads and validates a config; relative dataset paths resolve against
    /// the config file's directory.
    pub fn load(path: &Path) -> CliResult<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| CliError::Config {
            path: path.to_path_buf(),
            message: e.to_string(),
        })?;
        let mut cfg: ExperimentConfig =
            serde_json::from_str(&text).map_err(|e| CliError::Config {
                path: path.to_path_buf(),
                message: e.to_string(),
            })?;
        let base = path.parent().unwrap_or(Path::new("."));
        if let DatasetSource::Arff { path: p, .. } | DatasetSource::Csv { path: p, .. } =
            &mut cfg.dataset
        {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        }
        cfg.validate().map_err(|message| CliError::Config {
            path: path.to_path_buf(),
            message,
        })?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<(), String> {
        if self.methods.is_empty() {
            return Err("`methods` must not be empty".into());
        }
        if self.repetitions == 0 {
            return Err("`repetitions` must be at least 1".into());
        }
        if self.hidden_nodes == 0 {
            return Err("`hidden_nodes` must be at least 1".into());
        }
        if self.ratios.is_empty() || self.ratios.iter().any(|r| !(0.0..=1.0).contains(r)) {
            return Err("`ratios` must be a non-empty list of values in [0, 1]".into());
        }
        if !(self.train_fraction > 0.0 && self.train_fraction < 1.0) {
            return Err("`train_fraction` must lie in (0, 1)".into());
        }
        let [lo, hi] = self.search.exponents;
        if lo > hi || self.search.alphas.is_empty() || self.search.folds < 2 {
            return Err("`search` needs lo <= hi, some alphas and at least 2 folds".into());
        }
        let inc = self.incremental;
        if inc.initial == 0 || inc.batch == 0 || inc.max_total < inc.initial {
            return Err(
                "`incremental` needs initial >= 1, batch >= 1, max_total >= initial".into(),
            );
        }
        if self.orelm_iterations == 0 {
            return Err("`orelm_iterations` must be at least 1".into());
        }
        let mut seen = self.methods.clone();
        seen.sort();
        seen.dedup();
        if seen.len() != self.methods.len() {
            return Err("`methods` lists a method twice".into());
        }
        Ok(())
    }

    pub fn split_seed(&self) -> u64 {
        self.split_seed
            .unwrap_or_else(|| gorelm::rng::derive_seed(self.base_seed, &[SPLIT_TAG]))
    }
}

pub(crate) const SPLIT_TAG: u64 = 0x5350_4c49;
pub(crate) const CONTAMINATION_TAG: u64 = 0x434f_4e54;
pub(crate) const SEARCH_TAG: u64 = 0x5345_4152;

/// File-name tag of an outlier ratio, in percent: 0.2 → `020`.
pub fn ratio_tag(ratio: f64) -> String {
    format!("{:03}", (ratio * 100.0).round() as u32)
}

/// Ratio in per-mille, the integer used when deriving seeds.
pub fn ratio_key(ratio: f64) -> u64 {
    (ratio * 1000.0).round() as u64
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn minimal_config_gets_defaults() {
        let cfg: ExperimentConfig = serde_json::from_str(
            r#"{"name":"t","dataset":{"format":"synthetic","samples":30,"features":3,"targets":2},"methods":["relm","gorelm"]}"#,
        )
        .unwrap();
        assert_eq!(cfg.repetitions, 100);
        assert_eq!(cfg.hidden_nodes, 1000);
        assert_eq!(cfg.ratios, vec![0.0, 0.2, 0.4]);
        assert_eq!(cfg.incremental, IncrementalConfig::default());
        assert!(cfg.validate().is_ok());
    }

    #[test]
    fn rejects_unknown_fields_and_bad_values() {
        let bad = r#"{"name":"t","dataset":{"format":"synthetic","samples":30,"features":3,"targets":2},"methods":["relm"],"colour":1}"#;
        assert!(serde_json::from_str::<ExperimentConfig>(bad).is_err());
        let mut cfg: ExperimentConfig = serde_json::from_str(
            r#"{"name":"t","dataset":{"format":"synthetic","samples":30,"features":3,"targets":2},"methods":["relm"]}"#,
        )
        .unwrap();
        cfg.ratios = vec![1.5];
        assert!(cfg.validate().is_err());
    }

    #[test]
    fn method_names_round_trip() {
        for m in Method::ALL {
            assert_eq!(Method::parse(m.name()), Some(m));
            assert_eq!(
                serde_json::to_string(&m).unwrap(),
                format!("\"{}\"", m.name())
            );
        }
    }

    #[test]
    fn tags() {
        assert_eq!(ratio_tag(0.2), "020");
        assert_eq!(ratio_tag(0.0), "000");
        assert_eq!(ratio_key(0.4), 400);
    }
}
