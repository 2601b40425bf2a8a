//! The `prepare`, `search` and `run` commands.
//!
//! Output layout under `--out`:
//!
//! ```text
//! prepared/train.csv            clean, normalized training split
//! prepared/test.csv             normalized test split
//! prepared/normalization.json   min/max learned on the training split
//! prepared/train_rNNN.csv       training split with NNN% outliers
//! prepared/manifest_rNNN.csv    every replaced target value
//! search/<method>.json          selected hyperparameters
//! search/<method>_cv.csv        full cross-validation table
//! results.csv                   one record per (method, ratio, repetition)
//! ```

use std::fs::{self, File};
use std::io::{BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::time::Instant;

use gorelm::data::{
    contaminate, parse_arff, parse_csv, parse_csv_with, synthetic_mtr, write_csv,
    ContaminationSpec, Dataset, NormalizationMap,
};
use gorelm::eval::{arrmse, kfold_grid_search, pow2_grid, GridPoint, GridSpec};
use gorelm::rng::derive_seed;
use gorelm::Mat;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::config::{
    ratio_key, ratio_tag, DatasetSource, ExperimentConfig, Method, Tuning, CONTAMINATION_TAG,
    SEARCH_TAG,
};
use crate::error::{CliError, CliResult};
use crate::methods::{fit, untuned, uses_alpha, Chosen, Setup};

/// Loads the raw dataset named by the config.
pub fn load_dataset(source: &DatasetSource) -> CliResult<Dataset> {
    match source {
        DatasetSource::Arff { path, targets } => {
            let f = File::open(path).map_err(|e| CliError::io(path, e))?;
            parse_arff(BufReader::new(f), *targets).map_err(|e| CliError::data(path, e))
        }
        DatasetSource::Csv {
            path,
            targets,
            has_header,
            delimiter,
        } => {
            let f = File::open(path).map_err(|e| CliError::io(path, e))?;
            let delim = u8::try_from(*delimiter).map_err(|_| CliError::Config {
                path: path.clone(),
                message: format!("delimiter {delimiter:?} is not a single byte"),
            })?;
            parse_csv_with(BufReader::new(f), *targets, *has_header, delim)
                .map_err(|e| CliError::data(path, e))
        }
        DatasetSource::Synthetic {
            samples,
            features,
            targets,
            noise,
            seed,
        } => synthetic_mtr(*samples, *features, *targets, *noise, *seed)
            .map_err(|e| CliError::data(Path::new("<synthetic>"), e)),
    }
}

fn targets(source: &DatasetSource) -> usize {
    match source {
        DatasetSource::Arff { targets, .. }
        | DatasetSource::Csv { targets, .. }
        | DatasetSource::Synthetic { targets, .. } => *targets,
    }
}

pub fn prepared_dir(out: &Path) -> PathBuf {
    out.join("prepared")
}

pub fn search_dir(out: &Path) -> PathBuf {
    out.join("search")
}

fn train_path(out: &Path, ratio: f64) -> PathBuf {
    if ratio == 0.0 {
        prepared_dir(out).join("train.csv")
    } else {
        prepared_dir(out).join(format!("train_r{}.csv", ratio_tag(ratio)))
    }
}

fn create_dir(dir: &Path) -> CliResult<()> {
    fs::create_dir_all(dir).map_err(|e| CliError::io(dir, e))
}

fn write_text(path: &Path, text: &str) -> CliResult<()> {
    fs::write(path, text).map_err(|e| CliError::io(path, e))
}

fn write_dataset(path: &Path, ds: &Dataset) -> CliResult<()> {
    let f = File::create(path).map_err(|e| CliError::io(path, e))?;
    write_csv(ds, BufWriter::new(f)).map_err(|e| CliError::data(path, e))
}

fn read_dataset(path: &Path, m: usize) -> CliResult<Dataset> {
    let f = File::open(path)
        .map_err(|e| CliError::Usage(format!("{}: {e}; run `prepare` first", path.display())))?;
    parse_csv(BufReader::new(f), m, true).map_err(|e| CliError::data(path, e))
}

/// Splits, normalizes and contaminates; returns the files written.
pub fn cmd_prepare(cfg: &ExperimentConfig, out: &Path) -> CliResult<Vec<PathBuf>> {
    let raw = load_dataset(&cfg.dataset)?;
    let data_err = |e| CliError::data(Path::new(&cfg.name), e);
    let (train, test) =
        gorelm::data::split(&raw, cfg.train_fraction, cfg.split_seed()).map_err(data_err)?;
    let map = NormalizationMap::fit(&train);
    let train = map.apply(&train).map_err(data_err)?;
    let test = map.apply(&test).map_err(data_err)?;

    let dir = prepared_dir(out);
    create_dir(&dir)?;
    let mut written = Vec::new();
    let norm_path = dir.join("normalization.json");
    let json = serde_json::to_string_pretty(&map).expect("plain struct serializes");
    write_text(&norm_path, &json)?;
    written.push(norm_path);
    for (path, ds) in [
        (train_path(out, 0.0), &train),
        (dir.join("test.csv"), &test),
    ] {
        write_dataset(&path, ds)?;
        written.push(path);
    }
    for &ratio in cfg.ratios.iter().filter(|&&r| r > 0.0) {
        let seed = derive_seed(cfg.base_seed, &[CONTAMINATION_TAG, ratio_key(ratio)]);
        let spec = ContaminationSpec::fit(&train, ratio, seed).map_err(data_err)?;
        let c = contaminate(&train, &spec).map_err(data_err)?;
        let path = train_path(out, ratio);
        write_dataset(&path, &c.data)?;
        written.push(path);
        let manifest = dir.join(format!("manifest_r{}.csv", ratio_tag(ratio)));
        write_text(&manifest, &c.manifest_csv())?;
        written.push(manifest);
    }
    Ok(written)
}

/// Selected hyperparameters as stored in `search/<method>.json`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SearchOutcome {
    pub method: Method,
    pub reg: f64,
    pub alpha: f64,
    pub cv_arrmse: f64,
}

/// Methods whose hyperparameters must come from a search.
fn needs_search(cfg: &ExperimentConfig) -> Vec<Method> {
    let mut keys: Vec<Method> = cfg
        .methods
        .iter()
        .filter(|m| m.tuning() != Tuning::None && explicit(cfg, **m).is_none())
        .map(|m| m.search_key())
        .collect();
    keys.sort();
    keys.dedup();
    keys
}

fn explicit(cfg: &ExperimentConfig, m: Method) -> Option<Chosen> {
    let p = cfg
        .params
        .get(&m)
        .or_else(|| cfg.params.get(&m.search_key()));
    let reg = match m.tuning() {
        Tuning::None => return Some(untuned()),
        Tuning::C | Tuning::CAlpha => p?.c?,
        Tuning::LambdaAlpha => p?.lambda?,
    };
    let p = p?;
    let alpha = if uses_alpha(m) { p.alpha? } else { 0.0 };
    Some(Chosen { reg, alpha })
}

/// k-fold grid search on the clean training split for every method lacking
/// explicit hyperparameters.
pub fn cmd_search(cfg: &ExperimentConfig, out: &Path) -> CliResult<Vec<SearchOutcome>> {
    let m = targets(&cfg.dataset);
    let train = read_dataset(&train_path(out, 0.0), m)?;
    let dir = search_dir(out);
    create_dir(&dir)?;
    let setup = Setup::from_config(cfg);
    let [lo, hi] = cfg.search.exponents;
    let mut outcomes = Vec::new();
    for method in needs_search(cfg) {
        let grid = GridSpec {
            reg_grid: pow2_grid(lo, hi),
            alpha_grid: if uses_alpha(method) {
                cfg.search.alphas.clone()
            } else {
                vec![0.0]
            },
            folds: cfg.search.folds,
        };
        let trainer = |x: &Mat, t: &Mat, xe: &Mat, p: GridPoint, seed: u64| {
            fit(method, p.into(), &setup, x, t, seed)?.model.predict(xe)
        };
        let seed = derive_seed(cfg.base_seed, &[SEARCH_TAG, method as u64]);
        let res = kfold_grid_search(&train.x, &train.t, &grid, &trainer, seed)
            .map_err(CliError::Solver)?;
        write_text(&dir.join(format!("{method}_cv.csv")), &res.table_csv())?;
        let outcome = SearchOutcome {
            method,
            reg: res.best.reg,
            alpha: res.best.alpha,
            cv_arrmse: res.best_score,
        };
        let json = serde_json::to_string_pretty(&outcome).expect("plain struct serializes");
        write_text(&dir.join(format!("{method}.json")), &json)?;
        outcomes.push(outcome);
    }
    Ok(outcomes)
}

fn resolve(cfg: &ExperimentConfig, out: &Path, m: Method) -> CliResult<Chosen> {
    if let Some(c) = explicit(cfg, m) {
        return Ok(c);
    }
    let path = search_dir(out).join(format!("{}.json", m.search_key()));
    let text = fs::read_to_string(&path).map_err(|_| {
        CliError::Usage(format!(
            "no hyperparameters for {m}: set `params.{m}` in the config or run `search` first ({} missing)",
            path.display()
        ))
    })?;
    let s: SearchOutcome = serde_json::from_str(&text).map_err(|e| CliError::io(&path, e))?;
    Ok(Chosen {
        reg: s.reg,
        alpha: s.alpha,
    })
}

/// One training run.
#[derive(Clone, Debug, PartialEq)]
pub struct RunRecord {
    pub method: Method,
    pub ratio: f64,
    pub rep: usize,
    pub seed: u64,
    pub train_arrmse: Option<f64>,
    pub test_arrmse: Option<f64>,
    pub train_s: f64,
    pub test_s: f64,
    pub final_nodes: usize,
    pub status: String,
}

pub const RESULTS_HEADER: &str =
    "method,ratio,rep,seed,train_arrmse,test_arrmse,train_s,test_s,final_nodes,status";

impl RunRecord {
    pub fn ok(&self) -> bool {
        self.status == "ok"
    }

    fn csv_line(&self) -> String {
        let opt = |v: Option<f64>| v.map_or_else(String::new, |v| v.to_string());
        format!(
            "{},{},{},{},{},{},{},{},{},{}",
            self.method,
            self.ratio,
            self.rep,
            self.seed,
            opt(self.train_arrmse),
            opt(self.test_arrmse),
            self.train_s,
            self.test_s,
            self.final_nodes,
            self.status.replace([',', '\n'], ";")
        )
    }
}

/// Seed of one run: `derive_seed(base_seed, [ratio in per-mille, rep])`.
///
/// Methods share it, so within a repetition every method sees the same random
/// input weights (node blocks of incremental methods are derived from it too).
pub fn run_seed(base_seed: u64, ratio: f64, rep: usize) -> u64 {
    derive_seed(base_seed, &[ratio_key(ratio), rep as u64])
}

/// Trains every (method, ratio, repetition) cell and writes `results.csv`.
pub fn cmd_run(cfg: &ExperimentConfig, out: &Path) -> CliResult<Vec<RunRecord>> {
    let m = targets(&cfg.dataset);
    let test = read_dataset(&prepared_dir(out).join("test.csv"), m)?;
    let trains = cfg
        .ratios
        .iter()
        .map(|&r| read_dataset(&train_path(out, r), m))
        .collect::<CliResult<Vec<_>>>()?;
    let chosen = cfg
        .methods
        .iter()
        .map(|&meth| resolve(cfg, out, meth))
        .collect::<CliResult<Vec<_>>>()?;
    let setup = Setup::from_config(cfg);

    let cells: Vec<(usize, usize, usize)> = (0..cfg.methods.len())
        .flat_map(|mi| {
            (0..cfg.ratios.len())
                .flat_map(move |ri| (0..cfg.repetitions).map(move |rep| (mi, ri, rep)))
        })
        .collect();
    let mut records: Vec<RunRecord> = cells
        .par_iter()
        .map(|&(mi, ri, rep)| {
            let method = cfg.methods[mi];
            let ratio = cfg.ratios[ri];
            let seed = run_seed(cfg.base_seed, ratio, rep);
            one_run(
                method,
                chosen[mi],
                &setup,
                &trains[ri],
                &test,
                ratio,
                rep,
                seed,
            )
        })
        .collect();
    records.sort_by(|a, b| {
        a.method
            .cmp(&b.method)
            .then(a.ratio.total_cmp(&b.ratio))
            .then(a.rep.cmp(&b.rep))
    });

    create_dir(out)?;
    let path = out.join("results.csv");
    let mut text = format!("{RESULTS_HEADER}\n");
    for r in &records {
        text.push_str(&r.csv_line());
        text.push('\n');
    }
    write_text(&path, &text)?;
    Ok(records)
}

#[allow(clippy::too_many_arguments)]
fn one_run(
    method: Method,
    p: Chosen,
    setup: &Setup,
    train: &Dataset,
    test: &Dataset,
    ratio: f64,
    rep: usize,
    seed: u64,
) -> RunRecord {
    let mut rec = RunRecord {
        method,
        ratio,
        rep,
        seed,
        train_arrmse: None,
        test_arrmse: None,
        train_s: 0.0,
        test_s: 0.0,
        final_nodes: 0,
        status: "ok".into(),
    };
    let start = Instant::now();
    let fitted = fit(method, p, setup, &train.x, &train.t, seed);
    rec.train_s = start.elapsed().as_secs_f64();
    let fitted = match fitted {
        Ok(f) => f,
        Err(e) => {
            rec.status = format!("failed: {e}");
            return rec;
        }
    };
    rec.final_nodes = fitted.final_nodes;
    let start = Instant::now();
    let pred = fitted.model.predict(&test.x);
    rec.test_s = start.elapsed().as_secs_f64();
    let scores = pred.and_then(|pred| {
        let test_score = arrmse(&pred, &test.t)?.arrmse;
        let train_pred = fitted.model.predict(&train.x)?;
        Ok((arrmse(&train_pred, &train.t)?.arrmse, test_score))
    });
    match scores {
        Ok((tr, te)) => {
            rec.train_arrmse = Some(tr);
            rec.test_arrmse = Some(te);
            if fitted.final_nodes == 0 {
                rec.status = "failed: every hidden node was pruned".into();
            }
        }
        Err(e) => rec.status = format!("failed: {e}"),
    }
    rec
}

/// Parses a results CSV written by [`cmd_run`].
pub fn read_results(path: &Path) -> CliResult<Vec<RunRecord>> {
    let f = File::open(path).map_err(|e| CliError::io(path, e))?;
    let mut rdr = csv::Reader::from_reader(BufReader::new(f));
    let header = rdr.headers().map_err(|e| CliError::io(path, e))?.clone();
    if header.iter().collect::<Vec<_>>().join(",") != RESULTS_HEADER {
        return Err(CliError::io(
            path,
            format!("unexpected header, want `{RESULTS_HEADER}`"),
        ));
    }
    let bad = |line: usize, what: &str| CliError::io(path, format!("line {line}: bad {what}"));
    let mut out = Vec::new();
    for (i, rec) in rdr.records().enumerate() {
        let line = i + 2;
        let rec = rec.map_err(|e| CliError::io(path, e))?;
        let num = |k: usize, what: &str| rec[k].parse::<f64>().map_err(|_| bad(line, what));
        let opt = |k: usize, what: &str| {
            if rec[k].is_empty() {
                Ok(None)
            } else {
                num(k, what).map(Some)
            }
        };
        out.push(RunRecord {
            method: Method::parse(&rec[0]).ok_or_else(|| bad(line, "method"))?,
            ratio: num(1, "ratio")?,
            rep: rec[2].parse().map_err(|_| bad(line, "rep"))?,
            seed: rec[3].parse().map_err(|_| bad(line, "seed"))?,
            train_arrmse: opt(4, "train_arrmse")?,
            test_arrmse: opt(5, "test_arrmse")?,
            train_s: num(6, "train_s")?,
            test_s: num(7, "test_s")?,
            final_nodes: rec[8].parse().map_err(|_| bad(line, "final_nodes"))?,
            status: rec[9].to_string(),
        });
    }
    Ok(out)
}

/// Writes `text` to stdout, ignoring broken pipes.
pub fn print(text: &str) {
    let _ = std::io::stdout().write_all(text.as_bytes());
}
