//! Aggregation of one or more `results.csv` files.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use gorelm::eval::{friedman_test, nemenyi_cd, wilcoxon_signed_rank, Alternative};
use gorelm::Mat;

use crate::commands::{read_results, RunRecord};
use crate::config::{ratio_tag, Method};
use crate::error::{CliError, CliResult};

/// Significance level of the post-hoc critical difference.
pub const CD_ALPHA: f64 = 0.10;

/// Mean and sample standard deviation of one (dataset, method, ratio) cell.
#[derive(Clone, Debug, PartialEq)]
pub struct SummaryRow {
    pub dataset: String,
    pub method: Method,
    pub ratio: f64,
    pub runs: usize,
    pub failed: usize,
    pub test_mean: f64,
    pub test_std: f64,
    pub train_mean: f64,
    pub train_std: f64,
    pub train_s_mean: f64,
    pub nodes_mean: f64,
}

pub const SUMMARY_HEADER: &str =
    "dataset,method,ratio,runs,failed,test_mean,test_std,train_mean,train_std,train_s_mean,nodes_mean";

/// Dataset label of a results file: its stem, or its directory when the stem
/// is the default `results`.
pub fn dataset_label(path: &Path) -> String {
    let stem = path
        .file_stem()
        .and_then(|s| s.to_str())
        .unwrap_or("results");
    if stem == "results" {
        if let Some(dir) = path
            .parent()
            .and_then(|p| p.file_name())
            .and_then(|s| s.to_str())
        {
            return dir.to_string();
        }
    }
    stem.to_string()
}

fn mean_std(v: &[f64]) -> (f64, f64) {
    if v.is_empty() {
        return (f64::NAN, f64::NAN);
    }
    let n = v.len() as f64;
    let mean = v.iter().sum::<f64>() / n;
    if v.len() < 2 {
        return (mean, 0.0);
    }
    let var = v.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, var.sqrt())
}

type Key = (String, Method, u64);

fn ratio_bits(r: f64) -> u64 {
    r.to_bits()
}

/// Groups successful runs per (dataset, method, ratio).
pub fn summarize(data: &[(String, Vec<RunRecord>)]) -> Vec<SummaryRow> {
    let mut groups: BTreeMap<Key, Vec<&RunRecord>> = BTreeMap::new();
    for (name, recs) in data {
        for r in recs {
            groups
                .entry((name.clone(), r.method, ratio_bits(r.ratio)))
                .or_default()
                .push(r);
        }
    }
    let mut rows: Vec<SummaryRow> = groups
        .into_iter()
        .map(|((dataset, method, bits), recs)| {
            let ok: Vec<&&RunRecord> = recs.iter().filter(|r| r.ok()).collect();
            let test: Vec<f64> = ok.iter().filter_map(|r| r.test_arrmse).collect();
            let train: Vec<f64> = ok.iter().filter_map(|r| r.train_arrmse).collect();
            let secs: Vec<f64> = ok.iter().map(|r| r.train_s).collect();
            let nodes: Vec<f64> = ok.iter().map(|r| r.final_nodes as f64).collect();
            let (test_mean, test_std) = mean_std(&test);
            let (train_mean, train_std) = mean_std(&train);
            SummaryRow {
                dataset,
                method,
                ratio: f64::from_bits(bits),
                runs: recs.len(),
                failed: recs.len() - ok.len(),
                test_mean,
                test_std,
                train_mean,
                train_std,
                train_s_mean: mean_std(&secs).0,
                nodes_mean: mean_std(&nodes).0,
            }
        })
        .collect();
    rows.sort_by(|a, b| {
        a.dataset
            .cmp(&b.dataset)
            .then(a.ratio.total_cmp(&b.ratio))
            .then(a.method.cmp(&b.method))
    });
    rows
}

fn summary_csv(rows: &[SummaryRow]) -> String {
    let mut s = format!("{SUMMARY_HEADER}\n");
    for r in rows {
        let _ = writeln!(
            s,
            "{},{},{},{},{},{},{},{},{},{},{}",
            r.dataset,
            r.method,
            r.ratio,
            r.runs,
            r.failed,
            r.test_mean,
            r.test_std,
            r.train_mean,
            r.train_std,
            r.train_s_mean,
            r.nodes_mean
        );
    }
    s
}

fn summary_text(rows: &[SummaryRow]) -> String {
    let header = [
        "dataset",
        "ratio",
        "method",
        "test aRRMSE",
        "train aRRMSE",
        "train s",
        "nodes",
        "failed",
    ];
    let body: Vec<[String; 8]> = rows
        .iter()
        .map(|r| {
            [
                r.dataset.clone(),
                format!("{:.0}%", r.ratio * 100.0),
                r.method.to_string(),
                format!("{:.4} ± {:.4}", r.test_mean, r.test_std),
                format!("{:.4} ± {:.4}", r.train_mean, r.train_std),
                format!("{:.3}", r.train_s_mean),
                format!("{:.1}", r.nodes_mean),
                format!("{}/{}", r.failed, r.runs),
            ]
        })
        .collect();
    let mut width = header.map(|h| h.chars().count());
    for row in &body {
        for (w, cell) in width.iter_mut().zip(row) {
            *w = (*w).max(cell.chars().count());
        }
    }
    let line = |cells: &[String]| {
        let mut s = String::new();
        for (i, (c, w)) in cells.iter().zip(width).enumerate() {
            if i > 0 {
                s.push_str("  ");
            }
            let pad = w - c.chars().count();
            if i < 3 {
                s.push_str(c);
                s.push_str(&" ".repeat(pad));
            } else {
                s.push_str(&" ".repeat(pad));
                s.push_str(c);
            }
        }
        s.trim_end().to_string() + "\n"
    };
    let mut out = line(&header.map(String::from));
    for row in &body {
        out.push_str(&line(row));
    }
    out
}

/// A blocks × methods score table for one ratio.
struct Blocks {
    methods: Vec<Method>,
    labels: Vec<String>,
    scores: Mat,
}

/// Builds the comparison table. Blocks are datasets (scored by their mean)
/// or, with `per_run`, individual (dataset, repetition) pairs. Blocks missing
/// any method are dropped.
fn blocks(data: &[(String, Vec<RunRecord>)], ratio: f64, per_run: bool) -> Blocks {
    let mut cells: BTreeMap<(String, Option<usize>), BTreeMap<Method, Vec<f64>>> = BTreeMap::new();
    let mut methods = BTreeSet::new();
    for (name, recs) in data {
        for r in recs.iter().filter(|r| r.ratio.to_bits() == ratio.to_bits()) {
            methods.insert(r.method);
            if let (true, Some(score)) = (r.ok(), r.test_arrmse) {
                let block = (name.clone(), per_run.then_some(r.rep));
                cells
                    .entry(block)
                    .or_default()
                    .entry(r.method)
                    .or_default()
                    .push(score);
            }
        }
    }
    let methods: Vec<Method> = methods.into_iter().collect();
    let mut labels = Vec::new();
    let mut rows = Vec::new();
    for ((name, rep), per_method) in cells {
        if per_method.len() != methods.len() {
            continue;
        }
        labels.push(match rep {
            Some(rep) => format!("{name}#{rep}"),
            None => name,
        });
        rows.push(
            methods
                .iter()
                .map(|m| mean_std(&per_method[m]).0)
                .collect::<Vec<_>>(),
        );
    }
    let scores = if rows.is_empty() {
        Mat::zeros(0, methods.len())
    } else {
        Mat::from_rows(&rows)
    };
    Blocks {
        methods,
        labels,
        scores,
    }
}

fn fmt_reject(r: Option<f64>) -> String {
    r.map_or_else(|| "-".into(), |a| format!("{a}"))
}

/// Friedman plus critical difference for three or more methods, one-sided
/// Wilcoxon in both directions for two.
fn significance(
    data: &[(String, Vec<RunRecord>)],
    ratio: f64,
    per_run: bool,
    dir: &Path,
) -> CliResult<String> {
    let b = blocks(data, ratio, per_run);
    let n = b.labels.len();
    let k = b.methods.len();
    let mut text = format!(
        "ratio {:.0}%: {} methods over {} blocks\n",
        ratio * 100.0,
        k,
        n
    );
    if k >= 3 {
        if n < 2 {
            text.push_str("  Friedman test skipped: need at least 2 complete blocks\n");
            return Ok(text);
        }
        let fr = friedman_test(&b.scores).map_err(CliError::Solver)?;
        let cd = nemenyi_cd(k, n, CD_ALPHA).map_err(CliError::Solver)?;
        let _ = writeln!(
            text,
            "  Friedman chi2 = {:.4}, p = {:.4e}, rejected at {}; critical difference (alpha {CD_ALPHA}) = {:.4}",
            fr.test.statistic,
            fr.test.p_value,
            fmt_reject(fr.test.reject_at),
            cd
        );
        let mut csv = String::from("method,avg_rank,cd\n");
        for (m, r) in b.methods.iter().zip(&fr.average_ranks) {
            let _ = writeln!(text, "    {m:<8} average rank {r:.3}");
            let _ = writeln!(csv, "{m},{r},{cd}");
        }
        let path = dir.join(format!("friedman_r{}.csv", ratio_tag(ratio)));
        fs::write(&path, csv).map_err(|e| CliError::io(&path, e))?;
    } else if k == 2 {
        let a = b.scores.column(0);
        let c = b.scores.column(1);
        for (x, y, lo, hi) in [
            (&a, &c, b.methods[0], b.methods[1]),
            (&c, &a, b.methods[1], b.methods[0]),
        ] {
            match wilcoxon_signed_rank(x, y, Alternative::Less) {
                Ok(t) => {
                    let _ = writeln!(
                        text,
                        "  Wilcoxon {lo} < {hi}: W+ = {}, p = {:.4e}, rejected at {}",
                        t.statistic,
                        t.p_value,
                        fmt_reject(t.reject_at)
                    );
                }
                Err(e) => {
                    let _ = writeln!(text, "  Wilcoxon {lo} < {hi} skipped: {e}");
                }
            }
        }
    } else {
        text.push_str("  no comparison: a single method\n");
    }
    Ok(text)
}

fn boxplot_csv(data: &[(String, Vec<RunRecord>)]) -> String {
    let mut s = String::from("dataset,method,ratio,rep,test_arrmse\n");
    for (name, recs) in data {
        for r in recs.iter().filter(|r| r.ok()) {
            if let Some(v) = r.test_arrmse {
                let _ = writeln!(s, "{name},{},{},{},{v}", r.method, r.ratio, r.rep);
            }
        }
    }
    s
}

/// Reads the given results files and writes `summary.csv`, `summary.txt`,
/// `boxplot.csv` and one `friedman_rNNN.csv` per ratio with three or more
/// methods. Returns the text report.
pub fn cmd_report(inputs: &[PathBuf], out: &Path, per_run: bool) -> CliResult<String> {
    if inputs.is_empty() {
        return Err(CliError::Usage(
            "report needs at least one results file".into(),
        ));
    }
    let mut data = Vec::new();
    let mut labels = BTreeSet::new();
    for p in inputs {
        let label = dataset_label(p);
        if !labels.insert(label.clone()) {
            return Err(CliError::Usage(format!(
                "two inputs share the dataset label `{label}`"
            )));
        }
        data.push((label, read_results(p)?));
    }
    fs::create_dir_all(out).map_err(|e| CliError::io(out, e))?;
    let rows = summarize(&data);
    let mut text = summary_text(&rows);
    let write = |name: &str, body: &str| {
        let path = out.join(name);
        fs::write(&path, body).map_err(|e| CliError::io(&path, e))
    };
    write("summary.csv", &summary_csv(&rows))?;
    write("boxplot.csv", &boxplot_csv(&data))?;

    let ratios: BTreeSet<u64> = rows.iter().map(|r| r.ratio.to_bits()).collect();
    let mut ratios: Vec<f64> = ratios.into_iter().map(f64::from_bits).collect();
    ratios.sort_by(f64::total_cmp);
    text.push('\n');
    for r in ratios {
        text.push_str(&significance(&data, r, per_run, out)?);
    }
    write("summary.txt", &text)?;
    Ok(text)
}
