//! Metrics, cross-validated grid search and rank-based tests.

use rand::seq::SliceRandom;
use rayon::prelude::*;
use statrs::distribution::{ChiSquared, ContinuousCDF, Normal};

use crate::error::{invalid, Error, Result};
use crate::linalg::Mat;
use crate::rng::seeded;

/// Per-target relative RMSE and their mean.
#[derive(Clone, Debug, PartialEq)]
pub struct MetricReport {
    pub per_target_rrmse: Vec<f64>,
    pub arrmse: f64,
}

/// RRMSE per column, `√(Σ(ŷ−t)² / Σ(t̄−t)²)`, with `t̄` the mean of `truth`.
pub fn arrmse(pred: &Mat, truth: &Mat) -> Result<MetricReport> {
    if pred.shape() != truth.shape() {
        return Err(Error::DimensionMismatch {
            op: "arrmse",
            left: pred.shape(),
            right: truth.shape(),
        });
    }
    let (n, m) = truth.shape();
    if n == 0 || m == 0 {
        return Err(invalid("truth", "needs at least one row and one column"));
    }
    let mut per = Vec::with_capacity(m);
    for j in 0..m {
        let col = truth.column(j);
        let mean = col.iter().sum::<f64>() / n as f64;
        let den: f64 = col.iter().map(|v| (v - mean) * (v - mean)).sum();
        if den == 0.0 {
            return Err(Error::ConstantTarget { column: j });
        }
        let num: f64 = (0..n).map(|i| (pred[(i, j)] - col[i]).powi(2)).sum();
        per.push((num / den).sqrt());
    }
    let arrmse = per.iter().sum::<f64>() / m as f64;
    Ok(MetricReport {
        per_target_rrmse: per,
        arrmse,
    })
}

/// Power-of-two grid `{2^lo, …, 2^hi}`.
pub fn pow2_grid(lo: i32, hi: i32) -> Vec<f64> {
    (lo..=hi).map(|e| 2f64.powi(e)).collect()
}

/// Candidate hyperparameters for a k-fold search.
#[derive(Clone, Debug, PartialEq)]
pub struct GridSpec {
    /// `C` or `λ`, depending on the method.
    pub reg_grid: Vec<f64>,
    /// Use `[0.0]` for methods without an elastic-net mix.
    pub alpha_grid: Vec<f64>,
    pub folds: usize,
}

impl GridSpec {
    pub fn validate(&self) -> Result<()> {
        if self.reg_grid.is_empty() || self.alpha_grid.is_empty() {
            return Err(invalid("grid", "grids must be non-empty"));
        }
        if self.folds < 2 {
            return Err(invalid(
                "folds",
                format!("need at least 2, got {}", self.folds),
            ));
        }
        Ok(())
    }

    /// Grid points in tie-break order: ascending regularization value, then ascending α.
    pub fn points(&self) -> Vec<GridPoint> {
        let mut regs = self.reg_grid.clone();
        regs.sort_by(f64::total_cmp);
        let mut alphas = self.alpha_grid.clone();
        alphas.sort_by(f64::total_cmp);
        regs.iter()
            .flat_map(|&reg| alphas.iter().map(move |&alpha| GridPoint { reg, alpha }))
            .collect()
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct GridPoint {
    pub reg: f64,
    pub alpha: f64,
}

/// A method that can be fitted on one split and scored on another.
pub trait Trainer: Sync {
    /// Trains on `(x, t)` with `point` and returns predictions for `x_eval`.
    fn fit_predict(
        &self,
        x: &Mat,
        t: &Mat,
        x_eval: &Mat,
        point: GridPoint,
        seed: u64,
    ) -> Result<Mat>;
}

impl<F> Trainer for F
where
    F: Fn(&Mat, &Mat, &Mat, GridPoint, u64) -> Result<Mat> + Sync,
{
    fn fit_predict(
        &self,
        x: &Mat,
        t: &Mat,
        x_eval: &Mat,
        point: GridPoint,
        seed: u64,
    ) -> Result<Mat> {
        self(x, t, x_eval, point, seed)
    }
}

/// One (grid point, fold) evaluation. `score` is `None` when the fold was skipped.
#[derive(Clone, Debug, PartialEq)]
pub struct CvRow {
    pub point: GridPoint,
    pub fold: usize,
    pub score: Option<f64>,
    pub note: Option<String>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct SearchResult {
    pub best: GridPoint,
    pub best_score: f64,
    pub table: Vec<CvRow>,
}

impl SearchResult {
    pub const CSV_HEADER: &'static str = "reg,alpha,fold,val_arrmse,note";

    pub fn table_csv(&self) -> String {
        let mut out = format!("{}\n", Self::CSV_HEADER);
        for r in &self.table {
            let score = r.score.map_or_else(String::new, |s| s.to_string());
            let note = r.note.as_deref().unwrap_or("").replace(',', ";");
            out.push_str(&format!(
                "{},{},{},{},{}\n",
                r.point.reg, r.point.alpha, r.fold, score, note
            ));
        }
        out
    }
}

/// Seeded fold labels: a shuffled index order dealt round-robin.
pub fn fold_assignment(n: usize, folds: usize, seed: u64) -> Vec<usize> {
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut seeded(seed));
    let mut label = vec![0; n];
    for (pos, &i) in order.iter().enumerate() {
        label[i] = pos % folds;
    }
    label
}

/// Mean validation aRRMSE for every grid point; the lowest wins, ties broken by
/// the order of [`GridSpec::points`].
pub fn kfold_grid_search(
    x: &Mat,
    t: &Mat,
    grid: &GridSpec,
    trainer: &dyn Trainer,
    seed: u64,
) -> Result<SearchResult> {
    grid.validate()?;
    if x.rows() != t.rows() {
        return Err(Error::DimensionMismatch {
            op: "kfold_grid_search",
            left: x.shape(),
            right: t.shape(),
        });
    }
    if x.rows() < grid.folds {
        return Err(invalid(
            "folds",
            format!("{} folds for {} samples", grid.folds, x.rows()),
        ));
    }
    let labels = fold_assignment(x.rows(), grid.folds, seed);
    let splits: Vec<(Mat, Mat, Mat, Mat)> = (0..grid.folds)
        .map(|f| {
            let (tr, va): (Vec<usize>, Vec<usize>) = (0..x.rows()).partition(|&i| labels[i] != f);
            (
                x.select_rows(&tr),
                t.select_rows(&tr),
                x.select_rows(&va),
                t.select_rows(&va),
            )
        })
        .collect();
    let points = grid.points();
    let jobs: Vec<(usize, usize)> = (0..points.len())
        .flat_map(|p| (0..grid.folds).map(move |f| (p, f)))
        .collect();
    let table: Vec<CvRow> = jobs
        .par_iter()
        .map(|&(p, f)| {
            let (xt, tt, xv, tv) = &splits[f];
            let point = points[p];
            let outcome = trainer
                .fit_predict(xt, tt, xv, point, seed)
                .and_then(|pred| arrmse(&pred, tv));
            let (score, note) = match outcome {
                Ok(r) => (Some(r.arrmse), None),
                Err(e) => (None, Some(e.to_string())),
            };
            CvRow {
                point,
                fold: f,
                score,
                note,
            }
        })
        .collect();

    let mut best: Option<(GridPoint, f64)> = None;
    for (p, point) in points.iter().enumerate() {
        let scores: Vec<f64> = table[p * grid.folds..(p + 1) * grid.folds]
            .iter()
            .filter_map(|r| r.score)
            .collect();
        if scores.is_empty() {
            continue;
        }
        let mean = scores.iter().sum::<f64>() / scores.len() as f64;
        if best.is_none_or(|(_, s)| mean < s) {
            best = Some((*point, mean));
        }
    }
    let (best, best_score) =
        best.ok_or_else(|| Error::EmptyPartition("every grid point failed on every fold".into()))?;
    Ok(SearchResult {
        best,
        best_score,
        table,
    })
}

/// A test statistic with its p-value.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct TestResult {
    pub statistic: f64,
    pub p_value: f64,
    /// Smallest of the conventional levels 0.01, 0.05, 0.10 at which the null is rejected.
    pub reject_at: Option<f64>,
}

impl TestResult {
    fn new(statistic: f64, p_value: f64) -> Self {
        let p_value = p_value.clamp(0.0, 1.0);
        let reject_at = [0.01, 0.05, 0.10].into_iter().find(|&a| p_value < a);
        Self {
            statistic,
            p_value,
            reject_at,
        }
    }

    pub fn rejects(&self, alpha: f64) -> bool {
        self.p_value < alpha
    }
}

/// Midranks (1-based) of `values`, ascending.
pub fn midranks(values: &[f64]) -> Vec<f64> {
    let mut idx: Vec<usize> = (0..values.len()).collect();
    idx.sort_by(|&a, &b| values[a].total_cmp(&values[b]));
    let mut ranks = vec![0.0; values.len()];
    let mut i = 0;
    while i < idx.len() {
        let mut j = i + 1;
        while j < idx.len() && values[idx[j]] == values[idx[i]] {
            j += 1;
        }
        let r = (i + j + 1) as f64 / 2.0;
        for &k in &idx[i..j] {
            ranks[k] = r;
        }
        i = j;
    }
    ranks
}

#[derive(Clone, Debug, PartialEq)]
pub struct FriedmanResult {
    pub test: TestResult,
    /// Mean rank per method; rank 1 is the lowest score.
    pub average_ranks: Vec<f64>,
}

/// Friedman test on a datasets × methods score table, lower is better.
///
/// The statistic carries the usual tie correction and is referred to χ² with
/// `k − 1` degrees of freedom.
pub fn friedman_test(scores: &Mat) -> Result<FriedmanResult> {
    let (n, k) = scores.shape();
    if n < 2 || k < 2 {
        return Err(invalid(
            "scores",
            format!("need >= 2 datasets and >= 2 methods, got {n}x{k}"),
        ));
    }
    let mut rank_sums = vec![0.0; k];
    let mut ties = 0.0;
    for i in 0..n {
        let r = midranks(scores.row(i));
        for (s, v) in rank_sums.iter_mut().zip(&r) {
            *s += v;
        }
        let mut sorted = r.clone();
        sorted.sort_by(f64::total_cmp);
        for g in sorted.chunk_by(|a, b| a == b) {
            let t = g.len() as f64;
            ties += t * t * t - t;
        }
    }
    let (nf, kf) = (n as f64, k as f64);
    let average_ranks: Vec<f64> = rank_sums.iter().map(|s| s / nf).collect();
    let ss: f64 = rank_sums.iter().map(|r| r * r).sum();
    let raw = 12.0 / (nf * kf * (kf + 1.0)) * ss - 3.0 * nf * (kf + 1.0);
    let correction = 1.0 - ties / (nf * (kf * kf * kf - kf));
    if correction <= 0.0 {
        return Ok(FriedmanResult {
            test: TestResult::new(0.0, 1.0),
            average_ranks,
        });
    }
    let stat = (raw / correction).max(0.0);
    let chi = ChiSquared::new(kf - 1.0).map_err(|e| invalid("k", e.to_string()))?;
    Ok(FriedmanResult {
        test: TestResult::new(stat, chi.sf(stat)),
        average_ranks,
    })
}

// Studentized range statistic over √2, k = 2..=10.
const Q_05: [f64; 9] = [
    1.960, 2.343, 2.569, 2.728, 2.850, 2.949, 3.031, 3.102, 3.164,
];
const Q_10: [f64; 9] = [
    1.645, 2.052, 2.291, 2.459, 2.589, 2.693, 2.780, 2.855, 2.920,
];

/// Nemenyi critical difference `q_α(k)·√(k(k+1)/(6N))`.
pub fn nemenyi_cd(k_methods: usize, n_datasets: usize, alpha: f64) -> Result<f64> {
    if !(2..=10).contains(&k_methods) {
        return Err(invalid(
            "k_methods",
            format!("tabulated for 2..=10, got {k_methods}"),
        ));
    }
    if n_datasets == 0 {
        return Err(invalid("n_datasets", "must be at least 1"));
    }
    let table = if (alpha - 0.05).abs() < 1e-12 {
        &Q_05
    } else if (alpha - 0.10).abs() < 1e-12 {
        &Q_10
    } else {
        return Err(invalid(
            "alpha",
            format!("tabulated for 0.05 and 0.10, got {alpha}"),
        ));
    };
    let k = k_methods as f64;
    Ok(table[k_methods - 2] * (k * (k + 1.0) / (6.0 * n_datasets as f64)).sqrt())
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Alternative {
    /// The differences `a − b` tend to be negative.
    Less,
    TwoSided,
}

/// Largest sample size that uses the exact null distribution.
pub const WILCOXON_EXACT_MAX: usize = 12;

/// Wilcoxon signed-rank test on paired samples; the statistic is `W⁺`, the
/// rank sum of the positive differences `a − b`.
pub fn wilcoxon_signed_rank(a: &[f64], b: &[f64], alternative: Alternative) -> Result<TestResult> {
    if a.len() != b.len() {
        return Err(invalid(
            "b",
            format!("length {} differs from {}", b.len(), a.len()),
        ));
    }
    let d: Vec<f64> = a
        .iter()
        .zip(b)
        .map(|(x, y)| x - y)
        .filter(|v| *v != 0.0)
        .collect();
    if d.is_empty() {
        return Ok(TestResult::new(0.0, 1.0));
    }
    if d.len() < 5 {
        return Err(invalid(
            "pairs",
            format!("need >= 5 non-zero differences, got {}", d.len()),
        ));
    }
    let ranks = midranks(&d.iter().map(|v| v.abs()).collect::<Vec<_>>());
    let w_plus: f64 = d
        .iter()
        .zip(&ranks)
        .filter(|(v, _)| **v > 0.0)
        .map(|(_, r)| r)
        .sum();
    let (lower, upper) = if d.len() <= WILCOXON_EXACT_MAX {
        exact_tails(&ranks, w_plus)
    } else {
        normal_tails(&ranks, w_plus)
    };
    let p = match alternative {
        Alternative::Less => lower,
        Alternative::TwoSided => (2.0 * lower.min(upper)).min(1.0),
    };
    Ok(TestResult::new(w_plus, p))
}

/// `P(W⁺ ≤ w)` and `P(W⁺ ≥ w)` under the sign-flip null, by counting over
/// doubled (integer) ranks.
fn exact_tails(ranks: &[f64], w: f64) -> (f64, f64) {
    let twice: Vec<usize> = ranks.iter().map(|r| (2.0 * r).round() as usize).collect();
    let total: usize = twice.iter().sum();
    let mut counts = vec![0.0f64; total + 1];
    counts[0] = 1.0;
    for &r in &twice {
        for s in (r..=total).rev() {
            counts[s] += counts[s - r];
        }
    }
    let all = 2f64.powi(ranks.len() as i32);
    let target = (2.0 * w).round() as usize;
    let lower: f64 = counts[..=target].iter().sum();
    let upper: f64 = counts[target..].iter().sum();
    (lower / all, upper / all)
}

fn normal_tails(ranks: &[f64], w: f64) -> (f64, f64) {
    let n = ranks.len() as f64;
    let mean = n * (n + 1.0) / 4.0;
    let mut sorted = ranks.to_vec();
    sorted.sort_by(f64::total_cmp);
    let ties: f64 = sorted
        .chunk_by(|a, b| a == b)
        .map(|g| {
            let t = g.len() as f64;
            t * t * t - t
        })
        .sum();
    let var = n * (n + 1.0) * (2.0 * n + 1.0) / 24.0 - ties / 48.0;
    if var <= 0.0 {
        return (1.0, 1.0);
    }
    let z = (w - mean) / var.sqrt();
    let normal = Normal::new(0.0, 1.0).expect("standard normal");
    (normal.cdf(z), normal.sf(z))
}
