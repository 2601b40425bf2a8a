//! Dataset ingestion, splitting, normalization and outlier contamination.

use std::io::{BufRead, Read, Write};

use rand::seq::SliceRandom;
use rand::Rng as _;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::linalg::Mat;
use crate::rng::seeded;

/// Features `x` (N×n) and targets `t` (N×m) with column names.
#[derive(Clone, Debug, PartialEq)]
pub struct Dataset {
    pub x: Mat,
    pub t: Mat,
    pub feature_names: Vec<String>,
    pub target_names: Vec<String>,
}

impl Dataset {
    pub fn new(
        x: Mat,
        t: Mat,
        feature_names: Vec<String>,
        target_names: Vec<String>,
    ) -> Result<Self> {
        if x.rows() != t.rows() {
            return Err(Error::DimensionMismatch {
                op: "dataset",
                left: x.shape(),
                right: t.shape(),
            });
        }
        if x.rows() == 0 {
            return Err(Error::EmptyPartition("dataset has no rows".into()));
        }
        if feature_names.len() != x.cols() || target_names.len() != t.cols() {
            return Err(invalid("names", "name counts must match column counts"));
        }
        Ok(Self {
            x,
            t,
            feature_names,
            target_names,
        })
    }

    /// Dataset with synthetic names `x1..xn`, `t1..tm`.
    pub fn unnamed(x: Mat, t: Mat) -> Result<Self> {
        let f = (1..=x.cols()).map(|i| format!("x{i}")).collect();
        let g = (1..=t.cols()).map(|i| format!("t{i}")).collect();
        Self::new(x, t, f, g)
    }

    pub fn len(&self) -> usize {
        self.x.rows()
    }

    pub fn is_empty(&self) -> bool {
        self.x.rows() == 0
    }

    /// Rows by index, keeping names.
    pub fn select(&self, idx: &[usize]) -> Self {
        Self {
            x: self.x.select_rows(idx),
            t: self.t.select_rows(idx),
            feature_names: self.feature_names.clone(),
            target_names: self.target_names.clone(),
        }
    }

    fn from_rows(rows: Vec<Vec<f64>>, names: Vec<String>, m: usize) -> Result<Self> {
        let width = names.len();
        if m == 0 || m >= width {
            return Err(invalid(
                "m",
                format!("need 1 <= m < {width} columns, got {m}"),
            ));
        }
        if rows.is_empty() {
            return Err(Error::EmptyPartition("no data rows".into()));
        }
        let n = width - m;
        let x = Mat::from_fn(rows.len(), n, |i, j| rows[i][j]);
        let t = Mat::from_fn(rows.len(), m, |i, j| rows[i][n + j]);
        let mut names = names;
        let target_names = names.split_off(n);
        Self::new(x, t, names, target_names)
    }
}

fn strip_quotes(s: &str) -> &str {
    let b = s.as_bytes();
    if b.len() >= 2 && (b[0] == b'\'' || b[0] == b'"') && b[b.len() - 1] == b[0] {
        &s[1..s.len() - 1]
    } else {
        s
    }
}

/// Splits an `@attribute` declaration body into (name, type).
fn attribute_parts(rest: &str) -> Option<(String, String)> {
    let rest = rest.trim();
    let (name, tail) = match rest.chars().next()? {
        q @ ('\'' | '"') => {
            let end = rest[1..].find(q)? + 1;
            (rest[1..end].to_string(), &rest[end + 1..])
        }
        _ => {
            let end = rest.find(char::is_whitespace)?;
            (rest[..end].to_string(), &rest[end..])
        }
    };
    let ty = tail.trim();
    if ty.is_empty() {
        return None;
    }
    Some((name, ty.to_string()))
}

/// Parses the numeric subset of ARFF. The last `m` attributes are targets.
pub fn parse_arff(reader: impl BufRead, m: usize) -> Result<Dataset> {
    let mut names = Vec::new();
    let mut rows: Vec<Vec<f64>> = Vec::new();
    let mut in_data = false;
    for (idx, line) in reader.lines().enumerate() {
        let line_no = idx + 1;
        let line = line?;
        let text = line.trim();
        if text.is_empty() || text.starts_with('%') {
            continue;
        }
        if !in_data {
            let lower = text.to_ascii_lowercase();
            if lower.starts_with("@relation") {
                continue;
            }
            if lower.starts_with("@attribute") {
                let (name, ty) =
                    attribute_parts(&text["@attribute".len()..]).ok_or_else(|| Error::Parse {
                        line: line_no,
                        message: "malformed @attribute".into(),
                    })?;
                if !matches!(
                    ty.to_ascii_lowercase().as_str(),
                    "numeric" | "real" | "integer"
                ) {
                    return Err(Error::Unsupported {
                        line: line_no,
                        feature: format!("attribute `{name}` of type {ty}"),
                    });
                }
                names.push(name);
                continue;
            }
            if lower.starts_with("@data") {
                in_data = true;
                continue;
            }
            return Err(Error::Parse {
                line: line_no,
                message: format!("unexpected header line `{text}`"),
            });
        }
        if text.starts_with('{') {
            return Err(Error::Unsupported {
                line: line_no,
                feature: "sparse data rows".into(),
            });
        }
        let cells: Vec<&str> = text.split(',').map(str::trim).collect();
        if cells.len() != names.len() {
            return Err(Error::Parse {
                line: line_no,
                message: format!("expected {} values, found {}", names.len(), cells.len()),
            });
        }
        let mut row = Vec::with_capacity(cells.len());
        for cell in cells {
            if cell == "?" {
                return Err(Error::MissingValue { line: line_no });
            }
            let v: f64 = strip_quotes(cell).parse().map_err(|_| Error::Parse {
                line: line_no,
                message: format!("`{cell}` is not a number"),
            })?;
            if !v.is_finite() {
                return Err(Error::Parse {
                    line: line_no,
                    message: format!("`{cell}` is not finite"),
                });
            }
            row.push(v);
        }
        rows.push(row);
    }
    if !in_data {
        return Err(Error::Parse {
            line: 0,
            message: "missing @data section".into(),
        });
    }
    Dataset::from_rows(rows, names, m)
}

/// Comma-separated numeric table whose last `m` columns are targets.
pub fn parse_csv(reader: impl Read, m: usize, has_header: bool) -> Result<Dataset> {
    parse_csv_with(reader, m, has_header, b',')
}

pub fn parse_csv_with(
    reader: impl Read,
    m: usize,
    has_header: bool,
    delimiter: u8,
) -> Result<Dataset> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(false)
        .delimiter(delimiter)
        .flexible(true)
        .trim(csv::Trim::All)
        .from_reader(reader);
    let mut names: Option<Vec<String>> = None;
    let mut rows = Vec::new();
    let mut width = None;
    for (i, rec) in rdr.records().enumerate() {
        let rec = rec.map_err(|e| Error::Parse {
            line: i + 1,
            message: e.to_string(),
        })?;
        if *width.get_or_insert(rec.len()) != rec.len() {
            return Err(Error::Parse {
                line: i + 1,
                message: format!(
                    "expected {} fields, found {}",
                    width.unwrap_or(0),
                    rec.len()
                ),
            });
        }
        if i == 0 && has_header {
            names = Some(rec.iter().map(str::to_string).collect());
            continue;
        }
        let row = rec
            .iter()
            .enumerate()
            .map(|(j, cell)| match cell.parse::<f64>() {
                Ok(v) if v.is_finite() => Ok(v),
                _ => Err(Error::Cell {
                    row: i + 1,
                    col: j + 1,
                    message: format!("`{cell}` is not a finite number"),
                }),
            })
            .collect::<Result<Vec<f64>>>()?;
        rows.push(row);
    }
    let width = width.ok_or_else(|| Error::EmptyPartition("empty CSV".into()))?;
    let names = names.unwrap_or_else(|| {
        let n = width.saturating_sub(m);
        (1..=n)
            .map(|i| format!("x{i}"))
            .chain((1..=m).map(|i| format!("t{i}")))
            .collect()
    });
    Dataset::from_rows(rows, names, m)
}

/// Writes `ds` as CSV with a header; values use the shortest round-trip form.
pub fn write_csv(ds: &Dataset, writer: impl Write) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    let io = |e: csv::Error| Error::Io(e.to_string());
    w.write_record(ds.feature_names.iter().chain(&ds.target_names))
        .map_err(io)?;
    for i in 0..ds.len() {
        let rec: Vec<String> =
            ds.x.row(i)
                .iter()
                .chain(ds.t.row(i))
                .map(|v| v.to_string())
                .collect();
        w.write_record(&rec).map_err(io)?;
    }
    w.flush()?;
    Ok(())
}

/// Number of training rows for a fraction, `⌈frac·N⌉`.
pub fn train_size(n: usize, train_fraction: f64) -> usize {
    // guard against products like 0.7·10 landing just above an integer
    (train_fraction * n as f64 - 1e-9).ceil().max(0.0) as usize
}

/// Seeded shuffle, then the first `⌈frac·N⌉` rows train and the rest test.
pub fn split(ds: &Dataset, train_fraction: f64, seed: u64) -> Result<(Dataset, Dataset)> {
    if !(train_fraction > 0.0 && train_fraction < 1.0) {
        return Err(invalid(
            "train_fraction",
            format!("must lie in (0, 1), got {train_fraction}"),
        ));
    }
    let n = ds.len();
    let cut = train_size(n, train_fraction);
    if cut == 0 || cut >= n {
        return Err(Error::EmptyPartition(format!("{n} rows split at {cut}")));
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut seeded(seed));
    Ok((ds.select(&order[..cut]), ds.select(&order[cut..])))
}

/// Per-column min/max learned on a training split.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NormalizationMap {
    pub x_min: Vec<f64>,
    pub x_max: Vec<f64>,
    pub t_min: Vec<f64>,
    pub t_max: Vec<f64>,
}

fn column_ranges(m: &Mat) -> (Vec<f64>, Vec<f64>) {
    let mut lo = vec![f64::INFINITY; m.cols()];
    let mut hi = vec![f64::NEG_INFINITY; m.cols()];
    for i in 0..m.rows() {
        for (j, &v) in m.row(i).iter().enumerate() {
            lo[j] = lo[j].min(v);
            hi[j] = hi[j].max(v);
        }
    }
    (lo, hi)
}

fn to_unit(m: &Mat, lo: &[f64], hi: &[f64]) -> Mat {
    Mat::from_fn(m.rows(), m.cols(), |i, j| {
        let range = hi[j] - lo[j];
        if range > 0.0 {
            2.0 * (m[(i, j)] - lo[j]) / range - 1.0
        } else {
            0.0
        }
    })
}

fn from_unit(m: &Mat, lo: &[f64], hi: &[f64]) -> Mat {
    Mat::from_fn(m.rows(), m.cols(), |i, j| {
        let range = hi[j] - lo[j];
        if range > 0.0 {
            (m[(i, j)] + 1.0) * range / 2.0 + lo[j]
        } else {
            lo[j]
        }
    })
}

impl NormalizationMap {
    pub fn fit(train: &Dataset) -> Self {
        let (x_min, x_max) = column_ranges(&train.x);
        let (t_min, t_max) = column_ranges(&train.t);
        Self {
            x_min,
            x_max,
            t_min,
            t_max,
        }
    }

    /// Maps each training range onto `[−1, 1]`; values outside it are not clamped.
    pub fn apply(&self, ds: &Dataset) -> Result<Dataset> {
        self.check(ds)?;
        Ok(Dataset {
            x: to_unit(&ds.x, &self.x_min, &self.x_max),
            t: to_unit(&ds.t, &self.t_min, &self.t_max),
            ..ds.clone()
        })
    }

    pub fn invert(&self, ds: &Dataset) -> Result<Dataset> {
        self.check(ds)?;
        Ok(Dataset {
            x: from_unit(&ds.x, &self.x_min, &self.x_max),
            t: self.invert_targets(&ds.t),
            ..ds.clone()
        })
    }

    /// Back to original target units, e.g. for predictions.
    pub fn invert_targets(&self, t: &Mat) -> Mat {
        from_unit(t, &self.t_min, &self.t_max)
    }

    fn check(&self, ds: &Dataset) -> Result<()> {
        if ds.x.cols() != self.x_min.len() || ds.t.cols() != self.t_min.len() {
            return Err(Error::DimensionMismatch {
                op: "normalize",
                left: (self.x_min.len(), self.t_min.len()),
                right: (ds.x.cols(), ds.t.cols()),
            });
        }
        Ok(())
    }
}

/// Linear-interpolation quantile on sorted data, `h = (N−1)p`.
pub fn quantile_sorted(sorted: &[f64], p: f64) -> f64 {
    let h = (sorted.len() - 1) as f64 * p;
    let lo = h.floor() as usize;
    let hi = (lo + 1).min(sorted.len() - 1);
    sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo])
}

/// Per-column quartiles and interquartile range.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BoxplotStats {
    pub q1: Vec<f64>,
    pub q3: Vec<f64>,
    pub iqr: Vec<f64>,
}

pub fn boxplot_stats(targets: &Mat) -> Result<BoxplotStats> {
    if targets.rows() < 2 {
        return Err(invalid(
            "targets",
            format!("need at least 2 rows, got {}", targets.rows()),
        ));
    }
    let mut q1 = Vec::new();
    let mut q3 = Vec::new();
    for j in 0..targets.cols() {
        let mut col = targets.column(j);
        col.sort_by(f64::total_cmp);
        q1.push(quantile_sorted(&col, 0.25));
        q3.push(quantile_sorted(&col, 0.75));
    }
    let iqr = q1.iter().zip(&q3).map(|(a, b)| b - a).collect();
    Ok(BoxplotStats { q1, q3, iqr })
}

/// Recipe for replacing a fraction of training targets with outliers.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ContaminationSpec {
    pub ratio: f64,
    pub seed: u64,
    pub q1: Vec<f64>,
    pub q3: Vec<f64>,
    pub iqr: Vec<f64>,
}

impl ContaminationSpec {
    /// Quartiles fitted on `train`'s targets.
    pub fn fit(train: &Dataset, ratio: f64, seed: u64) -> Result<Self> {
        let s = boxplot_stats(&train.t)?;
        Ok(Self {
            ratio,
            seed,
            q1: s.q1,
            q3: s.q3,
            iqr: s.iqr,
        })
    }

    /// Closed low and high bands of column `j`.
    pub fn bands(&self, j: usize) -> ([f64; 2], [f64; 2]) {
        let (q1, q3, iqr) = (self.q1[j], self.q3[j], self.iqr[j]);
        (
            [q1 - 3.0 * iqr, q1 - 1.5 * iqr],
            [q3 + 1.5 * iqr, q3 + 3.0 * iqr],
        )
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Side {
    Low,
    High,
}

/// One replaced target value.
#[derive(Clone, Debug, PartialEq)]
pub struct Alteration {
    pub row: usize,
    pub column: usize,
    pub old_value: f64,
    pub new_value: f64,
    pub side: Side,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Contaminated {
    pub data: Dataset,
    /// Altered rows, ascending.
    pub rows: Vec<usize>,
    pub alterations: Vec<Alteration>,
}

impl Contaminated {
    pub const MANIFEST_HEADER: &'static str = "row_index,target_column,old_value,new_value,side";

    pub fn manifest_csv(&self) -> String {
        let mut out = format!("{}\n", Self::MANIFEST_HEADER);
        for a in &self.alterations {
            let side = match a.side {
                Side::Low => "low",
                Side::High => "high",
            };
            out.push_str(&format!(
                "{},{},{},{},{}\n",
                a.row, a.column, a.old_value, a.new_value, side
            ));
        }
        out
    }
}

/// Number of rows altered at `ratio`, `⌊ratio·N⌋`.
pub fn outlier_count(n: usize, ratio: f64) -> usize {
    (ratio * n as f64 + 1e-9).floor() as usize
}

/// Replaces every target of `⌊ratio·N⌋` randomly chosen rows with a uniform
/// draw from the low or high boxplot band, the side picked per value.
pub fn contaminate(train: &Dataset, spec: &ContaminationSpec) -> Result<Contaminated> {
    if !(0.0..=1.0).contains(&spec.ratio) {
        return Err(invalid(
            "ratio",
            format!("must lie in [0, 1], got {}", spec.ratio),
        ));
    }
    let m = train.t.cols();
    if spec.q1.len() != m || spec.q3.len() != m || spec.iqr.len() != m {
        return Err(invalid(
            "spec",
            "quartile vectors must match the target count",
        ));
    }
    let n = train.len();
    let mut rng = seeded(spec.seed);
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut rng);
    let mut rows = order[..outlier_count(n, spec.ratio)].to_vec();
    rows.sort_unstable();

    let mut data = train.clone();
    let mut alterations = Vec::with_capacity(rows.len() * m);
    for &i in &rows {
        for j in 0..m {
            let (low, high) = spec.bands(j);
            let (side, [a, b]) = if rng.gen_bool(0.5) {
                (Side::High, high)
            } else {
                (Side::Low, low)
            };
            let v = rng.gen_range(a..=b);
            alterations.push(Alteration {
                row: i,
                column: j,
                old_value: data.t[(i, j)],
                new_value: v,
                side,
            });
            data.t[(i, j)] = v;
        }
    }
    Ok(Contaminated {
        data,
        rows,
        alterations,
    })
}

/// Smooth synthetic multi-target task on `[−1, 1]ⁿ`.
///
/// Target `j` is `sin(aⱼ·x) + ½cos(bⱼ·x)` plus uniform noise of half-width
/// `noise`, with `aⱼ`, `bⱼ` drawn from `seed`.
pub fn synthetic_mtr(
    n_samples: usize,
    n_features: usize,
    n_targets: usize,
    noise: f64,
    seed: u64,
) -> Result<Dataset> {
    let mut rng = seeded(seed);
    let a = Mat::from_fn(n_targets, n_features, |_, _| rng.gen_range(-1.0..1.0));
    let b = Mat::from_fn(n_targets, n_features, |_, _| rng.gen_range(-1.0..1.0));
    let x = Mat::from_fn(n_samples, n_features, |_, _| rng.gen_range(-1.0..1.0));
    let clean = Mat::from_fn(n_samples, n_targets, |i, j| {
        let u: f64 = x.row(i).iter().zip(a.row(j)).map(|(p, q)| p * q).sum();
        let v: f64 = x.row(i).iter().zip(b.row(j)).map(|(p, q)| p * q).sum();
        (2.0 * u).sin() + 0.5 * (2.0 * v).cos()
    });
    let t = Mat::from_fn(n_samples, n_targets, |i, j| {
        clean[(i, j)] + noise * rng.gen_range(-1.0..1.0)
    });
    Dataset::unnamed(x, t)
}
