//! Incremental GOR-ELM: grow the hidden layer in batches and warm-start ADMM.
//!
//! The cached `(HᵀH + ηI)⁻¹` is extended with the block-inverse identity so
//! each batch costs a solve in the new block size rather than a full
//! re-inversion.

use std::time::Instant;

use crate::admm::{train_gorelm_with, zero_row_count, AdmmFit, GorHyper};
use crate::error::{invalid, Error, Result};
use crate::eval::arrmse;
use crate::linalg::{invert_spd, Mat};
use crate::rng::derive_seed;
use crate::slfn::{HiddenLayer, SlfnModel};

/// `(HᵀH + ηI)⁻¹` for the current hidden output matrix.
#[derive(Clone, Debug, PartialEq)]
pub struct InverseCache {
    m_inv: Mat,
    eta: f64,
    n_tilde: usize,
}

impl InverseCache {
    /// Direct inversion.
    pub fn new(h: &Mat, eta: f64) -> Result<Self> {
        if !(eta > 0.0 && eta.is_finite()) {
            return Err(invalid("eta", format!("must be finite and > 0, got {eta}")));
        }
        Ok(Self {
            m_inv: invert_spd(&h.gram(), eta)?,
            eta,
            n_tilde: h.cols(),
        })
    }

    pub fn m_inv(&self) -> &Mat {
        &self.m_inv
    }

    pub fn eta(&self) -> f64 {
        self.eta
    }

    pub fn n_tilde(&self) -> usize {
        self.n_tilde
    }

    /// Fails unless the cache was built for this `η` and node count.
    pub fn check(&self, eta: f64, n_tilde: usize) -> Result<()> {
        let same_eta = (self.eta - eta).abs() <= 1e-12 * self.eta.abs().max(1.0);
        if !same_eta || self.n_tilde != n_tilde {
            return Err(Error::StaleCache {
                cached: self.eta,
                cached_nodes: self.n_tilde,
                wanted: eta,
                wanted_nodes: n_tilde,
            });
        }
        Ok(())
    }

    /// `‖(HᵀH + ηI)·M − I‖_F` against `h`.
    pub fn residual(&self, h: &Mat) -> Result<f64> {
        let g = h.gram().add_diagonal(self.eta);
        Ok(g.matmul(&self.m_inv)?
            .sub(&Mat::identity(self.n_tilde))?
            .frobenius_norm())
    }
}

/// Extends `cache` (valid for `h_old`) to `[h_old, delta_h]`.
pub fn schur_extend(cache: &InverseCache, h_old: &Mat, delta_h: &Mat) -> Result<InverseCache> {
    if h_old.cols() != cache.n_tilde || h_old.rows() != delta_h.rows() {
        return Err(Error::DimensionMismatch {
            op: "schur_extend",
            left: h_old.shape(),
            right: delta_h.shape(),
        });
    }
    let old = cache.n_tilde;
    let delta = delta_h.cols();
    let j_inv = &cache.m_inv;
    let k = h_old.t_matmul(delta_h)?;
    let p = j_inv.matmul(&k)?;
    let s = delta_h
        .gram()
        .add_diagonal(cache.eta)
        .sub(&k.t_matmul(&p)?)?;
    let s = Mat::from_fn(delta, delta, |i, j| 0.5 * (s[(i, j)] + s[(j, i)]));
    let l_new = invert_spd(&s, 0.0)?;
    let pl = p.matmul(&l_new)?;
    let j_new = j_inv.add(&pl.matmul_t(&p)?)?;

    let n = old + delta;
    let m_inv = Mat::from_fn(n, n, |i, j| match (i < old, j < old) {
        (true, true) => 0.5 * (j_new[(i, j)] + j_new[(j, i)]),
        (true, false) => -pl[(i, j - old)],
        (false, true) => -pl[(j, i - old)],
        (false, false) => l_new[(i - old, j - old)],
    });
    Ok(InverseCache {
        m_inv,
        eta: cache.eta,
        n_tilde: n,
    })
}

/// When to stop adding nodes.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct GrowthPolicy {
    pub initial_nodes: usize,
    pub batch_size: usize,
    pub max_total_nodes: usize,
    /// Stop once training aRRMSE is at or below this value.
    pub target_metric: Option<f64>,
    /// Stop once this fraction of the rows of `Z` is pruned.
    pub pruned_ratio_stop: Option<f64>,
}

impl GrowthPolicy {
    pub fn new(initial_nodes: usize, batch_size: usize, max_total_nodes: usize) -> Self {
        Self {
            initial_nodes,
            batch_size,
            max_total_nodes,
            target_metric: None,
            pruned_ratio_stop: None,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.initial_nodes == 0 {
            return Err(invalid("initial_nodes", "must be at least 1"));
        }
        if self.batch_size == 0 {
            return Err(invalid("batch_size", "must be at least 1"));
        }
        if self.max_total_nodes < self.initial_nodes {
            return Err(invalid(
                "max_total_nodes",
                format!(
                    "{} is below initial_nodes {}",
                    self.max_total_nodes, self.initial_nodes
                ),
            ));
        }
        if let Some(r) = self.pruned_ratio_stop {
            if !(r > 0.0 && r < 1.0) {
                return Err(invalid(
                    "pruned_ratio_stop",
                    format!("must lie in (0, 1), got {r}"),
                ));
            }
        }
        if let Some(m) = self.target_metric {
            if !(m >= 0.0 && m.is_finite()) {
                return Err(invalid(
                    "target_metric",
                    format!("must be finite and >= 0, got {m}"),
                ));
            }
        }
        Ok(())
    }
}

/// Why the growth loop ended.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum StopCause {
    MaxNodes,
    TargetMetric,
    PrunedRatio,
}

/// One row of the growth log.
#[derive(Clone, Debug, PartialEq)]
pub struct GrowthEntry {
    pub batch_index: usize,
    pub n_tilde: usize,
    pub admm_iterations: usize,
    pub primal_norm: f64,
    pub dual_norm: f64,
    pub converged: bool,
    pub train_arrmse: f64,
    pub pruned_nodes: usize,
    pub elapsed_seconds: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct GrowthLog {
    pub entries: Vec<GrowthEntry>,
    pub stop: StopCause,
}

impl GrowthLog {
    pub const CSV_HEADER: &'static str =
        "batch_index,n_tilde,admm_iterations,primal_norm,dual_norm,train_arrmse,pruned_nodes,elapsed_seconds";

    pub fn to_csv(&self) -> String {
        let mut out = String::from(Self::CSV_HEADER);
        out.push('\n');
        for e in &self.entries {
            out.push_str(&format!(
                "{},{},{},{:e},{:e},{},{},{}\n",
                e.batch_index,
                e.n_tilde,
                e.admm_iterations,
                e.primal_norm,
                e.dual_norm,
                e.train_arrmse,
                e.pruned_nodes,
                e.elapsed_seconds
            ));
        }
        out
    }
}

/// Fraction of rows of `z` with exactly zero norm.
pub fn pruned_ratio(z: &Mat) -> f64 {
    if z.rows() == 0 {
        return 0.0;
    }
    zero_row_count(z) as f64 / z.rows() as f64
}

/// Output of [`train_igorelm`].
#[derive(Clone, Debug)]
pub struct IgorFit {
    pub model: SlfnModel,
    pub log: GrowthLog,
    /// ADMM result of the last batch.
    pub last: AdmmFit,
}

/// Seed of the node block added at `batch`; batch 0 is the initial layer.
pub fn batch_seed(seed: u64, batch: usize) -> u64 {
    derive_seed(seed, &[batch as u64])
}

/// Grows a GOR-ELM network batch by batch from `policy.initial_nodes` nodes.
pub fn train_igorelm(
    x: &Mat,
    t: &Mat,
    hyper: &GorHyper,
    policy: &GrowthPolicy,
    seed: u64,
) -> Result<IgorFit> {
    hyper.validate()?;
    policy.validate()?;
    if x.rows() != t.rows() {
        return Err(Error::DimensionMismatch {
            op: "train_igorelm",
            left: x.shape(),
            right: t.shape(),
        });
    }
    let start = Instant::now();
    let mut layer = HiddenLayer::init_random(batch_seed(seed, 0), x.cols(), policy.initial_nodes)?;
    let mut h = layer.hidden_output(x)?;
    let mut cache = InverseCache::new(&h, hyper.eta())?;
    let mut fit = train_gorelm_with(&h, t, hyper, None, &cache, None)?;
    let mut entries = vec![entry(0, &h, t, &fit, start)?];

    let stop = loop {
        let last = entries.last().expect("at least one batch");
        if last.n_tilde >= policy.max_total_nodes {
            break StopCause::MaxNodes;
        }
        if policy.target_metric.is_some_and(|m| last.train_arrmse <= m) {
            break StopCause::TargetMetric;
        }
        if policy
            .pruned_ratio_stop
            .is_some_and(|r| last.pruned_nodes as f64 / last.n_tilde as f64 >= r)
        {
            break StopCause::PrunedRatio;
        }
        let batch = entries.len();
        let old = h.cols();
        let delta = policy.batch_size.min(policy.max_total_nodes - old);
        layer = layer.append_nodes(batch_seed(seed, batch), delta)?;
        let dh = layer.nodes(old, old + delta)?.hidden_output(x)?;
        cache = schur_extend(&cache, &h, &dh)?;
        h = h.hcat(&dh)?;
        let warm = fit.state.pad_nodes(delta);
        fit = train_gorelm_with(&h, t, hyper, Some(warm), &cache, None)?;
        entries.push(entry(batch, &h, t, &fit, start)?);
    };

    let model = SlfnModel::new(layer, fit.weights.clone())?;
    Ok(IgorFit {
        model,
        log: GrowthLog { entries, stop },
        last: fit,
    })
}

fn entry(
    batch_index: usize,
    h: &Mat,
    t: &Mat,
    fit: &AdmmFit,
    start: Instant,
) -> Result<GrowthEntry> {
    let pred = h.matmul(&fit.weights)?;
    Ok(GrowthEntry {
        batch_index,
        n_tilde: h.cols(),
        admm_iterations: fit.report.iterations,
        primal_norm: fit.report.primal_norm,
        dual_norm: fit.report.dual_norm,
        converged: fit.report.converged,
        train_arrmse: arrmse(&pred, t)?.arrmse,
        pruned_nodes: zero_row_count(&fit.state.z),
        elapsed_seconds: start.elapsed().as_secs_f64(),
    })
}
