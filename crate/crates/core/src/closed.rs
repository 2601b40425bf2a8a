//! Closed-form and recursive least-squares trainers for the output weights.

use rand::Rng as _;

use crate::error::{invalid, Error, Result};
use crate::linalg::{pinv, pinv_with_cutoff, solve_spd, Mat};
use crate::rng::seeded;
use crate::slfn::{Activation, HiddenLayer, SlfnModel};

/// Ridge regularization parameter `C`; the penalty is `‖B‖²/(2C)`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct RidgeHyper {
    c: f64,
}

impl RidgeHyper {
    pub fn new(c: f64) -> Result<Self> {
        if !(c > 0.0 && c.is_finite()) {
            return Err(invalid("C", format!("must be finite and > 0, got {c}")));
        }
        Ok(Self { c })
    }

    pub fn c(&self) -> f64 {
        self.c
    }
}

fn check_rows(op: &'static str, h: &Mat, t: &Mat) -> Result<()> {
    if h.rows() != t.rows() {
        return Err(Error::DimensionMismatch {
            op,
            left: h.shape(),
            right: t.shape(),
        });
    }
    Ok(())
}

/// Minimum-norm least-squares output weights `H†T`.
pub fn train_elm(h: &Mat, t: &Mat) -> Result<Mat> {
    check_rows("train_elm", h, t)?;
    pinv(h).matmul(t)
}

/// Ridge output weights solving `(HᵀH + I/C) B = HᵀT` for all target columns at once.
pub fn train_relm(h: &Mat, t: &Mat, hyper: RidgeHyper) -> Result<Mat> {
    check_rows("train_relm", h, t)?;
    solve_spd(&h.gram(), 1.0 / hyper.c, &h.t_matmul(t)?)
}

/// Result of an I-ELM run.
#[derive(Clone, Debug)]
pub struct IelmFit {
    pub model: SlfnModel,
    /// `‖e‖₂` after each candidate node, per target column.
    pub residual_norms: Vec<Vec<f64>>,
    /// Candidate nodes skipped because their output column was identically zero.
    pub skipped_nodes: Vec<usize>,
}

/// I-ELM: adds random sigmoid nodes one at a time, fitting each node's weight
/// to the current residual.
///
/// Multi-column targets are handled column by column over one shared stream of
/// candidate nodes (node `j` is the same for every column). Column `l` stops at
/// `max_nodes` or once its residual norm reaches `target_error`; nodes a column
/// did not use carry a zero weight there.
pub fn train_ielm(
    x: &Mat,
    t: &Mat,
    seed: u64,
    max_nodes: usize,
    target_error: f64,
) -> Result<IelmFit> {
    check_rows("train_ielm", x, t)?;
    if max_nodes == 0 {
        return Err(invalid("max_nodes", "must be >= 1"));
    }
    if x.cols() == 0 || x.rows() == 0 {
        return Err(invalid("x", "needs at least one sample and one feature"));
    }
    let (n_samples, n_inputs, m) = (x.rows(), x.cols(), t.cols());
    let mut rng = seeded(seed);

    let mut weights: Vec<Vec<f64>> = Vec::new();
    let mut biases: Vec<f64> = Vec::new();
    let mut betas: Vec<Vec<f64>> = Vec::new();
    let mut residuals: Vec<Vec<f64>> = (0..m).map(|l| t.column(l)).collect();
    let mut active: Vec<bool> = vec![true; m];
    let mut history: Vec<Vec<f64>> = vec![Vec::new(); m];
    let mut skipped = Vec::new();

    for j in 0..max_nodes {
        if !active.iter().any(|&a| a) {
            break;
        }
        let a: Vec<f64> = (0..n_inputs).map(|_| rng.gen_range(-1.0..=1.0)).collect();
        let b = rng.gen_range(-1.0..=1.0);
        let hj: Vec<f64> = (0..n_samples)
            .map(|r| {
                let z: f64 = x.row(r).iter().zip(&a).map(|(xi, ai)| xi * ai).sum();
                Activation::Sigmoid.apply(z + b)
            })
            .collect();
        let denom: f64 = hj.iter().map(|v| v * v).sum();
        let mut node_beta = vec![0.0; m];
        if denom == 0.0 {
            skipped.push(j);
        }
        for l in 0..m {
            if !active[l] {
                continue;
            }
            if denom > 0.0 {
                let e = &mut residuals[l];
                let beta = hj.iter().zip(e.iter()).map(|(h, e)| h * e).sum::<f64>() / denom;
                for (ei, hi) in e.iter_mut().zip(&hj) {
                    *ei -= beta * hi;
                }
                node_beta[l] = beta;
            }
            let norm = residuals[l].iter().map(|v| v * v).sum::<f64>().sqrt();
            history[l].push(norm);
            if norm <= target_error {
                active[l] = false;
            }
        }
        weights.push(a);
        biases.push(b);
        betas.push(node_beta);
    }

    let n_nodes = weights.len();
    let w = Mat::from_fn(n_inputs, n_nodes, |i, j| weights[j][i]);
    let hidden = HiddenLayer::from_parts(w, biases, Activation::Sigmoid)?;
    let out = Mat::from_fn(n_nodes, m, |j, l| betas[j][l]);
    Ok(IelmFit {
        model: SlfnModel::new(hidden, out)?,
        residual_norms: history,
        skipped_nodes: skipped,
    })
}

/// Cached state for EM-ELM: the current `H` and its pseudoinverse.
#[derive(Clone, Debug)]
pub struct EmCache {
    h: Mat,
    pinv_h: Mat,
}

impl EmCache {
    pub fn new(h: Mat) -> Self {
        let pinv_h = pinv(&h);
        Self { h, pinv_h }
    }

    /// Cache for a network with no hidden nodes yet.
    pub fn empty(n_samples: usize) -> Self {
        Self::new(Mat::zeros(n_samples, 0))
    }

    pub fn h(&self) -> &Mat {
        &self.h
    }

    pub fn pinv_h(&self) -> &Mat {
        &self.pinv_h
    }
}

/// EM-ELM group growth: appends `delta_h` and updates `H†` block-wise.
///
/// With `K = H†δH` and `R = δH − HK = (I − HH†)δH`, the new pseudoinverse is
/// `[H† − K·D; D]`. When `R` has full column rank `D = R†`, which gives the
/// usual `U = H†(I − δH·D)` update. Columns of `δH` that already lie in the
/// range of `H` are handled by Cline's correction so the result stays the
/// minimum-norm solution.
pub fn grow_emelm(cache: &EmCache, delta_h: &Mat, t: &Mat) -> Result<(Mat, EmCache)> {
    if delta_h.rows() != cache.h.rows() {
        return Err(Error::DimensionMismatch {
            op: "grow_emelm",
            left: cache.h.shape(),
            right: delta_h.shape(),
        });
    }
    check_rows("grow_emelm", delta_h, t)?;
    let k = cache.pinv_h.matmul(delta_h)?;
    let r = delta_h.sub(&cache.h.matmul(&k)?)?;
    // rank of R is judged against the scale of δH, not of R itself
    let scale = delta_h.frobenius_norm().max(r.frobenius_norm());
    let cutoff = 1e-10 * scale * delta_h.rows().max(delta_h.cols()) as f64;
    let r_pinv = pinv_with_cutoff(&r, cutoff);

    let delta = delta_h.cols();
    let null_proj = Mat::identity(delta).sub(&r_pinv.matmul(&r)?)?;
    let d = if null_proj.frobenius_norm() <= 1e-8 {
        r_pinv
    } else {
        // Cline: D = R† + P·(I + P·KᵀK·P)⁻¹·P·Kᵀ·H†·(I − δH·R†), P = I − R†R
        let ktk = k.gram();
        let inner = null_proj.matmul(&ktk)?.matmul(&null_proj)?;
        let inner = Mat::from_fn(delta, delta, |i, j| 0.5 * (inner[(i, j)] + inner[(j, i)]));
        let kt_hp = k.t_matmul(&cache.pinv_h)?;
        let rhs = kt_hp.sub(&kt_hp.matmul(delta_h)?.matmul(&r_pinv)?)?;
        let z = solve_spd(&inner, 1.0, &null_proj.matmul(&rhs)?)?;
        r_pinv.add(&null_proj.matmul(&z)?)?
    };
    let u = cache.pinv_h.sub(&k.matmul(&d)?)?;
    let pinv_next = u.vcat(&d)?;
    let beta = pinv_next.matmul(t)?;
    Ok((
        beta,
        EmCache {
            h: cache.h.hcat(delta_h)?,
            pinv_h: pinv_next,
        },
    ))
}

/// Cached state for IR-ELM: `H` and `D = (I/C + HᵀH)⁻¹Hᵀ`.
#[derive(Clone, Debug)]
pub struct RidgeCache {
    h: Mat,
    d: Mat,
}

impl RidgeCache {
    /// Computes `D` directly; an empty `H` (zero columns) gives an empty operator.
    pub fn new(h: Mat, hyper: RidgeHyper) -> Result<Self> {
        let d = if h.cols() == 0 {
            Mat::zeros(0, h.rows())
        } else {
            solve_spd(&h.gram(), 1.0 / hyper.c, &h.transpose())?
        };
        Ok(Self { h, d })
    }

    pub fn empty(n_samples: usize) -> Self {
        Self {
            h: Mat::zeros(n_samples, 0),
            d: Mat::zeros(0, n_samples),
        }
    }

    pub fn h(&self) -> &Mat {
        &self.h
    }

    pub fn d(&self) -> &Mat {
        &self.d
    }
}

/// IR-ELM single-node growth:
/// `M = vᵀ(I − HD) / (vᵀ(I − HD)v + 1/C)`, `L = D(I − vM)`, `β = [L; M]·T`.
pub fn grow_irelm(
    cache: &RidgeCache,
    v: &Mat,
    t: &Mat,
    hyper: RidgeHyper,
) -> Result<(Mat, RidgeCache)> {
    if v.cols() != 1 || v.rows() != cache.h.rows() {
        return Err(Error::DimensionMismatch {
            op: "grow_irelm",
            left: cache.h.shape(),
            right: v.shape(),
        });
    }
    check_rows("grow_irelm", v, t)?;
    // (I − HD) = (I + C·HHᵀ)⁻¹ is symmetric, so vᵀ(I − HD) = rᵀ with r = v − H(Dv),
    // and vᵀ(I − HD)v = ‖r‖² + ‖Dv‖²/C, a sum of nonnegative terms.
    let n = v.rows();
    let dv = cache.d.matmul(v)?;
    let r = v.sub(&cache.h.matmul(&dv)?)?;
    let w = r.as_slice();
    let inv_c = 1.0 / hyper.c;
    let denom = w.iter().map(|x| x * x).sum::<f64>()
        + inv_c * dv.as_slice().iter().map(|x| x * x).sum::<f64>()
        + inv_c;
    let m_row = Mat::new(1, n, w.iter().map(|x| x / denom).collect())?;
    // L = D − (Dv)M
    let mut l = cache.d.clone();
    l.axpy(-1.0, &dv.matmul(&m_row)?)?;
    let d_next = l.vcat(&m_row)?;
    let beta = d_next.matmul(t)?;
    Ok((
        beta,
        RidgeCache {
            h: cache.h.hcat(v)?,
            d: d_next,
        },
    ))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;

    fn random(rows: usize, cols: usize, seed: u64) -> Mat {
        let mut rng = seeded(seed);
        Mat::from_fn(rows, cols, |_, _| rng.gen_range(-1.0..1.0))
    }

    #[test]
    fn elm_examples() {
        let b = train_elm(&Mat::identity(2), &Mat::from_rows(&[[1.0], [2.0]])).unwrap();
        assert!(b.max_abs_diff(&Mat::from_rows(&[[1.0], [2.0]])) < 1e-15);
        let b = train_elm(
            &Mat::from_rows(&[[1.0], [1.0]]),
            &Mat::from_rows(&[[0.0], [2.0]]),
        )
        .unwrap();
        assert!((b[(0, 0)] - 1.0).abs() < 1e-15);
        assert!(train_elm(&Mat::zeros(3, 2), &Mat::zeros(2, 1)).is_err());
    }

    #[test]
    fn elm_residual_beats_random_perturbations() {
        let h = random(10, 4, 1);
        let t = random(10, 2, 2);
        let b = train_elm(&h, &t).unwrap();
        let base = h.matmul(&b).unwrap().sub(&t).unwrap().frobenius_norm();
        for s in 0..100 {
            let pb = b.add(&random(4, 2, 100 + s).scale(1e-2)).unwrap();
            let r = h.matmul(&pb).unwrap().sub(&t).unwrap().frobenius_norm();
            assert!(base <= r);
        }
    }

    #[test]
    fn relm_examples() {
        let hyper = RidgeHyper::new(1.0).unwrap();
        let b = train_relm(&Mat::identity(2), &Mat::from_rows(&[[1.0], [1.0]]), hyper).unwrap();
        assert!(b.max_abs_diff(&Mat::from_rows(&[[0.5], [0.5]])) < 1e-15);

        let h = random(30, 5, 3);
        let t = random(30, 2, 4);
        let ridge = train_relm(&h, &t, RidgeHyper::new(2f64.powi(20)).unwrap()).unwrap();
        assert!(ridge.max_abs_diff(&train_elm(&h, &t).unwrap()) < 1e-4);
        assert!(RidgeHyper::new(0.0).is_err());
        assert!(RidgeHyper::new(f64::NAN).is_err());
    }

    #[test]
    fn relm_joint_equals_per_column_and_normal_equations() {
        let h = random(20, 8, 5);
        let t = random(20, 3, 6);
        let hyper = RidgeHyper::new(8.0).unwrap();
        let joint = train_relm(&h, &t, hyper).unwrap();
        for l in 0..3 {
            let col = train_relm(&h, &Mat::column_vector(&t.column(l)), hyper).unwrap();
            for i in 0..8 {
                assert!((col[(i, 0)] - joint[(i, l)]).abs() <= 1e-10);
            }
        }
        let lhs = h.gram().add_diagonal(1.0 / 8.0).matmul(&joint).unwrap();
        let rhs = h.t_matmul(&t).unwrap();
        assert!(lhs.sub(&rhs).unwrap().frobenius_norm() <= 1e-9 * rhs.frobenius_norm());
    }

    #[test]
    fn ielm_examples() {
        let x = random(12, 3, 7);
        let fit = train_ielm(&x, &Mat::zeros(12, 1), 1, 10, 0.0).unwrap();
        assert_eq!(fit.model.hidden.n_nodes(), 1);
        assert_eq!(fit.model.output_weights[(0, 0)], 0.0);
        assert_eq!(fit.residual_norms[0], vec![0.0]);
        assert!(train_ielm(&x, &Mat::zeros(12, 1), 1, 0, 0.0).is_err());
    }

    #[test]
    fn ielm_residuals_non_increasing() {
        let x = random(40, 3, 8);
        let t = Mat::from_fn(40, 2, |i, l| (x[(i, 0)] * 2.0 + l as f64).sin() + x[(i, 1)]);
        let fit = train_ielm(&x, &t, 9, 60, 1e-9).unwrap();
        for l in 0..2 {
            let mut prev = Mat::column_vector(&t.column(l)).frobenius_norm();
            for &r in &fit.residual_norms[l] {
                assert!(r <= prev);
                prev = r;
            }
        }
        // model predictions reproduce the final residual
        let pred = fit.model.predict(&x).unwrap();
        let res = t.sub(&pred).unwrap();
        for l in 0..2 {
            let norm = Mat::column_vector(&res.column(l)).frobenius_norm();
            assert!((norm - fit.residual_norms[l].last().unwrap()).abs() < 1e-9);
        }
    }

    #[test]
    fn ielm_single_node_exact_fit() {
        // a node with H_1 = [c, c] fits a constant target exactly
        let x = Mat::from_rows(&[[0.0], [0.0]]);
        let fit = train_ielm(&x, &Mat::from_rows(&[[2.0], [2.0]]), 3, 5, 1e-12).unwrap();
        assert_eq!(fit.model.hidden.n_nodes(), 1);
        assert!(fit.residual_norms[0][0] < 1e-12);
    }

    #[test]
    fn emelm_matches_pinv_oracle() {
        let h = random(15, 4, 10);
        let dh = random(15, 3, 11);
        let t = random(15, 2, 12);
        let (beta, cache) = grow_emelm(&EmCache::new(h.clone()), &dh, &t).unwrap();
        let full = h.hcat(&dh).unwrap();
        let oracle = pinv(&full).matmul(&t).unwrap();
        assert!(beta.relative_error(&oracle) < 1e-6);
        assert_eq!(cache.h().shape(), (15, 7));
        assert!(cache.pinv_h().relative_error(&pinv(&full)) < 1e-6);
        assert!(grow_emelm(&cache, &Mat::zeros(3, 1), &t).is_err());
    }

    #[test]
    fn emelm_from_empty_and_zero_growth() {
        let dh = random(10, 3, 13);
        let t = random(10, 1, 14);
        let (beta, _) = grow_emelm(&EmCache::empty(10), &dh, &t).unwrap();
        assert!(beta.relative_error(&train_elm(&dh, &t).unwrap()) < 1e-9);

        let t2 = Mat::from_rows(&[[1.0], [2.0]]);
        let cache = EmCache::new(Mat::identity(2));
        let (beta, next) = grow_emelm(&cache, &Mat::zeros(2, 1), &t2).unwrap();
        assert!(next.pinv_h().row(2).iter().all(|&v| v == 0.0));
        assert!(beta.max_abs_diff(&Mat::from_rows(&[[1.0], [2.0], [0.0]])) < 1e-15);
    }

    #[test]
    fn emelm_orthogonal_block_reduces_residual() {
        // H spans e1, e2; δH spans e3 → D = δH†
        let h = Mat::from_fn(4, 2, |i, j| if i == j { 1.0 } else { 0.0 });
        let dh = Mat::from_rows(&[[0.0], [0.0], [2.0], [0.0]]);
        let t = Mat::from_rows(&[[1.0], [1.0], [1.0], [1.0]]);
        let cache = EmCache::new(h.clone());
        let (beta, next) = grow_emelm(&cache, &dh, &t).unwrap();
        assert!(next.pinv_h().row_block(2, 3).max_abs_diff(&pinv(&dh)) < 1e-15);
        let before = h
            .matmul(&train_elm(&h, &t).unwrap())
            .unwrap()
            .sub(&t)
            .unwrap();
        let after = h.hcat(&dh).unwrap().matmul(&beta).unwrap().sub(&t).unwrap();
        assert!(after.frobenius_norm() < before.frobenius_norm());
    }

    #[test]
    fn emelm_duplicate_column_gives_min_norm() {
        let h = random(12, 3, 15);
        let dh = Mat::column_vector(&h.column(1));
        let t = random(12, 1, 16);
        let (beta, _) = grow_emelm(&EmCache::new(h.clone()), &dh, &t).unwrap();
        let oracle = pinv(&h.hcat(&dh).unwrap()).matmul(&t).unwrap();
        assert!(beta.relative_error(&oracle) < 1e-6);
    }

    #[test]
    fn irelm_matches_direct_ridge() {
        let hyper = RidgeHyper::new(8.0).unwrap();
        let h = random(15, 6, 17);
        let v = random(15, 1, 18);
        let t = random(15, 2, 19);
        let cache = RidgeCache::new(h.clone(), hyper).unwrap();
        let (beta, next) = grow_irelm(&cache, &v, &t, hyper).unwrap();
        let full = h.hcat(&v).unwrap();
        let direct = train_relm(&full, &t, hyper).unwrap();
        assert!(beta.relative_error(&direct) < 1e-8);
        let d_direct = RidgeCache::new(full, hyper).unwrap();
        assert!(next.d().relative_error(d_direct.d()) < 1e-8);
    }

    #[test]
    fn irelm_bootstrap_and_zero_column() {
        let hyper = RidgeHyper::new(2.0).unwrap();
        let v = random(9, 1, 20);
        let t = random(9, 1, 21);
        let (beta, _) = grow_irelm(&RidgeCache::empty(9), &v, &t, hyper).unwrap();
        assert!(beta.relative_error(&train_relm(&v, &t, hyper).unwrap()) < 1e-12);

        let h = random(9, 3, 22);
        let cache = RidgeCache::new(h.clone(), hyper).unwrap();
        let (beta, next) = grow_irelm(&cache, &Mat::zeros(9, 1), &t, hyper).unwrap();
        assert!(next.d().row(3).iter().all(|&x| x == 0.0));
        let old = train_relm(&h, &t, hyper).unwrap();
        assert!(beta.row_block(0, 3).max_abs_diff(&old) < 1e-12);
        assert!(grow_irelm(&cache, &Mat::zeros(9, 2), &t, hyper).is_err());
    }

    #[test]
    fn irelm_node_by_node_to_fifty() {
        let x = random(60, 4, 23);
        let t = random(60, 2, 24);
        let layer = HiddenLayer::init_random(25, 4, 50).unwrap();
        let h = layer.hidden_output(&x).unwrap();
        for e in -20..=20 {
            let c = 2f64.powi(e);
            let hyper = RidgeHyper::new(c).unwrap();
            let mut cache = RidgeCache::empty(60);
            let mut beta = Mat::zeros(0, 2);
            for j in 0..50 {
                let v = h.column_block(j, j + 1);
                (beta, cache) = grow_irelm(&cache, &v, &t, hyper).unwrap();
            }
            let direct = train_relm(&h, &t, hyper).unwrap();
            assert!(beta.relative_error(&direct) < 1e-6, "C=2^{e}");
        }
    }
}
