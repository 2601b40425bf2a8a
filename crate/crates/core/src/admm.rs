//! ADMM trainers for the group-sparse ELM objectives.
//!
//! GOR-ELM minimizes `τ‖HB−T‖₂,₁ + λα‖B‖₂,₁ + λ(1−α)/2‖B‖²_F` by splitting
//! `E = HB − T` and `Z = B`, which yields a 3-block scheme over `(B, Z, E)`
//! with scaled duals `U₁` (N×m) and `U₂` (Ñ×m). GR-ELM keeps the squared
//! Frobenius loss and only splits `Z = B`. OR-ELM is the single-output GOR-ELM
//! with `α = 0`, `λ = 1/C` and a fixed iteration budget.
//!
//! Stacked operators are never formed; the residuals below are their
//! expanded block forms.

use std::io::Write;

use crate::error::{invalid, Error, Result};
use crate::igor::InverseCache;
use crate::linalg::{row_norms, Cholesky, Mat};

/// Hyperparameters of GOR-ELM and its ADMM loop.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct GorHyper {
    pub tau: f64,
    pub lambda: f64,
    pub alpha: f64,
    pub rho: f64,
    pub eps_abs: f64,
    pub eps_rel: f64,
    pub k_max: usize,
}

impl GorHyper {
    /// Defaults for everything except the regularization pair.
    pub fn new(lambda: f64, alpha: f64) -> Self {
        Self {
            tau: 1.0,
            lambda,
            alpha,
            rho: 1.0,
            eps_abs: 1e-3,
            eps_rel: 1e-2,
            k_max: 1000,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.tau > 0.0 && self.tau.is_finite()) {
            return Err(invalid(
                "tau",
                format!("must be finite and > 0, got {}", self.tau),
            ));
        }
        check_common(
            self.lambda,
            self.alpha,
            self.rho,
            self.eps_abs,
            self.eps_rel,
            self.k_max,
        )
    }

    /// Ridge shift of the B-subproblem, `(λ(1−α)+ρ)/ρ`.
    pub fn eta(&self) -> f64 {
        (self.lambda * (1.0 - self.alpha) + self.rho) / self.rho
    }
}

/// Hyperparameters of GR-ELM.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct GrHyper {
    pub c: f64,
    pub lambda: f64,
    pub alpha: f64,
    pub rho: f64,
    pub eps_abs: f64,
    pub eps_rel: f64,
    pub k_max: usize,
}

impl GrHyper {
    /// `ρ = λ = 1` with the default tolerances.
    pub fn new(c: f64, alpha: f64) -> Self {
        Self {
            c,
            lambda: 1.0,
            alpha,
            rho: 1.0,
            eps_abs: 1e-3,
            eps_rel: 1e-2,
            k_max: 1000,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.c > 0.0 && self.c.is_finite()) {
            return Err(invalid(
                "C",
                format!("must be finite and > 0, got {}", self.c),
            ));
        }
        check_common(
            self.lambda,
            self.alpha,
            self.rho,
            self.eps_abs,
            self.eps_rel,
            self.k_max,
        )
    }
}

fn check_common(
    lambda: f64,
    alpha: f64,
    rho: f64,
    eps_abs: f64,
    eps_rel: f64,
    k_max: usize,
) -> Result<()> {
    if !(lambda >= 0.0 && lambda.is_finite()) {
        return Err(invalid(
            "lambda",
            format!("must be finite and >= 0, got {lambda}"),
        ));
    }
    if !(0.0..=1.0).contains(&alpha) {
        return Err(invalid("alpha", format!("must lie in [0, 1], got {alpha}")));
    }
    if !(rho > 0.0 && rho.is_finite()) {
        return Err(invalid("rho", format!("must be finite and > 0, got {rho}")));
    }
    if !(eps_abs > 0.0 && eps_rel > 0.0) {
        return Err(invalid("eps", "tolerances must be > 0"));
    }
    if k_max == 0 {
        return Err(invalid("k_max", "must be at least 1"));
    }
    Ok(())
}

/// ADMM iterates. For GR-ELM `e` and `u1` have zero rows.
#[derive(Clone, Debug, PartialEq)]
pub struct AdmmState {
    pub b: Mat,
    pub z: Mat,
    pub e: Mat,
    pub u1: Mat,
    pub u2: Mat,
    pub k: usize,
}

impl AdmmState {
    /// Cold start for `n` samples, `n_tilde` nodes and `m` targets.
    pub fn zeros(n: usize, n_tilde: usize, m: usize) -> Self {
        Self {
            b: Mat::zeros(n_tilde, m),
            z: Mat::zeros(n_tilde, m),
            e: Mat::zeros(n, m),
            u1: Mat::zeros(n, m),
            u2: Mat::zeros(n_tilde, m),
            k: 0,
        }
    }

    /// Appends `extra` zero rows to the node-indexed blocks `B`, `Z`, `U₂`.
    pub fn pad_nodes(&self, extra: usize) -> Self {
        Self {
            b: self.b.pad_rows(extra),
            z: self.z.pad_rows(extra),
            e: self.e.clone(),
            u1: self.u1.clone(),
            u2: self.u2.pad_rows(extra),
            k: self.k,
        }
    }

    fn is_finite(&self) -> bool {
        self.b.is_finite()
            && self.z.is_finite()
            && self.e.is_finite()
            && self.u1.is_finite()
            && self.u2.is_finite()
    }

    fn check_shapes(&self, h: &Mat, t: &Mat, with_e: bool) -> Result<()> {
        let node = (h.cols(), t.cols());
        let sample = if with_e {
            (h.rows(), t.cols())
        } else {
            (0, t.cols())
        };
        for (m, want) in [
            (&self.b, node),
            (&self.z, node),
            (&self.u2, node),
            (&self.e, sample),
            (&self.u1, sample),
        ] {
            if m.shape() != want {
                return Err(Error::DimensionMismatch {
                    op: "warm start",
                    left: m.shape(),
                    right: want,
                });
            }
        }
        Ok(())
    }
}

/// Residual norms and thresholds at the last iteration.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct StopReport {
    pub primal_norm: f64,
    pub dual_norm: f64,
    pub eps_pri: f64,
    pub eps_dual: f64,
    pub converged: bool,
    pub iterations: usize,
}

impl StopReport {
    fn new(
        primal_norm: f64,
        dual_norm: f64,
        eps_pri: f64,
        eps_dual: f64,
        iterations: usize,
    ) -> Self {
        Self {
            primal_norm,
            dual_norm,
            eps_pri,
            eps_dual,
            converged: primal_norm < eps_pri && dual_norm < eps_dual,
            iterations,
        }
    }
}

/// Result of an ADMM training call.
#[derive(Clone, Debug)]
pub struct AdmmFit {
    /// Output weights `B`.
    pub weights: Mat,
    pub report: StopReport,
    /// Final iterates, usable as a warm start.
    pub state: AdmmState,
}

/// Header matching the rows written to a trace sink.
pub const TRACE_HEADER: &str = "iteration,primal_norm,dual_norm,objective";

/// Row-wise shrinkage `(1 − κ/‖a‖₂)₊ a`, the prox of `κ‖·‖₂,₁`.
pub fn block_soft_threshold(a: &Mat, kappa: f64) -> Result<Mat> {
    if kappa.is_nan() || kappa < 0.0 {
        return Err(invalid("kappa", format!("must be >= 0, got {kappa}")));
    }
    let mut out = a.clone();
    if kappa == 0.0 {
        return Ok(out);
    }
    for i in 0..out.rows() {
        let row = out.row_mut(i);
        let norm = row.iter().map(|v| v * v).sum::<f64>().sqrt();
        if norm <= kappa {
            row.iter_mut().for_each(|v| *v = 0.0);
        } else {
            let s = 1.0 - kappa / norm;
            row.iter_mut().for_each(|v| *v *= s);
        }
    }
    Ok(out)
}

/// B-step: `(HᵀH + ηI)⁻¹[Hᵀ(T + E − U₁) + (Z − U₂)]`.
pub fn gor_b_update(
    h: &Mat,
    t: &Mat,
    state: &AdmmState,
    hyper: &GorHyper,
    cache: &InverseCache,
) -> Result<Mat> {
    cache.check(hyper.eta(), h.cols())?;
    let mut target = t.add(&state.e)?;
    target.axpy(-1.0, &state.u1)?;
    let mut rhs = h.t_matmul(&target)?;
    rhs.add_assign(&state.z)?;
    rhs.axpy(-1.0, &state.u2)?;
    cache.m_inv().matmul(&rhs)
}

/// Z-step: `S_{λα/ρ}(B + U₂)`.
pub fn gor_z_update(b_next: &Mat, u2: &Mat, hyper: &GorHyper) -> Result<Mat> {
    block_soft_threshold(&b_next.add(u2)?, hyper.lambda * hyper.alpha / hyper.rho)
}

/// E-step: `S_{τ/ρ}(HB − T + U₁)`.
pub fn gor_e_update(h: &Mat, b_next: &Mat, t: &Mat, u1: &Mat, hyper: &GorHyper) -> Result<Mat> {
    let mut a = h.matmul(b_next)?;
    a.axpy(-1.0, t)?;
    a.add_assign(u1)?;
    block_soft_threshold(&a, hyper.tau / hyper.rho)
}

/// Scaled dual ascent: `U₁ += HB − T − E`, `U₂ += B − Z`.
pub fn gor_dual_update(state: &AdmmState, h: &Mat, t: &Mat) -> Result<(Mat, Mat)> {
    let hb = h.matmul(&state.b)?;
    gor_dual_with(state, &hb, t)
}

fn gor_dual_with(state: &AdmmState, hb: &Mat, t: &Mat) -> Result<(Mat, Mat)> {
    let mut u1 = state.u1.clone();
    u1.add_assign(hb)?;
    u1.axpy(-1.0, t)?;
    u1.axpy(-1.0, &state.e)?;
    let mut u2 = state.u2.clone();
    u2.add_assign(&state.b)?;
    u2.axpy(-1.0, &state.z)?;
    Ok((u1, u2))
}

/// Primal and dual residual norms of `next` and the matching thresholds.
pub fn gor_residuals(
    prev: &AdmmState,
    next: &AdmmState,
    h: &Mat,
    t: &Mat,
    hyper: &GorHyper,
) -> Result<StopReport> {
    let hb = h.matmul(&next.b)?;
    gor_residuals_with(&prev.e, &prev.z, next, &hb, h, t, hyper)
}

fn gor_residuals_with(
    e_prev: &Mat,
    z_prev: &Mat,
    next: &AdmmState,
    hb: &Mat,
    h: &Mat,
    t: &Mat,
    hyper: &GorHyper,
) -> Result<StopReport> {
    let mut r1 = hb.sub(t)?;
    r1.axpy(-1.0, &next.e)?;
    let r2 = next.b.sub(&next.z)?;
    let primal = (sq(&r1) + sq(&r2)).sqrt();

    let de = next.e.sub(e_prev)?;
    let mut s = h.t_matmul(&de)?;
    s.add_assign(&next.z.sub(z_prev)?)?;
    let dual = hyper.rho * s.frobenius_norm();

    let root = ((next.b.rows() * t.cols()) as f64).sqrt() * hyper.eps_abs;
    let scale = next
        .e
        .frobenius_norm()
        .max((sq(hb) + sq(&next.b)).sqrt())
        .max(next.z.frobenius_norm())
        .max(t.frobenius_norm());
    let eps_pri = root + hyper.eps_rel * scale;
    let mut hu = h.t_matmul(&next.u1)?;
    hu.add_assign(&next.u2)?;
    let eps_dual = root + hyper.eps_rel * hyper.rho * hu.frobenius_norm();
    Ok(StopReport::new(primal, dual, eps_pri, eps_dual, 0))
}

fn sq(m: &Mat) -> f64 {
    m.as_slice().iter().map(|v| v * v).sum()
}

/// `τ‖HB−T‖₂,₁ + λα‖B‖₂,₁ + λ(1−α)/2‖B‖²_F`.
pub fn gor_objective(h: &Mat, t: &Mat, b: &Mat, hyper: &GorHyper) -> Result<f64> {
    let r = h.matmul(b)?.sub(t)?;
    Ok(hyper.tau * r.l21_norm()
        + hyper.lambda * hyper.alpha * b.l21_norm()
        + 0.5 * hyper.lambda * (1.0 - hyper.alpha) * sq(b))
}

/// GOR-ELM with a freshly inverted `(HᵀH + ηI)`.
pub fn train_gorelm(
    h: &Mat,
    t: &Mat,
    hyper: &GorHyper,
    warm: Option<AdmmState>,
) -> Result<AdmmFit> {
    hyper.validate()?;
    let cache = InverseCache::new(h, hyper.eta())?;
    train_gorelm_with(h, t, hyper, warm, &cache, None)
}

/// GOR-ELM reusing a cached inverse and optionally emitting a CSV trace.
pub fn train_gorelm_with(
    h: &Mat,
    t: &Mat,
    hyper: &GorHyper,
    warm: Option<AdmmState>,
    cache: &InverseCache,
    trace: Option<&mut dyn Write>,
) -> Result<AdmmFit> {
    run_gor(h, t, hyper, warm, cache, trace, true)
}

fn run_gor(
    h: &Mat,
    t: &Mat,
    hyper: &GorHyper,
    warm: Option<AdmmState>,
    cache: &InverseCache,
    mut trace: Option<&mut dyn Write>,
    stop_on_residuals: bool,
) -> Result<AdmmFit> {
    hyper.validate()?;
    if h.rows() != t.rows() {
        return Err(Error::DimensionMismatch {
            op: "train_gorelm",
            left: h.shape(),
            right: t.shape(),
        });
    }
    let mut state = match warm {
        Some(s) => {
            s.check_shapes(h, t, true)?;
            s
        }
        None => AdmmState::zeros(h.rows(), h.cols(), t.cols()),
    };
    let mut report = StopReport::new(f64::NAN, f64::NAN, 0.0, 0.0, 0);
    for it in 1..=hyper.k_max {
        let e_prev = state.e.clone();
        let z_prev = state.z.clone();
        state.b = gor_b_update(h, t, &state, hyper, cache)?;
        state.z = gor_z_update(&state.b, &state.u2, hyper)?;
        state.e = gor_e_update(h, &state.b, t, &state.u1, hyper)?;
        let hb = h.matmul(&state.b)?;
        let (u1, u2) = gor_dual_with(&state, &hb, t)?;
        state.u1 = u1;
        state.u2 = u2;
        state.k += 1;
        if !state.is_finite() {
            return Err(Error::Diverged { iteration: it });
        }
        report = gor_residuals_with(&e_prev, &z_prev, &state, &hb, h, t, hyper)?;
        report.iterations = it;
        if let Some(w) = trace.as_deref_mut() {
            let obj = gor_objective(h, t, &state.b, hyper)?;
            writeln!(
                w,
                "{},{:e},{:e},{:e}",
                state.k, report.primal_norm, report.dual_norm, obj
            )?;
        }
        if stop_on_residuals && report.converged {
            break;
        }
    }
    Ok(AdmmFit {
        weights: state.b.clone(),
        report,
        state,
    })
}

/// GR-ELM by 2-block ADMM on the split `Z = B`.
pub fn train_grelm(h: &Mat, t: &Mat, hyper: &GrHyper, warm: Option<AdmmState>) -> Result<AdmmFit> {
    hyper.validate()?;
    if h.rows() != t.rows() {
        return Err(Error::DimensionMismatch {
            op: "train_grelm",
            left: h.shape(),
            right: t.shape(),
        });
    }
    let (n_tilde, m) = (h.cols(), t.cols());
    let mut state = match warm {
        Some(s) => {
            s.check_shapes(h, t, false)?;
            s
        }
        None => AdmmState::zeros(0, n_tilde, m),
    };
    // divide through by C so the factor is of HᵀH plus a shift
    let shift = (hyper.lambda * (1.0 - hyper.alpha) + hyper.rho) / hyper.c;
    let chol = Cholesky::factor(&h.gram(), shift)?;
    let ht = h.t_matmul(t)?;
    let kappa = hyper.lambda * hyper.alpha / hyper.rho;
    let w = hyper.rho / hyper.c;
    let root = ((n_tilde * m) as f64).sqrt() * hyper.eps_abs;

    let mut report = StopReport::new(f64::NAN, f64::NAN, 0.0, 0.0, 0);
    for it in 1..=hyper.k_max {
        let mut rhs = ht.clone();
        rhs.axpy(w, &state.z)?;
        rhs.axpy(-w, &state.u2)?;
        state.b = chol.solve(&rhs)?;
        let z_next = block_soft_threshold(&state.b.add(&state.u2)?, kappa)?;
        let dz = z_next.sub(&state.z)?;
        state.z = z_next;
        let r = state.b.sub(&state.z)?;
        state.u2.add_assign(&r)?;
        state.k += 1;
        if !state.is_finite() {
            return Err(Error::Diverged { iteration: it });
        }
        let eps_pri = root + hyper.eps_rel * state.b.frobenius_norm().max(state.z.frobenius_norm());
        let eps_dual = root + hyper.eps_rel * hyper.rho * state.u2.frobenius_norm();
        report = StopReport::new(
            r.frobenius_norm(),
            hyper.rho * dz.frobenius_norm(),
            eps_pri,
            eps_dual,
            it,
        );
        if report.converged {
            break;
        }
    }
    Ok(AdmmFit {
        weights: state.b.clone(),
        report,
        state,
    })
}

/// OR-ELM: single-output GOR-ELM with `τ = ρ = 1`, `α = 0`, `λ = 1/C`, run
/// for exactly `iterations` steps.
pub fn train_orelm(h: &Mat, t_col: &Mat, c: f64, iterations: usize) -> Result<Mat> {
    if t_col.cols() != 1 {
        return Err(invalid(
            "t",
            format!(
                "OR-ELM takes one target column, got {}; train each column separately",
                t_col.cols()
            ),
        ));
    }
    if !(c > 0.0 && c.is_finite()) {
        return Err(invalid("C", format!("must be finite and > 0, got {c}")));
    }
    let hyper = orelm_hyper(c, iterations);
    let cache = InverseCache::new(h, hyper.eta())?;
    Ok(run_gor(h, t_col, &hyper, None, &cache, None, false)?.weights)
}

/// The GOR-ELM hyperparameters OR-ELM reduces to.
pub fn orelm_hyper(c: f64, iterations: usize) -> GorHyper {
    GorHyper {
        k_max: iterations,
        ..GorHyper::new(1.0 / c, 0.0)
    }
}

/// Number of rows of `z` that are exactly zero.
pub fn zero_row_count(z: &Mat) -> usize {
    row_norms(z).iter().filter(|&&n| n == 0.0).count()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::closed::{train_relm, RidgeHyper};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random(rows: usize, cols: usize, rng: &mut ChaCha8Rng) -> Mat {
        Mat::from_fn(rows, cols, |_, _| rng.gen_range(-1.0..1.0))
    }

    fn random_state(n: usize, nt: usize, m: usize, rng: &mut ChaCha8Rng) -> AdmmState {
        AdmmState {
            b: random(nt, m, rng),
            z: random(nt, m, rng),
            e: random(n, m, rng),
            u1: random(n, m, rng),
            u2: random(nt, m, rng),
            k: 3,
        }
    }

    #[test]
    fn prox_examples() {
        let a = Mat::from_rows(&[[3.0, 4.0]]);
        let s = block_soft_threshold(&a, 1.0).unwrap();
        assert!(s.max_abs_diff(&Mat::from_rows(&[[2.4, 3.2]])) < 1e-15);
        assert_eq!(block_soft_threshold(&a, 5.0).unwrap(), Mat::zeros(1, 2));
        assert_eq!(block_soft_threshold(&a, 0.0).unwrap(), a);
        assert_eq!(
            block_soft_threshold(&Mat::zeros(2, 2), 1.0).unwrap(),
            Mat::zeros(2, 2)
        );
        assert!(block_soft_threshold(&a, -1.0).is_err());
    }

    #[test]
    fn b_update_examples() {
        let hyper = GorHyper::new(0.0, 0.0);
        let h = Mat::identity(3);
        let t = Mat::from_rows(&[[1.0, 2.0], [3.0, 4.0], [5.0, 6.0]]);
        let cache = InverseCache::new(&h, hyper.eta()).unwrap();
        let b = gor_b_update(&h, &t, &AdmmState::zeros(3, 3, 2), &hyper, &cache).unwrap();
        assert!(b.max_abs_diff(&t.scale(0.5)) < 1e-15);
        let zero = gor_b_update(
            &h,
            &Mat::zeros(3, 2),
            &AdmmState::zeros(3, 3, 2),
            &hyper,
            &cache,
        )
        .unwrap();
        assert_eq!(zero, Mat::zeros(3, 2));
        let other = GorHyper::new(2.0, 0.0);
        assert!(matches!(
            gor_b_update(&h, &t, &AdmmState::zeros(3, 3, 2), &other, &cache),
            Err(Error::StaleCache { .. })
        ));
    }

    /// B-subproblem objective, differentiated numerically.
    fn b_subproblem(h: &Mat, t: &Mat, s: &AdmmState, hy: &GorHyper, b: &Mat) -> f64 {
        let mut r1 = h.matmul(b).unwrap().sub(t).unwrap();
        r1.axpy(-1.0, &s.e).unwrap();
        r1.add_assign(&s.u1).unwrap();
        let mut r2 = b.sub(&s.z).unwrap();
        r2.add_assign(&s.u2).unwrap();
        0.5 * hy.lambda * (1.0 - hy.alpha) * sq(b) + 0.5 * hy.rho * (sq(&r1) + sq(&r2))
    }

    #[test]
    fn b_update_is_stationary() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let (n, nt, m) = (15, 6, 2);
        let h = random(n, nt, &mut rng);
        let t = random(n, m, &mut rng);
        let s = random_state(n, nt, m, &mut rng);
        let hy = GorHyper {
            rho: 1.7,
            ..GorHyper::new(0.8, 0.3)
        };
        let cache = InverseCache::new(&h, hy.eta()).unwrap();
        let b = gor_b_update(&h, &t, &s, &hy, &cache).unwrap();
        let step = 1e-5;
        let mut grad = Mat::zeros(nt, m);
        for i in 0..nt {
            for j in 0..m {
                let mut p = b.clone();
                p[(i, j)] += step;
                let mut q = b.clone();
                q[(i, j)] -= step;
                grad[(i, j)] = (b_subproblem(&h, &t, &s, &hy, &p)
                    - b_subproblem(&h, &t, &s, &hy, &q))
                    / (2.0 * step);
            }
        }
        assert!(grad.frobenius_norm() < 1e-5 * (1.0 + b.frobenius_norm()));
    }

    #[test]
    fn z_and_e_updates() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let b = random(5, 3, &mut rng);
        let u2 = random(5, 3, &mut rng);
        let hy = GorHyper::new(0.0, 0.0);
        assert_eq!(gor_z_update(&b, &u2, &hy).unwrap(), b.add(&u2).unwrap());
        let big = GorHyper::new(100.0, 1.0);
        assert_eq!(gor_z_update(&b, &u2, &big).unwrap(), Mat::zeros(5, 3));

        // scalar prox oracle, one row at a time
        let hy = GorHyper::new(1.3, 0.5);
        let z = gor_z_update(&b, &u2, &hy).unwrap();
        let kappa = 0.65;
        for i in 0..5 {
            let a: Vec<f64> = (0..3).map(|j| b[(i, j)] + u2[(i, j)]).collect();
            let norm = a.iter().map(|x| x * x).sum::<f64>().sqrt();
            for j in 0..3 {
                let want = if norm <= kappa {
                    0.0
                } else {
                    a[j] * (norm - kappa) / norm
                };
                assert!((z[(i, j)] - want).abs() < 1e-15);
            }
        }

        let h = Mat::identity(3);
        let t = Mat::from_rows(&[[0.0, 0.0], [2.0, 0.0], [0.0, 0.1]]);
        let hy = GorHyper::new(1.0, 0.0);
        let e = gor_e_update(&h, &Mat::zeros(3, 2), &t, &Mat::zeros(3, 2), &hy).unwrap();
        assert!(e.max_abs_diff(&Mat::from_rows(&[[0.0, 0.0], [-1.0, 0.0], [0.0, 0.0]])) < 1e-15);
        let e = gor_e_update(&h, &t, &t, &Mat::zeros(3, 2), &hy).unwrap();
        assert_eq!(e, Mat::zeros(3, 2));
    }

    #[test]
    fn dual_update_accumulates() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let h = random(4, 3, &mut rng);
        let t = random(4, 2, &mut rng);
        let mut s = AdmmState::zeros(4, 3, 2);
        s.b = random(3, 2, &mut rng);
        s.z = s.b.clone();
        s.e = h.matmul(&s.b).unwrap().sub(&t).unwrap();
        let (u1, u2) = gor_dual_update(&s, &h, &t).unwrap();
        assert!(u1.frobenius_norm() < 1e-15 && u2.frobenius_norm() == 0.0);

        s.e = Mat::zeros(4, 2);
        let m1 = h.matmul(&s.b).unwrap().sub(&t).unwrap();
        let (u1, _) = gor_dual_update(&s, &h, &t).unwrap();
        assert!(u1.max_abs_diff(&m1) < 1e-15);
        s.u1 = u1;
        let (u1, _) = gor_dual_update(&s, &h, &t).unwrap();
        assert!(u1.max_abs_diff(&m1.scale(2.0)) < 1e-14);
    }

    /// Stacked operators of `ÃE + B̃B + C̃Z = D̃`: `Ã = [−I; 0]`,
    /// `B̃ = [H; I]`, `C̃ = [0; −I]`.
    fn stacked(h: &Mat) -> (Mat, Mat, Mat) {
        let (n, nt) = h.shape();
        let a = Mat::from_fn(n + nt, n, |i, j| if i == j { -1.0 } else { 0.0 });
        let b = h.vcat(&Mat::identity(nt)).unwrap();
        let c = Mat::from_fn(n + nt, nt, |i, j| if i == n + j { -1.0 } else { 0.0 });
        (a, b, c)
    }

    #[test]
    fn residuals_match_materialized_operators() {
        let mut rng = ChaCha8Rng::seed_from_u64(10);
        let (n, nt, m) = (12, 5, 3);
        let h = random(n, nt, &mut rng);
        let t = random(n, m, &mut rng);
        let prev = random_state(n, nt, m, &mut rng);
        let next = random_state(n, nt, m, &mut rng);
        let hy = GorHyper {
            rho: 1.4,
            ..GorHyper::new(0.5, 0.5)
        };
        let rep = gor_residuals(&prev, &next, &h, &t, &hy).unwrap();

        let (a, b, c) = stacked(&h);
        let d = t.vcat(&Mat::zeros(nt, m)).unwrap();
        let ae = a.matmul(&next.e).unwrap();
        let bb = b.matmul(&next.b).unwrap();
        let cz = c.matmul(&next.z).unwrap();
        let r = ae.add(&bb).unwrap().add(&cz).unwrap().sub(&d).unwrap();
        let de = next.e.sub(&prev.e).unwrap();
        let dz = next.z.sub(&prev.z).unwrap();
        let s = b
            .t_matmul(&a.matmul(&de).unwrap().add(&c.matmul(&dz).unwrap()).unwrap())
            .unwrap()
            .scale(hy.rho);
        assert!((rep.primal_norm - r.frobenius_norm()).abs() < 1e-10);
        assert!((rep.dual_norm - s.frobenius_norm()).abs() < 1e-10);

        let root = ((m * nt) as f64).sqrt() * hy.eps_abs;
        let scale = ae
            .frobenius_norm()
            .max(bb.frobenius_norm())
            .max(cz.frobenius_norm())
            .max(d.frobenius_norm());
        let u = next.u1.vcat(&next.u2).unwrap();
        let eps_dual = root + hy.eps_rel * b.t_matmul(&u.scale(hy.rho)).unwrap().frobenius_norm();
        assert!((rep.eps_pri - (root + hy.eps_rel * scale)).abs() < 1e-10);
        assert!((rep.eps_dual - eps_dual).abs() < 1e-10);
    }

    #[test]
    fn split_blocks_are_orthogonal() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let h = random(9, 4, &mut rng);
        let (a, _, c) = stacked(&h);
        assert_eq!(a.t_matmul(&c).unwrap(), Mat::zeros(9, 4));
    }

    #[test]
    fn residual_trivia() {
        let mut rng = ChaCha8Rng::seed_from_u64(12);
        let h = random(6, 3, &mut rng);
        let t = random(6, 2, &mut rng);
        let mut s = random_state(6, 3, 2, &mut rng);
        s.z = s.b.clone();
        s.e = h.matmul(&s.b).unwrap().sub(&t).unwrap();
        let rep = gor_residuals(&s, &s, &h, &t, &GorHyper::new(1.0, 0.5)).unwrap();
        assert!(rep.primal_norm < 1e-15);
        assert_eq!(rep.dual_norm, 0.0);
    }

    #[test]
    fn zero_target_converges_at_once() {
        let mut rng = ChaCha8Rng::seed_from_u64(13);
        let h = random(20, 5, &mut rng);
        let fit = train_gorelm(&h, &Mat::zeros(20, 2), &GorHyper::new(1.0, 0.5), None).unwrap();
        assert_eq!(fit.weights, Mat::zeros(5, 2));
        assert!(fit.report.converged);
        assert_eq!(fit.report.iterations, 1);
    }

    fn toy(seed: u64, n: usize, nt: usize, m: usize) -> (Mat, Mat) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        (random(n, nt, &mut rng), random(n, m, &mut rng))
    }

    #[test]
    fn converged_report_satisfies_thresholds() {
        let (h, t) = toy(14, 40, 10, 3);
        let hy = GorHyper::new(0.5, 0.5);
        let fit = train_gorelm(&h, &t, &hy, None).unwrap();
        let r = fit.report;
        assert!(r.converged);
        assert!(r.primal_norm < r.eps_pri && r.dual_norm < r.eps_dual);
        assert_eq!(fit.state.k, r.iterations);
    }

    #[test]
    fn warm_restart_finishes_quickly() {
        let (h, t) = toy(15, 40, 10, 3);
        let hy = GorHyper::new(0.5, 0.5);
        let fit = train_gorelm(&h, &t, &hy, None).unwrap();
        let again = train_gorelm(&h, &t, &hy, Some(fit.state)).unwrap();
        assert!(again.report.converged && again.report.iterations <= 2);
    }

    #[test]
    fn objective_beats_random_perturbations() {
        let (h, t) = toy(16, 30, 10, 2);
        let hy = GorHyper {
            eps_abs: 1e-9,
            eps_rel: 1e-9,
            k_max: 20000,
            ..GorHyper::new(0.5, 0.5)
        };
        let fit = train_gorelm(&h, &t, &hy, None).unwrap();
        let f0 = gor_objective(&h, &t, &fit.weights, &hy).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        for _ in 0..200 {
            let d = random(10, 2, &mut rng);
            let d = d.scale(1e-2 / d.frobenius_norm());
            let f = gor_objective(&h, &t, &fit.weights.add(&d).unwrap(), &hy).unwrap();
            assert!(f0 <= f + 1e-9, "{f0} > {f}");
        }
    }

    #[test]
    fn trace_rows_are_emitted() {
        let (h, t) = toy(18, 20, 5, 2);
        let hy = GorHyper::new(0.5, 0.0);
        let cache = InverseCache::new(&h, hy.eta()).unwrap();
        let mut buf = Vec::new();
        let fit = train_gorelm_with(&h, &t, &hy, None, &cache, Some(&mut buf)).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert_eq!(text.lines().count(), fit.report.iterations);
        assert_eq!(
            text.lines().next().unwrap().split(',').count(),
            TRACE_HEADER.split(',').count()
        );
    }

    #[test]
    fn rejects_bad_hyper_and_shapes() {
        let (h, t) = toy(19, 10, 4, 2);
        assert!(train_gorelm(
            &h,
            &t,
            &GorHyper {
                tau: 0.0,
                ..GorHyper::new(0.0, 0.0)
            },
            None
        )
        .is_err());
        assert!(train_gorelm(&h, &t, &GorHyper::new(1.0, 1.5), None).is_err());
        assert!(train_gorelm(&h, &Mat::zeros(9, 2), &GorHyper::new(1.0, 0.5), None).is_err());
        assert!(train_gorelm(
            &h,
            &t,
            &GorHyper::new(1.0, 0.5),
            Some(AdmmState::zeros(10, 5, 2))
        )
        .is_err());
    }

    #[test]
    fn grelm_matches_ridge_oracle() {
        let (h, t) = toy(20, 100, 50, 3);
        for c in [0.125, 1.0, 8.0] {
            let hy = GrHyper {
                eps_abs: 1e-8,
                eps_rel: 1e-8,
                k_max: 5000,
                ..GrHyper::new(c, 0.0)
            };
            let fit = train_grelm(&h, &t, &hy, None).unwrap();
            let oracle = train_relm(&h, &t, RidgeHyper::new(c).unwrap()).unwrap();
            assert!(fit.weights.relative_error(&oracle) < 1e-6, "C={c}");
        }
    }

    #[test]
    fn grelm_limits() {
        let (h, t) = toy(21, 30, 8, 2);
        let free = train_grelm(
            &h,
            &t,
            &GrHyper {
                lambda: 0.0,
                ..GrHyper::new(1.0, 0.5)
            },
            None,
        )
        .unwrap();
        assert!(free.state.b.relative_error(&free.state.z) < 1e-2);
        let heavy = train_grelm(
            &h,
            &t,
            &GrHyper {
                lambda: 1e6,
                ..GrHyper::new(1.0, 1.0)
            },
            None,
        )
        .unwrap();
        assert_eq!(zero_row_count(&heavy.state.z), 8);
        assert!(heavy.report.converged && heavy.weights.frobenius_norm() < heavy.report.eps_pri);
    }

    #[test]
    fn orelm_is_gorelm_specialization() {
        let (h, t) = toy(22, 25, 6, 1);
        let beta = train_orelm(&h, &t, 4.0, 20).unwrap();
        let hy = orelm_hyper(4.0, 20);
        let cache = InverseCache::new(&h, hy.eta()).unwrap();
        let direct = run_gor(&h, &t, &hy, None, &cache, None, false).unwrap();
        assert_eq!(beta, direct.weights);
        assert_eq!(direct.report.iterations, 20);
        assert_eq!(
            train_orelm(&h, &Mat::zeros(25, 1), 4.0, 20).unwrap(),
            Mat::zeros(6, 1)
        );
        assert!(train_orelm(&h, &Mat::zeros(25, 2), 4.0, 20).is_err());
    }

    #[test]
    fn orelm_resists_single_outlier() {
        // nine points on a line plus one gross outlier, features [x, 1]
        let xs: Vec<f64> = (0..10).map(|i| i as f64 / 9.0).collect();
        let h = Mat::from_fn(10, 2, |i, j| if j == 0 { xs[i] } else { 1.0 });
        let mut t = Mat::from_fn(10, 1, |i, _| 2.0 * xs[i] + 0.5);
        t[(6, 0)] += 10.0;
        let c = 100.0;
        let beta = train_orelm(&h, &t, c, 20).unwrap();
        let ridge = train_relm(&h, &t, RidgeHyper::new(c).unwrap()).unwrap();
        let res = |b: &Mat| h.matmul(b).unwrap().sub(&t).unwrap().column(0);
        let mut r: Vec<f64> = res(&beta).iter().map(|v| v.abs()).collect();
        let outlier = r[6];
        let inlier_err = |rr: &[f64]| {
            rr.iter()
                .enumerate()
                .filter(|(i, _)| *i != 6)
                .map(|(_, v)| v.abs())
                .sum::<f64>()
        };
        assert!(inlier_err(&r) < inlier_err(&res(&ridge)));
        r.sort_by(f64::total_cmp);
        assert!(outlier > 10.0 * r[5]);
    }
}
