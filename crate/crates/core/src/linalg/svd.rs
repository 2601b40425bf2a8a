//! Thin SVD by one-sided (Hestenes) Jacobi rotations, and the pseudoinverse built on it.

use super::Mat;

const MAX_SWEEPS: usize = 80;

/// Thin SVD of a tall matrix held column-major: returns (U columns, σ, V columns).
fn jacobi_tall(a: &Mat) -> (Vec<Vec<f64>>, Vec<f64>, Vec<Vec<f64>>) {
    let (m, n) = a.shape();
    debug_assert!(m >= n);
    let mut w: Vec<Vec<f64>> = (0..n).map(|j| a.column(j)).collect();
    let mut v: Vec<Vec<f64>> = (0..n)
        .map(|j| {
            let mut e = vec![0.0; n];
            e[j] = 1.0;
            e
        })
        .collect();
    let mut norms: Vec<f64> = w.iter().map(|c| super::dot(c, c)).collect();
    let eps = f64::EPSILON;

    for _ in 0..MAX_SWEEPS {
        let mut rotated = false;
        for p in 0..n {
            for q in p + 1..n {
                let alpha = norms[p];
                let beta = norms[q];
                if alpha == 0.0 || beta == 0.0 {
                    continue;
                }
                let gamma = super::dot(&w[p], &w[q]);
                if gamma.abs() <= eps * (alpha * beta).sqrt() {
                    continue;
                }
                rotated = true;
                let zeta = (beta - alpha) / (2.0 * gamma);
                let t = zeta.signum() / (zeta.abs() + (1.0 + zeta * zeta).sqrt());
                let c = 1.0 / (1.0 + t * t).sqrt();
                let s = c * t;
                let (wp, wq) = pair_mut(&mut w, p, q);
                for (x, y) in wp.iter_mut().zip(wq.iter_mut()) {
                    let (xp, xq) = (*x, *y);
                    *x = c * xp - s * xq;
                    *y = s * xp + c * xq;
                }
                let (vp, vq) = pair_mut(&mut v, p, q);
                for (x, y) in vp.iter_mut().zip(vq.iter_mut()) {
                    let (xp, xq) = (*x, *y);
                    *x = c * xp - s * xq;
                    *y = s * xp + c * xq;
                }
                norms[p] = super::dot(&w[p], &w[p]);
                norms[q] = super::dot(&w[q], &w[q]);
            }
        }
        if !rotated {
            break;
        }
    }

    let sigma: Vec<f64> = norms.iter().map(|x| x.sqrt()).collect();
    let u = w
        .into_iter()
        .zip(&sigma)
        .map(|(col, &s)| {
            if s > 0.0 {
                col.into_iter().map(|x| x / s).collect()
            } else {
                vec![0.0; m]
            }
        })
        .collect();
    (u, sigma, v)
}

fn pair_mut<T>(v: &mut [T], p: usize, q: usize) -> (&mut T, &mut T) {
    debug_assert!(p < q);
    let (lo, hi) = v.split_at_mut(q);
    (&mut lo[p], &mut hi[0])
}

/// Singular values in descending order.
pub fn singular_values(a: &Mat) -> Vec<f64> {
    let tall = if a.rows() >= a.cols() {
        a.clone()
    } else {
        a.transpose()
    };
    let (_, mut s, _) = jacobi_tall(&tall);
    s.sort_by(|x, y| y.total_cmp(x));
    s
}

/// Moore-Penrose pseudoinverse.
///
/// Singular values at or below `max(rows, cols) · σ_max · 1e-12` are treated as zero.
/// The Jacobi sweep always runs over the smaller dimension.
pub fn pinv(a: &Mat) -> Mat {
    pinv_with_cutoff(a, 0.0)
}

/// Pseudoinverse that additionally drops singular values at or below `abs_cutoff`.
pub fn pinv_with_cutoff(a: &Mat, abs_cutoff: f64) -> Mat {
    let (rows, cols) = a.shape();
    if rows == 0 || cols == 0 {
        return Mat::zeros(cols, rows);
    }
    let wide = rows < cols;
    let tall = if wide { a.transpose() } else { a.clone() };
    let (u, sigma, v) = jacobi_tall(&tall);
    let smax = sigma.iter().cloned().fold(0.0, f64::max);
    let cutoff = (rows.max(cols) as f64 * smax * 1e-12).max(abs_cutoff);

    // tall⁺ = V Σ⁺ Uᵀ has shape (tall.cols × tall.rows)
    let (tm, tn) = tall.shape();
    let mut out = Mat::zeros(tn, tm);
    for (k, &s) in sigma.iter().enumerate() {
        if s <= cutoff || s == 0.0 {
            continue;
        }
        let inv = 1.0 / s;
        for (i, &vk) in v[k].iter().enumerate().take(tn) {
            let vi = vk * inv;
            if vi == 0.0 {
                continue;
            }
            for (o, &uj) in out.row_mut(i).iter_mut().zip(&u[k]) {
                *o += vi * uj;
            }
        }
    }
    if wide {
        out.transpose()
    } else {
        out
    }
}
