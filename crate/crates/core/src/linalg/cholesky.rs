use super::Mat;
use crate::error::{invalid, Error, Result};

const SYMMETRY_TOL: f64 = 1e-10;

/// Lower-triangular Cholesky factor of `g + shift·I`.
#[derive(Clone, Debug)]
pub struct Cholesky {
    l: Mat,
}

impl Cholesky {
    pub fn factor(g: &Mat, shift: f64) -> Result<Self> {
        if g.rows() != g.cols() {
            return Err(Error::DimensionMismatch {
                op: "cholesky",
                left: g.shape(),
                right: (g.cols(), g.rows()),
            });
        }
        if !(shift >= 0.0 && shift.is_finite()) {
            return Err(invalid(
                "shift",
                format!("must be finite and >= 0, got {shift}"),
            ));
        }
        let n = g.rows();
        let scale = g.as_slice().iter().fold(1.0f64, |m, v| m.max(v.abs()));
        let mut deviation = 0.0f64;
        for i in 0..n {
            for j in 0..i {
                deviation = deviation.max((g[(i, j)] - g[(j, i)]).abs());
            }
        }
        if deviation > SYMMETRY_TOL * scale {
            return Err(Error::NotSymmetric { deviation });
        }

        let mut l = Mat::zeros(n, n);
        for j in 0..n {
            let mut d = g[(j, j)] + shift;
            {
                let lj = l.row(j);
                d -= lj[..j].iter().map(|v| v * v).sum::<f64>();
            }
            if d.is_nan() || d <= 0.0 || !d.is_finite() {
                return Err(Error::NotPositiveDefinite { pivot: j });
            }
            let djj = d.sqrt();
            l[(j, j)] = djj;
            for i in j + 1..n {
                let s = {
                    let (li, lj) = (l.row(i), l.row(j));
                    super::dot(&li[..j], &lj[..j])
                };
                // lower triangle of the symmetric input
                l[(i, j)] = (g[(i, j)] - s) / djj;
            }
        }
        Ok(Self { l })
    }

    pub fn dim(&self) -> usize {
        self.l.rows()
    }

    /// Solves `(g + shift·I) X = rhs` by forward and back substitution.
    pub fn solve(&self, rhs: &Mat) -> Result<Mat> {
        let n = self.dim();
        if rhs.rows() != n {
            return Err(Error::DimensionMismatch {
                op: "solve_spd",
                left: (n, n),
                right: rhs.shape(),
            });
        }
        let q = rhs.cols();
        let mut y = rhs.clone();
        // L y = rhs, row-wise over all right-hand sides at once
        for i in 0..n {
            let (done, rest) = y.data.split_at_mut(i * q);
            let yi = &mut rest[..q];
            for (k, &lik) in self.l.row(i)[..i].iter().enumerate() {
                if lik != 0.0 {
                    for (v, &yk) in yi.iter_mut().zip(&done[k * q..(k + 1) * q]) {
                        *v -= lik * yk;
                    }
                }
            }
            let d = self.l[(i, i)];
            yi.iter_mut().for_each(|v| *v /= d);
        }
        // Lᵀ x = y
        for i in (0..n).rev() {
            let (head, done) = y.data.split_at_mut((i + 1) * q);
            let yi = &mut head[i * q..];
            for k in i + 1..n {
                let lki = self.l[(k, i)];
                if lki != 0.0 {
                    let off = (k - i - 1) * q;
                    for (v, &yk) in yi.iter_mut().zip(&done[off..off + q]) {
                        *v -= lki * yk;
                    }
                }
            }
            let d = self.l[(i, i)];
            yi.iter_mut().for_each(|v| *v /= d);
        }
        Ok(y)
    }

    /// Explicit symmetric inverse.
    pub fn inverse(&self) -> Mat {
        let n = self.dim();
        let inv = self
            .solve(&Mat::identity(n))
            .expect("identity has matching rows");
        Mat::from_fn(n, n, |i, j| 0.5 * (inv[(i, j)] + inv[(j, i)]))
    }
}

/// Solves `(g + shift·I) X = rhs` through a Cholesky factorization.
pub fn solve_spd(g: &Mat, shift: f64, rhs: &Mat) -> Result<Mat> {
    if rhs.rows() != g.rows() {
        return Err(Error::DimensionMismatch {
            op: "solve_spd",
            left: g.shape(),
            right: rhs.shape(),
        });
    }
    Cholesky::factor(g, shift)?.solve(rhs)
}

/// Explicit inverse of `g + shift·I`.
pub fn invert_spd(g: &Mat, shift: f64) -> Result<Mat> {
    Ok(Cholesky::factor(g, shift)?.inverse())
}
