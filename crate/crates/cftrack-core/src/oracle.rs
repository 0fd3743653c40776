//! Dense reference implementations.
//!
//! Everything here deliberately takes the slow road: explicit selection
//! matrices, explicit shifted-sample matrices, generic Gaussian
//! elimination, explicit `D x D` inverses. These routes share no code with
//! the fast spectral paths, which makes them usable as independent oracles
//! by both the test suites and the `selftest` command.

use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::features::FeatureStack;
use crate::solver::PenalizationMask;
use crate::spectral::{CropSpec, Plane};

/// Dense `M x N` selection matrix realizing a centered crop.
pub fn crop_matrix(spec: &CropSpec) -> Vec<Vec<f64>> {
    let inner = spec.inner();
    let outer = spec.outer();
    let (or, oc) = spec.offset();
    let mut b = vec![vec![0.0; outer.len()]; inner.len()];
    for r in 0..inner.h {
        for c in 0..inner.w {
            b[inner.index(r, c)][outer.index(or + r, oc + c)] = 1.0;
        }
    }
    b
}

/// Dense `N x N` shifted-sample matrix for one channel: row `n` holds the
/// channel circularly shifted by the 2-D offset that `n` encodes, so
/// entry `(n, j) = x((j1 - n1) mod H, (j2 - n2) mod W)`.
pub fn shifted_sample_matrix(x: &Plane) -> Vec<Vec<f64>> {
    let g = x.grid();
    let n = g.len();
    let mut m = vec![vec![0.0; n]; n];
    for n1 in 0..g.h {
        for n2 in 0..g.w {
            let row = g.index(n1, n2);
            for j1 in 0..g.h {
                for j2 in 0..g.w {
                    let s1 = (j1 + g.h - n1) % g.h;
                    let s2 = (j2 + g.w - n2) % g.w;
                    m[row][g.index(j1, j2)] = x.at(s1, s2);
                }
            }
        }
    }
    m
}

/// Objective evaluated through the stacked matrix form: dense selection
/// matrix, dense per-channel shifted-sample matrices, explicit
/// matrix-vector products. `y0` is the wrapped desired response.
pub fn objective_matrix_form(
    w: &[Plane],
    x: &FeatureStack,
    y0: &Plane,
    p: &PenalizationMask,
) -> Result<f64> {
    let outer = x.grid();
    if y0.grid() != outer {
        return Err(Error::GridMismatch {
            expected: outer,
            got: y0.grid(),
        });
    }
    let inner = p.grid();
    let spec = CropSpec::centered(outer, inner)?;
    let b = crop_matrix(&spec);
    let n = outer.len();
    let m = inner.len();

    // model = sum_d X^d B^T w^d
    let mut model = vec![0.0; n];
    for (d, wd) in w.iter().enumerate() {
        if wd.grid() != inner {
            return Err(Error::GridMismatch {
                expected: inner,
                got: wd.grid(),
            });
        }
        let xd = shifted_sample_matrix(x.channel(d));
        // B^T w
        let mut embedded = vec![0.0; n];
        for mm in 0..m {
            for nn in 0..n {
                embedded[nn] += b[mm][nn] * wd.as_slice()[mm];
            }
        }
        for nn in 0..n {
            let mut acc = 0.0;
            for jj in 0..n {
                acc += xd[nn][jj] * embedded[jj];
            }
            model[nn] += acc;
        }
    }

    let data: f64 = (0..n).map(|i| (y0.as_slice()[i] - model[i]).powi(2)).sum();
    let reg: f64 = w
        .iter()
        .map(|wd| {
            wd.iter()
                .zip(p.weights().iter())
                .map(|(wv, pv)| (pv * wv).powi(2))
                .sum::<f64>()
        })
        .sum();
    Ok(0.5 * data + reg)
}

/// Gaussian elimination with partial pivoting on a dense real system.
pub fn solve_dense_real(mut a: Vec<Vec<f64>>, mut b: Vec<f64>) -> Result<Vec<f64>> {
    let n = b.len();
    for col in 0..n {
        let pivot = (col..n)
            .max_by(|&i, &j| a[i][col].abs().total_cmp(&a[j][col].abs()))
            .unwrap();
        if a[pivot][col].abs() < 1e-14 {
            return Err(Error::InvalidParameter("singular dense system".into()));
        }
        a.swap(col, pivot);
        b.swap(col, pivot);
        for row in col + 1..n {
            let f = a[row][col] / a[col][col];
            for k in col..n {
                a[row][k] -= f * a[col][k];
            }
            b[row] -= f * b[col];
        }
    }
    let mut x = vec![0.0; n];
    for col in (0..n).rev() {
        let mut acc = b[col];
        for k in col + 1..n {
            acc -= a[col][k] * x[k];
        }
        x[col] = acc / a[col][col];
    }
    Ok(x)
}

/// Gaussian elimination with partial pivoting on a dense complex system.
pub fn solve_dense_complex(
    mut a: Vec<Vec<Complex64>>,
    mut b: Vec<Complex64>,
) -> Result<Vec<Complex64>> {
    let n = b.len();
    for col in 0..n {
        let pivot = (col..n)
            .max_by(|&i, &j| a[i][col].norm_sqr().total_cmp(&a[j][col].norm_sqr()))
            .unwrap();
        if a[pivot][col].norm_sqr() < 1e-28 {
            return Err(Error::InvalidParameter("singular dense system".into()));
        }
        a.swap(col, pivot);
        b.swap(col, pivot);
        for row in col + 1..n {
            let f = a[row][col] / a[col][col];
            for k in col..n {
                let v = a[col][k];
                a[row][k] -= f * v;
            }
            let v = b[col];
            b[row] -= f * v;
        }
    }
    let mut x = vec![Complex64::ZERO; n];
    for col in (0..n).rev() {
        let mut acc = b[col];
        for k in col + 1..n {
            acc -= a[col][k] * x[k];
        }
        x[col] = acc / a[col][col];
    }
    Ok(x)
}

/// Per-bin reference solve through the explicit `D x D` inverse of
/// `(x x^H + mu I)` applied to `x*y - zeta + mu*w`.
pub fn solve_g_pixel_dense(
    x: &[Complex64],
    y: Complex64,
    zeta: &[Complex64],
    w: &[Complex64],
    mu: f64,
) -> Result<Vec<Complex64>> {
    let d = x.len();
    let mut a = vec![vec![Complex64::ZERO; d]; d];
    for i in 0..d {
        for j in 0..d {
            a[i][j] = x[i] * x[j].conj();
            if i == j {
                a[i][j] += mu;
            }
        }
    }
    let rhs: Vec<Complex64> = (0..d).map(|i| x[i] * y - zeta[i] + mu * w[i]).collect();
    solve_dense_complex(a, rhs)
}

/// Global minimizer of the training objective by dense normal equations:
/// `(A^T A + 2 diag(p~^2)) w = A^T y0` with `A` the stacked
/// shifted-and-cropped sample matrix. `y0` is the wrapped desired response.
pub fn optimal_filter_dense(
    x: &FeatureStack,
    y0: &Plane,
    p: &PenalizationMask,
) -> Result<Vec<Plane>> {
    let outer = x.grid();
    if y0.grid() != outer {
        return Err(Error::GridMismatch {
            expected: outer,
            got: y0.grid(),
        });
    }
    let inner = p.grid();
    let spec = CropSpec::centered(outer, inner)?;
    let (or, oc) = spec.offset();
    let n = outer.len();
    let m = inner.len();
    let d = x.channels();
    let cols = d * m;

    // A[row][d*M + m] = x^d(q_m - n) with q_m the absolute inner position.
    let mut a = vec![vec![0.0; cols]; n];
    for n1 in 0..outer.h {
        for n2 in 0..outer.w {
            let row = outer.index(n1, n2);
            for dd in 0..d {
                let xd = x.channel(dd);
                for m1 in 0..inner.h {
                    for m2 in 0..inner.w {
                        let s1 = (or + m1 + outer.h - n1) % outer.h;
                        let s2 = (oc + m2 + outer.w - n2) % outer.w;
                        a[row][dd * m + inner.index(m1, m2)] = xd.at(s1, s2);
                    }
                }
            }
        }
    }

    let mut normal = vec![vec![0.0; cols]; cols];
    let mut rhs = vec![0.0; cols];
    for i in 0..cols {
        for j in i..cols {
            let mut acc = 0.0;
            for row in 0..n {
                acc += a[row][i] * a[row][j];
            }
            normal[i][j] = acc;
            normal[j][i] = acc;
        }
        let mut acc = 0.0;
        for row in 0..n {
            acc += a[row][i] * y0.as_slice()[row];
        }
        rhs[i] = acc;
    }
    for dd in 0..d {
        for mm in 0..m {
            let pv = p.weights().as_slice()[mm];
            normal[dd * m + mm][dd * m + mm] += 2.0 * pv * pv;
        }
    }

    let flat = solve_dense_real(normal, rhs)?;
    (0..d)
        .map(|dd| Plane::from_vec(inner, flat[dd * m..(dd + 1) * m].to_vec()))
        .collect()
}
