//! Dense symmetric eigendecomposition and thin SVD.
//!
//! The SVD goes through the Gram matrix of the narrower side, which suits the
//! very rectangular unfoldings produced by feature tensors (thousands of
//! channels against a few dozen spatial positions). The eigenproblem is
//! solved with cyclic Jacobi rotations.

use crate::error::{Error, Result};
use crate::tensor::DenseMatrix;

const MAX_SWEEPS: usize = 50;
/// Singular values below this fraction of the largest get completed columns.
pub const RANK_TOLERANCE: f64 = 1e-12;

/// Eigenvalues sorted descending, with the matching eigenvectors as columns.
#[derive(Clone, Debug)]
pub struct SymEig {
    pub values: Vec<f64>,
    pub vectors: DenseMatrix,
    pub sweeps: usize,
}

/// Thin SVD `M = U · diag(sigma) · Vᵀ`.
#[derive(Clone, Debug)]
pub struct SvdResult {
    pub u: DenseMatrix,
    pub sigma: Vec<f64>,
    pub v: DenseMatrix,
}

impl SvdResult {
    /// `U · diag(sigma) · Vᵀ`.
    pub fn reconstruct(&self) -> DenseMatrix {
        let (m, k) = self.u.shape();
        let n = self.v.rows();
        let mut out = DenseMatrix::zeros(m, n);
        for i in 0..m {
            for j in 0..n {
                let mut acc = 0.0;
                for (l, s) in self.sigma.iter().enumerate().take(k) {
                    acc += self.u.get(i, l) * s * self.v.get(j, l);
                }
                out.set(i, j, acc);
            }
        }
        out
    }
}

/// Eigendecomposition of a symmetric matrix by cyclic Jacobi sweeps.
pub fn sym_eig(s: &DenseMatrix) -> Result<SymEig> {
    let (rows, cols) = s.shape();
    if rows != cols {
        return Err(Error::NotSquare { rows, cols });
    }
    let n = rows;
    let norm = s.frobenius_norm();
    let sym_tol = 1e-10 * norm.max(1.0);
    for i in 0..n {
        for j in 0..i {
            let diff = (s.get(i, j) - s.get(j, i)).abs();
            if diff > sym_tol {
                return Err(Error::NotSymmetric { row: i, col: j, diff });
            }
        }
    }

    let mut a: Vec<f64> = s.data().to_vec();
    // symmetrize exactly so the rotations below can update both triangles
    for i in 0..n {
        for j in 0..i {
            let avg = 0.5 * (a[i * n + j] + a[j * n + i]);
            a[i * n + j] = avg;
            a[j * n + i] = avg;
        }
    }
    let mut v = DenseMatrix::identity(n);
    let stop = f64::EPSILON * norm;

    let mut sweeps = 0;
    while sweeps < MAX_SWEEPS {
        let off = (0..n)
            .flat_map(|p| (p + 1..n).map(move |q| (p, q)))
            .map(|(p, q)| a[p * n + q].abs())
            .fold(0.0, f64::max);
        if off <= stop {
            break;
        }
        sweeps += 1;
        for p in 0..n {
            for q in p + 1..n {
                let apq = a[p * n + q];
                if apq == 0.0 {
                    continue;
                }
                let theta = (a[q * n + q] - a[p * n + p]) / (2.0 * apq);
                let t = if theta.abs() > 1e150 {
                    0.5 / theta
                } else {
                    theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt())
                };
                let c = 1.0 / (t * t + 1.0).sqrt();
                let sn = t * c;

                a[p * n + p] -= t * apq;
                a[q * n + q] += t * apq;
                a[p * n + q] = 0.0;
                a[q * n + p] = 0.0;
                for r in 0..n {
                    if r == p || r == q {
                        continue;
                    }
                    let arp = a[r * n + p];
                    let arq = a[r * n + q];
                    let new_rp = c * arp - sn * arq;
                    let new_rq = sn * arp + c * arq;
                    a[r * n + p] = new_rp;
                    a[p * n + r] = new_rp;
                    a[r * n + q] = new_rq;
                    a[q * n + r] = new_rq;
                }
                for r in 0..n {
                    let vrp = v.get(r, p);
                    let vrq = v.get(r, q);
                    v.set(r, p, c * vrp - sn * vrq);
                    v.set(r, q, sn * vrp + c * vrq);
                }
            }
        }
    }

    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| a[j * n + j].total_cmp(&a[i * n + i]));
    let values = order.iter().map(|&i| a[i * n + i]).collect();
    let mut vectors = DenseMatrix::zeros(n, n);
    for (dst, &src) in order.iter().enumerate() {
        vectors.set_column(dst, &v.column(src));
    }
    Ok(SymEig {
        values,
        vectors,
        sweeps,
    })
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

/// Thin SVD. `sigma` has `min(rows, cols)` entries in descending order.
pub fn svd_thin(m: &DenseMatrix) -> Result<SvdResult> {
    let (rows, cols) = m.shape();
    if rows == 0 || cols == 0 {
        return Err(Error::Empty("svd of an empty matrix"));
    }
    if cols > rows {
        let t = svd_thin(&m.transpose())?;
        return Ok(SvdResult {
            u: t.v,
            sigma: t.sigma,
            v: t.u,
        });
    }

    let eig = sym_eig(&m.gram_columns())?;
    let n = cols;
    // σᵢ = ‖M vᵢ‖ rather than √λᵢ: the norm keeps null directions at roundoff
    // level instead of the square root of it.
    let mut pairs: Vec<(f64, Vec<f64>, Vec<f64>)> = (0..n)
        .map(|i| {
            let vi = eig.vectors.column(i);
            let yi = m.mul_vec(&vi);
            (norm(&yi), vi, yi)
        })
        .collect();
    pairs.sort_by(|a, b| b.0.total_cmp(&a.0));

    let sigma_max = pairs[0].0;
    let mut u_cols: Vec<Vec<f64>> = Vec::with_capacity(n);
    for (s, _, y) in &pairs {
        if sigma_max == 0.0 || *s <= RANK_TOLERANCE * sigma_max {
            break;
        }
        let mut u: Vec<f64> = y.iter().map(|x| x / s).collect();
        // two passes of modified Gram-Schmidt
        for _ in 0..2 {
            for prev in &u_cols {
                let d = dot(&u, prev);
                for (a, b) in u.iter_mut().zip(prev) {
                    *a -= d * b;
                }
            }
            let len = norm(&u);
            u.iter_mut().for_each(|x| *x /= len);
        }
        u_cols.push(u);
    }
    let good = DenseMatrix::from_columns(&u_cols).ok();
    let u = match good {
        Some(g) => complete_orthonormal(&g, n),
        None => DenseMatrix::identity(rows).leading_columns(n),
    };
    let mut v = DenseMatrix::zeros(n, n);
    for (j, (_, vj, _)) in pairs.iter().enumerate() {
        v.set_column(j, vj);
    }
    let sigma = pairs.iter().map(|p| p.0).collect();
    Ok(SvdResult { u, sigma, v })
}

/// Flips each column so that its largest-magnitude entry is positive; the
/// lowest index wins ties.
pub fn fix_signs(v: &DenseMatrix) -> DenseMatrix {
    let mut out = v.clone();
    for j in 0..v.cols() {
        let mut best = 0.0_f64;
        let mut best_val = 0.0;
        for i in 0..v.rows() {
            let x = v.get(i, j);
            if x.abs() > best {
                best = x.abs();
                best_val = x;
            }
        }
        if best_val < 0.0 {
            for i in 0..v.rows() {
                out.set(i, j, -v.get(i, j));
            }
        }
    }
    out
}

/// Extends a matrix with orthonormal columns to `target` orthonormal columns.
///
/// The new columns come from the Householder QR of `basis`: they are the
/// trailing columns of the full orthogonal factor.
pub fn complete_orthonormal(basis: &DenseMatrix, target: usize) -> DenseMatrix {
    let (m, r) = basis.shape();
    let target = target.min(m);
    if r >= target {
        return basis.leading_columns(target);
    }
    // Householder vectors reducing `basis` to upper-triangular form.
    let mut work = basis.clone();
    let mut reflectors: Vec<Vec<f64>> = Vec::with_capacity(r);
    for k in 0..r {
        let mut x: Vec<f64> = (k..m).map(|i| work.get(i, k)).collect();
        let alpha = norm(&x);
        if alpha == 0.0 {
            reflectors.push(vec![0.0; m - k]);
            continue;
        }
        let sign = if x[0] >= 0.0 { 1.0 } else { -1.0 };
        x[0] += sign * alpha;
        let vn = norm(&x);
        x.iter_mut().for_each(|e| *e /= vn);
        for j in k..r {
            let d: f64 = (k..m).map(|i| x[i - k] * work.get(i, j)).sum();
            for i in k..m {
                work.set(i, j, work.get(i, j) - 2.0 * d * x[i - k]);
            }
        }
        reflectors.push(x);
    }

    let mut out = DenseMatrix::zeros(m, target);
    for j in 0..r {
        out.set_column(j, &basis.column(j));
    }
    let mut col = vec![0.0; m];
    for j in r..target {
        col.iter_mut().for_each(|e| *e = 0.0);
        col[j] = 1.0;
        for (k, h) in reflectors.iter().enumerate().rev() {
            let d: f64 = h.iter().zip(&col[k..]).map(|(a, b)| a * b).sum();
            for (c, a) in col[k..].iter_mut().zip(h) {
                *c -= 2.0 * d * a;
            }
        }
        out.set_column(j, &col);
    }
    out
}

/// The `r` leading left singular vectors of `m`, sign-fixed. When `r`
/// exceeds `min(rows, cols)` the extra columns are orthonormal completions.
pub fn leading_left_vectors(m: &DenseMatrix, r: usize) -> Result<DenseMatrix> {
    if r == 0 || r > m.rows() {
        return Err(Error::InvalidParameter(format!(
            "cannot take {r} left singular vectors of a {}x{} matrix",
            m.rows(),
            m.cols()
        )));
    }
    let svd = svd_thin(m)?;
    let u = if r <= svd.u.cols() {
        svd.u.leading_columns(r)
    } else {
        complete_orthonormal(&svd.u, r)
    };
    Ok(fix_signs(&u))
}

/// Largest absolute deviation of `QᵀQ` from the identity.
pub fn orthonormality_error(q: &DenseMatrix) -> f64 {
    let g = q.gram_columns();
    let n = g.rows();
    let mut worst = 0.0_f64;
    for i in 0..n {
        for j in 0..n {
            let target = if i == j { 1.0 } else { 0.0 };
            worst = worst.max((g.get(i, j) - target).abs());
        }
    }
    worst
}
