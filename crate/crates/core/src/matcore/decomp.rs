//! Householder QR, cyclic Jacobi eigensolver, and the factorizations built
//! on top of them.

use super::dense::{gram, matmul, DenseMatrix};
use crate::error::{Error, Result};

/// Columns whose `|r_kk|` falls below this fraction of the input norm are
/// declared rank deficient.
pub const QR_RANK_TOL: f64 = 1e-12;
pub const EIG_MAX_SWEEPS: usize = 50;
pub const EIG_OFF_TOL: f64 = 1e-14;
pub const EIG_SYMMETRY_TOL: f64 = 1e-12;
/// Singular values below this fraction of `sigma_max` are treated as zero.
pub const SVD_ZERO_TOL: f64 = 1e-10;
pub const INV_SQRT_TOL: f64 = 1e-12;

fn require_finite(m: &DenseMatrix, op: &'static str) -> Result<()> {
    if m.is_finite() {
        Ok(())
    } else {
        Err(Error::NonFinite(op))
    }
}

/// Thin QR factorization `m = q r` of an `n x p` matrix with `n >= p`.
///
/// `r` is upper triangular with a strictly positive diagonal, which makes
/// the factorization unique.
pub fn thin_qr(m: &DenseMatrix) -> Result<(DenseMatrix, DenseMatrix)> {
    require_finite(m, "thin_qr")?;
    let (n, p) = m.shape();
    if n < p {
        return Err(Error::Contract(format!("thin_qr needs rows >= cols, got {n}x{p}")));
    }
    let scale = m.frobenius_norm();
    let mut a = m.clone();
    let mut reflectors: Vec<(Vec<f64>, f64)> = Vec::with_capacity(p);
    let mut w = vec![0.0; p];

    for k in 0..p {
        let col: Vec<f64> = (k..n).map(|i| a.get(i, k)).collect();
        let alpha = col.iter().map(|v| v * v).sum::<f64>().sqrt();
        if alpha <= QR_RANK_TOL * scale || alpha == 0.0 {
            return Err(Error::RankDeficient {
                column: k,
                pivot: alpha,
            });
        }
        let beta = if col[0] >= 0.0 { -alpha } else { alpha };
        // v = x - beta e1, normalized so that v[0] = 1
        let v0 = col[0] - beta;
        let mut v: Vec<f64> = col.iter().map(|x| x / v0).collect();
        v[0] = 1.0;
        let tau = (beta - col[0]) / beta;

        a.set(k, k, beta);
        for i in k + 1..n {
            a.set(i, k, 0.0);
        }
        apply_reflector(&mut a, &v, tau, k, k + 1, &mut w);
        reflectors.push((v, tau));
    }

    let mut r = DenseMatrix::zeros(p, p);
    for i in 0..p {
        for j in i..p {
            r.set(i, j, a.get(i, j));
        }
    }

    let mut q = DenseMatrix::eye(n, p);
    for k in (0..p).rev() {
        let (v, tau) = &reflectors[k];
        apply_reflector(&mut q, v, *tau, k, k, &mut w);
    }

    // sign canon: make diag(r) positive
    for i in 0..p {
        if r.get(i, i) < 0.0 {
            for j in i..p {
                r.set(i, j, -r.get(i, j));
            }
            for row in 0..n {
                q.set(row, i, -q.get(row, i));
            }
        }
    }
    Ok((q, r))
}

/// Applies `I - tau v vᵀ` (acting on rows `k..`) to columns `col_start..` of `a`.
fn apply_reflector(a: &mut DenseMatrix, v: &[f64], tau: f64, k: usize, col_start: usize, w: &mut [f64]) {
    let (n, p) = a.shape();
    if col_start >= p {
        return;
    }
    let w = &mut w[col_start..p];
    w.iter_mut().for_each(|x| *x = 0.0);
    for i in k..n {
        let vi = v[i - k];
        if vi == 0.0 {
            continue;
        }
        let row = &a.row(i)[col_start..];
        for (wj, &aij) in w.iter_mut().zip(row) {
            *wj += vi * aij;
        }
    }
    for i in k..n {
        let s = tau * v[i - k];
        if s == 0.0 {
            continue;
        }
        let row = &mut a.row_mut(i)[col_start..];
        for (aij, &wj) in row.iter_mut().zip(w.iter()) {
            *aij -= s * wj;
        }
    }
}

/// Eigendecomposition of a symmetric matrix.
#[derive(Debug, Clone)]
pub struct SymEig {
    /// Ascending eigenvalues.
    pub values: Vec<f64>,
    /// Eigenvectors stored as columns, matching `values`.
    pub vectors: DenseMatrix,
}

/// Symmetric eigendecomposition by cyclic Jacobi rotations.
pub fn sym_eig(s: &DenseMatrix) -> Result<SymEig> {
    require_finite(s, "sym_eig")?;
    if !s.is_square() {
        return Err(Error::NotSquare {
            op: "sym_eig",
            rows: s.rows(),
            cols: s.cols(),
        });
    }
    let p = s.rows();
    let norm = s.frobenius_norm();
    let asym = {
        let mut acc = 0.0;
        for i in 0..p {
            for j in 0..i {
                let d = s.get(i, j) - s.get(j, i);
                acc += 2.0 * d * d;
            }
        }
        acc.sqrt()
    };
    if asym > EIG_SYMMETRY_TOL * norm {
        return Err(Error::NotSymmetric {
            op: "sym_eig",
            asymmetry: asym / norm,
        });
    }

    let mut a = DenseMatrix::from_fn(p, p, |i, j| 0.5 * (s.get(i, j) + s.get(j, i)));
    // rows of `vt` are eigenvectors; transposed at the end
    let mut vt = DenseMatrix::identity(p);
    let target = EIG_OFF_TOL * norm;

    let off_norm = |a: &DenseMatrix| {
        let mut acc = 0.0;
        for i in 0..p {
            for j in i + 1..p {
                acc += 2.0 * a.get(i, j).powi(2);
            }
        }
        acc.sqrt()
    };

    let mut converged = off_norm(&a) <= target;
    let mut sweeps = 0;
    while !converged {
        if sweeps == EIG_MAX_SWEEPS {
            return Err(Error::NoConvergence {
                op: "sym_eig",
                iterations: EIG_MAX_SWEEPS,
            });
        }
        sweeps += 1;
        for k in 0..p {
            for l in k + 1..p {
                let akl = a.get(k, l);
                if akl == 0.0 {
                    continue;
                }
                let akk = a.get(k, k);
                let all = a.get(l, l);
                let theta = (all - akk) / (2.0 * akl);
                let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                let c = 1.0 / (t * t + 1.0).sqrt();
                let sn = t * c;
                // columns k, l
                for i in 0..p {
                    let aik = a.get(i, k);
                    let ail = a.get(i, l);
                    a.set(i, k, c * aik - sn * ail);
                    a.set(i, l, sn * aik + c * ail);
                }
                // rows k, l
                rotate_rows(&mut a, k, l, c, sn);
                a.set(k, l, 0.0);
                a.set(l, k, 0.0);
                rotate_rows(&mut vt, k, l, c, sn);
            }
        }
        converged = off_norm(&a) <= target;
    }

    let mut order: Vec<usize> = (0..p).collect();
    order.sort_by(|&i, &j| a.get(i, i).total_cmp(&a.get(j, j)));
    let values = order.iter().map(|&i| a.get(i, i)).collect();
    let vectors = DenseMatrix::from_fn(p, p, |i, j| vt.get(order[j], i));
    Ok(SymEig { values, vectors })
}

fn rotate_rows(m: &mut DenseMatrix, k: usize, l: usize, c: f64, s: f64) {
    let p = m.cols();
    let data = m.as_mut_slice();
    let (lo, hi) = data.split_at_mut(l * p);
    let rk = &mut lo[k * p..(k + 1) * p];
    let rl = &mut hi[..p];
    for (x, y) in rk.iter_mut().zip(rl.iter_mut()) {
        let (a, b) = (*x, *y);
        *x = c * a - s * b;
        *y = s * a + c * b;
    }
}

/// `V diag(f(w)) Vᵀ`, built from the upper triangle and mirrored so the
/// result is exactly symmetric.
fn spectral_function(eig: &SymEig, f: impl Fn(f64) -> f64) -> DenseMatrix {
    let p = eig.values.len();
    let fw: Vec<f64> = eig.values.iter().map(|&w| f(w)).collect();
    let v = &eig.vectors;
    let mut out = DenseMatrix::zeros(p, p);
    for i in 0..p {
        for j in i..p {
            let mut acc = 0.0;
            for k in 0..p {
                acc += v.get(i, k) * fw[k] * v.get(j, k);
            }
            out.set(i, j, acc);
            out.set(j, i, acc);
        }
    }
    out
}

fn check_positive(eig: &SymEig) -> Result<()> {
    let largest = *eig.values.last().expect("nonempty");
    let smallest = eig.values[0];
    if largest <= 0.0 || smallest <= INV_SQRT_TOL * largest {
        return Err(Error::Singular { smallest, largest });
    }
    Ok(())
}

/// `S^{-1/2}` for a symmetric positive definite `S`.
pub fn spd_inv_sqrt(s: &DenseMatrix) -> Result<DenseMatrix> {
    let eig = sym_eig(s)?;
    check_positive(&eig)?;
    Ok(spectral_function(&eig, |w| 1.0 / w.sqrt()))
}

/// `S^{1/2}` for a symmetric positive definite `S`.
pub fn spd_sqrt(s: &DenseMatrix) -> Result<DenseMatrix> {
    let eig = sym_eig(s)?;
    check_positive(&eig)?;
    Ok(spectral_function(&eig, f64::sqrt))
}

/// Thin singular value decomposition `m = u diag(sigma) vᵀ`.
#[derive(Debug, Clone)]
pub struct Svd {
    pub u: DenseMatrix,
    /// Descending, nonnegative.
    pub sigma: Vec<f64>,
    pub v: DenseMatrix,
}

/// Thin SVD of an `n x p` matrix (`n >= p`) via the eigendecomposition of
/// `mᵀ m`. Left vectors of numerically zero singular values are completed
/// to an orthonormal set.
pub fn thin_svd(m: &DenseMatrix) -> Result<Svd> {
    require_finite(m, "thin_svd")?;
    let (n, p) = m.shape();
    if n < p {
        return Err(Error::Contract(format!("thin_svd needs rows >= cols, got {n}x{p}")));
    }
    let eig = sym_eig(&gram(m))?;
    let v0 = eig.vectors;
    let mv0 = matmul(m, &v0)?;
    // ‖m v_j‖ is accurate to eps·‖m‖, unlike sqrt of the gram eigenvalue
    let norms: Vec<f64> = (0..p)
        .map(|j| (0..n).map(|i| mv0.get(i, j).powi(2)).sum::<f64>().sqrt())
        .collect();
    let mut order: Vec<usize> = (0..p).collect();
    order.sort_by(|&a, &b| norms[b].total_cmp(&norms[a]));
    let sigma: Vec<f64> = order.iter().map(|&j| norms[j]).collect();
    let v = DenseMatrix::from_fn(p, p, |i, j| v0.get(i, order[j]));
    let mv = DenseMatrix::from_fn(n, p, |i, j| mv0.get(i, order[j]));
    let smax = sigma[0];

    let mut u = DenseMatrix::zeros(n, p);
    let mut missing = Vec::new();
    for j in 0..p {
        if smax > 0.0 && sigma[j] > SVD_ZERO_TOL * smax {
            for i in 0..n {
                u.set(i, j, mv.get(i, j) / sigma[j]);
            }
        } else {
            missing.push(j);
        }
    }
    let mut sigma = sigma;
    for &j in &missing {
        sigma[j] = 0.0;
    }
    // Columns with small sigma inherit the squared conditioning of the gram
    // route; re-orthogonalize in descending order so leading columns stay put.
    let present: Vec<usize> = (0..p).filter(|j| !missing.contains(j)).collect();
    reorthogonalize(&mut u, &present);
    if !missing.is_empty() {
        complete_basis(&mut u, &missing);
    }
    Ok(Svd { u, sigma, v })
}

fn reorthogonalize(u: &mut DenseMatrix, cols: &[usize]) {
    let n = u.rows();
    for (pos, &j) in cols.iter().enumerate() {
        for _ in 0..2 {
            for &c in &cols[..pos] {
                let dot: f64 = (0..n).map(|i| u.get(i, c) * u.get(i, j)).sum();
                for i in 0..n {
                    u.set(i, j, u.get(i, j) - dot * u.get(i, c));
                }
            }
        }
        let norm = (0..n).map(|i| u.get(i, j).powi(2)).sum::<f64>().sqrt();
        for i in 0..n {
            u.set(i, j, u.get(i, j) / norm);
        }
    }
}

/// Fills the columns listed in `missing` with unit vectors orthogonal to all
/// other columns, drawn from the residual of the standard basis.
fn complete_basis(u: &mut DenseMatrix, missing: &[usize]) {
    let (n, p) = u.shape();
    let mut filled: Vec<usize> = (0..p).filter(|j| !missing.contains(j)).collect();
    let mut candidate = 0;
    for &j in missing {
        loop {
            assert!(candidate < n, "standard basis exhausted");
            let mut r = vec![0.0; n];
            r[candidate] = 1.0;
            candidate += 1;
            // two passes of Gram-Schmidt
            for _ in 0..2 {
                for &c in &filled {
                    let dot: f64 = (0..n).map(|i| u.get(i, c) * r[i]).sum();
                    for (i, ri) in r.iter_mut().enumerate() {
                        *ri -= dot * u.get(i, c);
                    }
                }
            }
            let norm = r.iter().map(|x| x * x).sum::<f64>().sqrt();
            if norm > 0.5 {
                for (i, ri) in r.iter().enumerate() {
                    u.set(i, j, ri / norm);
                }
                filled.push(j);
                break;
            }
        }
    }
}
