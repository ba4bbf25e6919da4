use crate::error::{Error, Result};
use crate::matcore::{matmul, matmul_nt, thin_svd, DenseMatrix, SVD_ZERO_TOL};

/// Root `x >= 1` of `x³ - x = c` for `c >= 0`.
///
/// Bisection on `[1, 1 + c]` (the cubic is 0 at 1 and at least `c` at
/// `1 + c`), then Newton to full precision.
pub fn penalty_root(c: f64) -> f64 {
    assert!(c >= 0.0 && c.is_finite(), "penalty_root needs finite c >= 0, got {c}");
    if c == 0.0 {
        return 1.0;
    }
    let h = |x: f64| x * x * x - x - c;
    let (mut lo, mut hi) = (1.0, 1.0 + c);
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if h(mid) < 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
        if hi - lo <= 1e-10 * hi {
            break;
        }
    }
    let mut x = 0.5 * (lo + hi);
    for _ in 0..20 {
        let step = h(x) / (3.0 * x * x - 1.0);
        x -= step;
        if step.abs() <= 1e-15 * x {
            break;
        }
    }
    x
}

#[derive(Debug, Clone)]
pub struct PenaltySolution {
    /// Minimizer of `⟨M, X⟩ + λ N(X)`.
    pub x_star: DenseMatrix,
    /// Minimizer of `⟨M, X⟩` over the manifold.
    pub x_stiefel: DenseMatrix,
    pub sigma_star: Vec<f64>,
}

/// Closed-form minimizer of `g(X) = ⟨M, X⟩ + λ N(X)` via the thin SVD of `M`.
///
/// `X* = -U diag(σ*) Vᵀ` with `σ*³ - σ* = σ/λ`. The matching constrained
/// minimizer of the linear term is `-U Vᵀ`.
pub fn penalty_oracle(m: &DenseMatrix, lambda_pen: f64) -> Result<PenaltySolution> {
    if !(lambda_pen > 0.0 && lambda_pen.is_finite()) {
        return Err(Error::Contract(format!("penalty weight must be positive, got {lambda_pen}")));
    }
    let svd = thin_svd(m)?;
    let smax = svd.sigma[0];
    if let Some(column) = svd.sigma.iter().position(|&s| s <= SVD_ZERO_TOL * smax || s == 0.0) {
        return Err(Error::RankDeficient {
            column,
            pivot: svd.sigma[column],
        });
    }
    let sigma_star: Vec<f64> = svd.sigma.iter().map(|&s| penalty_root(s / lambda_pen)).collect();
    let neg_u = svd.u.scaled(-1.0);
    let x_star = matmul_nt(&matmul(&neg_u, &DenseMatrix::from_diag(&sigma_star))?, &svd.v)?;
    let x_stiefel = matmul_nt(&neg_u, &svd.v)?;
    Ok(PenaltySolution {
        x_star,
        x_stiefel,
        sigma_star,
    })
}

/// Normalized two-sided Amari distance; zero iff `p` is a scaled permutation.
pub fn amari_distance(p: &DenseMatrix) -> Result<f64> {
    if !p.is_square() {
        return Err(Error::NotSquare {
            op: "amari_distance",
            rows: p.rows(),
            cols: p.cols(),
        });
    }
    let n = p.rows();
    if n == 1 {
        return Ok(0.0);
    }
    let mut rows = 0.0;
    for i in 0..n {
        let r = p.row(i);
        let max = r.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        if max == 0.0 {
            return Err(Error::InvalidData(format!("row {i} is zero")));
        }
        rows += r.iter().map(|v| v.abs()).sum::<f64>() / max - 1.0;
    }
    let mut cols = 0.0;
    for j in 0..n {
        let c = p.column(j);
        let max = c.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        if max == 0.0 {
            return Err(Error::InvalidData(format!("column {j} is zero")));
        }
        cols += c.iter().map(|v| v.abs()).sum::<f64>() / max - 1.0;
    }
    Ok((rows + cols) / (2.0 * n as f64 * (n as f64 - 1.0)))
}
