//! Landing geometry: the extended Riemannian gradient, the landing field,
//! the safe region around St(p, n), safeguard step sizes, and the merit
//! function with its constants.

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::matcore::{gram, matmul, matmul_nt, matmul_tn, spd_sqrt, sym_part, thin_svd, DenseMatrix};
use crate::problems::{random_stiefel, Objective};

/// Absolute slack tolerated on `d <= epsilon` before an iterate counts as
/// having left the safe region; absorbs rounding of `XᵀX` at the boundary.
pub const SAFE_REGION_SLACK: f64 = 1e-12;

/// Safety factor applied to sampled smoothness estimates.
pub const ESTIMATE_SAFETY: f64 = 1.5;

/// Smoothness constants of `f` over the safe region.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SmoothnessConstants {
    /// ℒ: Lipschitz constant of ∇f.
    pub l_smooth: f64,
    /// s: bound on ‖sym(Xᵀ∇f(X))‖.
    pub s_bound: f64,
    /// L′: bound on ‖∇f(X)‖.
    pub l_prime: f64,
}

impl SmoothnessConstants {
    pub fn l_hat(&self) -> f64 {
        self.l_smooth.max(self.l_prime)
    }

    /// Bound on ‖skew(∇f Xᵀ) X‖: ‖∇f‖·‖X‖₂² ≤ (1+ε) L′.
    pub fn a_tilde(&self, epsilon: f64) -> f64 {
        (1.0 + epsilon) * self.l_prime
    }
}

/// λ, ε and the merit constants derived from them.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LandingParams {
    pub lambda: f64,
    pub epsilon: f64,
    pub mu: f64,
    pub nu: f64,
    pub rho: f64,
    pub l_smooth: f64,
    pub s_bound: f64,
    pub l_hat: f64,
    pub l_g: f64,
    pub a_tilde: f64,
    /// Uniform lower bound on the safeguard step.
    pub eta_star: f64,
}

impl LandingParams {
    /// Derives μ (unless given), ν, ρ, L_g, ã and η* from the constants.
    ///
    /// An explicit `mu` below [`mu_lower_bound`] is accepted, since the
    /// negative controls need it, but voids the merit guarantees.
    pub fn new(lambda: f64, epsilon: f64, constants: &SmoothnessConstants, mu: Option<f64>) -> Result<Self> {
        if !(lambda > 0.0 && lambda.is_finite()) {
            return Err(Error::config("lambda", format!("must be positive and finite, got {lambda}")));
        }
        check_epsilon(epsilon)?;
        let c = constants;
        for (name, v) in [("l_smooth", c.l_smooth), ("s_bound", c.s_bound), ("l_prime", c.l_prime)] {
            if !(v >= 0.0 && v.is_finite()) {
                return Err(Error::config(name, format!("must be finite and nonnegative, got {v}")));
            }
        }
        let l_hat = c.l_hat();
        let bound = mu_lower_bound(c.l_smooth, c.s_bound, l_hat, lambda, epsilon)?;
        let mu = match mu {
            Some(m) if !(m > 0.0 && m.is_finite()) => {
                return Err(Error::config("mu", format!("must be positive and finite, got {m}")));
            }
            Some(m) => {
                if m < bound {
                    log::warn!("mu = {m} is below the merit bound {bound}; descent guarantees do not apply");
                }
                m
            }
            // a constant objective gives a zero bound; keep the attraction alive
            None => bound.max(1e-12),
        };
        let nu = lambda * mu;
        let rho = 0.5f64.min(nu / (4.0 * lambda * lambda * (1.0 + epsilon)));
        let l_g = merit_smoothness(c.l_smooth, l_hat, mu, epsilon);
        let a_tilde = c.a_tilde(epsilon);
        let eta_star = safeguard_eta_star(a_tilde.max(f64::MIN_POSITIVE), epsilon, lambda);
        Ok(LandingParams {
            lambda,
            epsilon,
            mu,
            nu,
            rho,
            l_smooth: c.l_smooth,
            s_bound: c.s_bound,
            l_hat,
            l_g,
            a_tilde,
            eta_star,
        })
    }

    pub fn mu_bound(&self) -> f64 {
        mu_lower_bound(self.l_smooth, self.s_bound, self.l_hat, self.lambda, self.epsilon)
            .expect("epsilon validated at construction")
    }

    /// `min(1/(2 L_g), ν/(4 λ² L_g (1+ε)), η*)`: the constant step for which
    /// deterministic landing decreases the merit function.
    pub fn theory_step(&self) -> f64 {
        let a = 1.0 / (2.0 * self.l_g);
        let b = self.nu / (4.0 * self.lambda * self.lambda * self.l_g * (1.0 + self.epsilon));
        a.min(b).min(self.eta_star)
    }

    /// Step for landing SAGA over `n_samples` samples, with ℒ standing in
    /// for the smoothness of f.
    pub fn saga_step(&self, n_samples: usize) -> f64 {
        let big_n = n_samples as f64;
        let e = 1.0 + self.epsilon;
        let mut eta = self.eta_star.min(self.rho / self.l_g);
        let lf = self.l_smooth;
        if lf > 0.0 {
            eta = eta.min(1.0 / ((8.0 * big_n * e).sqrt() * lf));
            let cube = self.rho / (8.0 * big_n * (4.0 * big_n + 2.0) * self.l_g * lf * lf * e * e);
            eta = eta.min(cube.cbrt());
        }
        eta
    }
}

fn check_epsilon(epsilon: f64) -> Result<()> {
    if !(epsilon > 0.0 && epsilon < 0.75) {
        return Err(Error::config(
            "epsilon",
            format!("must lie in (0, 0.75) for the merit bound to hold (ε < 3/4), got {epsilon}"),
        ));
    }
    Ok(())
}

/// Heuristic L_g = L_{f+h} + μ L_N with L_N = 2 + 3ε (the Hessian of N on
/// the safe region) and L_{f+h} ≈ ℒ(1+2ε) + 3 L̂.
fn merit_smoothness(l_smooth: f64, l_hat: f64, mu: f64, epsilon: f64) -> f64 {
    let l_fh = l_smooth * (1.0 + 2.0 * epsilon) + 3.0 * l_hat;
    let l_g = l_fh + mu * (2.0 + 3.0 * epsilon);
    l_g.max(f64::MIN_POSITIVE)
}

/// `XᵀX - I`, exactly symmetric.
pub fn constraint_residual(x: &DenseMatrix) -> DenseMatrix {
    let mut r = gram(x);
    r.add_diag(-1.0);
    r
}

/// `d = ‖XᵀX - I‖`.
pub fn distance(x: &DenseMatrix) -> f64 {
    constraint_residual(x).frobenius_norm()
}

/// `N(X) = ¼ ‖XᵀX - I‖²`.
pub fn distance_sq(x: &DenseMatrix) -> f64 {
    0.25 * constraint_residual(x).norm_sq()
}

pub fn in_safe_region(x: &DenseMatrix, epsilon: f64) -> bool {
    distance(x) <= epsilon
}

/// Whether every singular value of `x` lies in `[sqrt(1-ε), sqrt(1+ε)]`,
/// which membership in the safe region implies.
pub fn singular_values_in_band(x: &DenseMatrix, epsilon: f64) -> Result<bool> {
    let lo = (1.0 - epsilon).max(0.0).sqrt();
    let hi = (1.0 + epsilon).sqrt();
    Ok(thin_svd(x)?.sigma.iter().all(|&s| s >= lo && s <= hi))
}

fn check_same_shape(op: &'static str, a: &DenseMatrix, b: &DenseMatrix) -> Result<()> {
    if a.shape() != b.shape() {
        return Err(Error::DimensionMismatch {
            op,
            left: a.shape(),
            right: b.shape(),
        });
    }
    Ok(())
}

/// Whether the `p x p` ordering is cheaper than forming `n x n` products.
fn use_small_ordering(x: &DenseMatrix) -> bool {
    x.rows() > 2 * x.cols()
}

/// `skew(G Xᵀ) X`.
pub fn riemannian_gradient_ext(g: &DenseMatrix, x: &DenseMatrix) -> Result<DenseMatrix> {
    check_same_shape("riemannian_gradient_ext", g, x)?;
    if use_small_ordering(x) {
        // ½ (G (XᵀX) - X (GᵀX))
        let a = gram(x);
        let c = matmul_tn(g, x)?;
        let mut out = matmul(g, &a)?;
        out.axpy(-1.0, &matmul(x, &c)?)?;
        out.scale_mut(0.5);
        Ok(out)
    } else {
        let gx = matmul_nt(g, x)?;
        let w = crate::matcore::skew_part(&gx)?;
        matmul(&w, x)
    }
}

/// The landing field together with the distance it was computed at.
#[derive(Debug, Clone)]
pub struct LandingDirection {
    pub field: DenseMatrix,
    pub distance: f64,
}

/// `Λ = skew(G Xᵀ) X + λ X (XᵀX - I)` for the optimizers.
///
/// With `A = XᵀX`, `C = GᵀX`, `B = (½G + λX) A`, `D = X C` this is
/// `B - ½D - λX`: four `n x p`-by-`p x p` class products.
pub fn landing_direction(g: &DenseMatrix, x: &DenseMatrix, lambda: f64) -> Result<LandingDirection> {
    check_same_shape("landing_field", g, x)?;
    let a = gram(x);
    let mut resid = a.clone();
    resid.add_diag(-1.0);
    let distance = resid.frobenius_norm();
    let field = if use_small_ordering(x) {
        let c = matmul_tn(g, x)?;
        let half_g_lx = g.lin_comb(0.5, x, lambda)?;
        let mut field = matmul(&half_g_lx, &a)?;
        field.axpy(-0.5, &matmul(x, &c)?)?;
        field.axpy(-lambda, x)?;
        field
    } else {
        // (skew(G Xᵀ) + λ (X Xᵀ - I)) X
        let gx = matmul_nt(g, x)?;
        let mut w = crate::matcore::skew_part(&gx)?;
        let mut xx = matmul_nt(x, x)?;
        xx.add_diag(-1.0);
        w.axpy(lambda, &xx)?;
        matmul(&w, x)?
    };
    Ok(LandingDirection { field, distance })
}

/// The field split into its tangent and normal components.
#[derive(Debug, Clone)]
pub struct FieldDecomposition {
    pub tangent_part: DenseMatrix,
    pub normal_part: DenseMatrix,
    /// `tangent_part + normal_part`.
    pub total: DenseMatrix,
    pub tangent_norm: f64,
    pub normal_norm: f64,
    /// `‖XᵀX - I‖`
    pub distance: f64,
}

impl FieldDecomposition {
    fn assemble(tangent_part: DenseMatrix, x: &DenseMatrix, lambda: f64) -> Result<Self> {
        let resid = constraint_residual(x);
        let mut normal_part = matmul(x, &resid)?;
        normal_part.scale_mut(lambda);
        let total = tangent_part.add(&normal_part)?;
        Ok(FieldDecomposition {
            tangent_norm: tangent_part.frobenius_norm(),
            normal_norm: normal_part.frobenius_norm(),
            distance: resid.frobenius_norm(),
            tangent_part,
            normal_part,
            total,
        })
    }

    /// `N(X)` at the point the field was evaluated.
    pub fn n_of_x(&self) -> f64 {
        0.25 * self.distance * self.distance
    }
}

/// Landing field with its tangent/normal split, for diagnostics. The
/// optimizers use the cheaper [`landing_direction`].
pub fn landing_field(g: &DenseMatrix, x: &DenseMatrix, lambda: f64) -> Result<FieldDecomposition> {
    let tangent = riemannian_gradient_ext(g, x)?;
    FieldDecomposition::assemble(tangent, x, lambda)
}

/// `F(X, A) = A X + λ X (XᵀX - I)` for a skew-symmetric `n x n` matrix `A`.
pub fn general_field(a: &DenseMatrix, x: &DenseMatrix, lambda: f64) -> Result<FieldDecomposition> {
    let tangent = matmul(a, x)?;
    FieldDecomposition::assemble(tangent, x, lambda)
}

/// `(‖AX‖² + 4λ²(1-ε)N, ‖AX‖² + 4λ²(1+ε)N)`, which brackets `‖F‖²` on the
/// safe region.
pub fn field_norm_bounds(fd: &FieldDecomposition, lambda: f64, epsilon: f64) -> (f64, f64) {
    let a2 = fd.tangent_norm * fd.tangent_norm;
    let n = fd.n_of_x();
    let w = 4.0 * lambda * lambda * n;
    (a2 + w * (1.0 - epsilon), a2 + w * (1.0 + epsilon))
}

/// Largest step along `-F` that provably stays in the safe region, capped
/// at `1/(2λ)`; `g = ‖F‖`, `d = ‖XᵀX - I‖`.
pub fn safeguard_eta(g_norm: f64, d: f64, lambda: f64, epsilon: f64) -> Result<f64> {
    if !(d >= 0.0 && g_norm >= 0.0) {
        return Err(Error::Contract(format!(
            "safeguard_eta needs nonnegative inputs, got g = {g_norm}, d = {d}"
        )));
    }
    if d > epsilon + SAFE_REGION_SLACK {
        return Err(Error::OutsideSafeRegion { distance: d, epsilon });
    }
    let d = d.min(epsilon);
    let cap = 1.0 / (2.0 * lambda);
    if g_norm == 0.0 {
        return Ok(cap);
    }
    let g2 = g_norm * g_norm;
    let b = lambda * d * (1.0 - d);
    let eta = (b + (b * b + g2 * (epsilon - d)).sqrt()) / g2;
    Ok(eta.min(cap))
}

/// `K(λ, ε, a, d)`, whose infimum over `a ∈ (0, ã]`, `d ∈ (0, ε]` lower
/// bounds the safeguard step.
pub fn k_function(lambda: f64, epsilon: f64, a: f64, d: f64) -> f64 {
    (lambda * (1.0 - epsilon) * d + a * ((epsilon - d) / 2.0).max(0.0).sqrt())
        / (a * a + lambda * lambda * (1.0 + epsilon) * d * d)
}

const ETA_STAR_GRID: usize = 256;
const ETA_STAR_DECADES: f64 = 6.0;

/// Estimate of `η* = min(Q(λ, ε, ã), 1/(2λ))` where `Q = inf K`.
///
/// Log-grid search followed by golden-section refinement around the best
/// cell; the two boundary limits of `K` are included. This can only
/// overestimate the true infimum, so trajectories rely on the per-step
/// clamp rather than on this value.
pub fn safeguard_eta_star(a_tilde: f64, epsilon: f64, lambda: f64) -> f64 {
    let k = |la: f64, ld: f64| k_function(lambda, epsilon, la.exp(), ld.exp());
    let (la_lo, la_hi) = ((a_tilde * 10f64.powf(-ETA_STAR_DECADES)).ln(), a_tilde.ln());
    let (ld_lo, ld_hi) = ((epsilon * 10f64.powf(-ETA_STAR_DECADES)).ln(), epsilon.ln());
    let m = ETA_STAR_GRID - 1;
    let at = |lo: f64, hi: f64, i: usize| if i == m { hi } else { lo + (hi - lo) * i as f64 / m as f64 };

    let mut best = (f64::INFINITY, 0, 0);
    for i in 0..ETA_STAR_GRID {
        let la = at(la_lo, la_hi, i);
        for j in 0..ETA_STAR_GRID {
            let v = k(la, at(ld_lo, ld_hi, j));
            if v < best.0 {
                best = (v, i, j);
            }
        }
    }

    let (_, bi, bj) = best;
    let mut bounds_a = (at(la_lo, la_hi, bi.saturating_sub(1)), at(la_lo, la_hi, (bi + 1).min(m)));
    let mut bounds_d = (at(ld_lo, ld_hi, bj.saturating_sub(1)), at(ld_lo, ld_hi, (bj + 1).min(m)));
    let mut la;
    let mut ld = at(ld_lo, ld_hi, bj);
    let mut refined = best.0;
    for _ in 0..4 {
        la = golden_section(|t| k(t, ld), bounds_a.0, bounds_a.1);
        ld = golden_section(|t| k(la, t), bounds_d.0, bounds_d.1);
        refined = refined.min(k(la, ld));
        // keep the box but let later rounds see the updated coordinates
        bounds_a = (bounds_a.0.min(la), bounds_a.1.max(la));
        bounds_d = (bounds_d.0.min(ld), bounds_d.1.max(ld));
    }

    let limit_small_a = (1.0 - epsilon) / (lambda * (1.0 + epsilon) * epsilon);
    let limit_small_d = (epsilon / 2.0).sqrt() / a_tilde;
    let q = refined.min(limit_small_a).min(limit_small_d);
    q.min(1.0 / (2.0 * lambda))
}

fn golden_section(f: impl Fn(f64) -> f64, mut lo: f64, mut hi: f64) -> f64 {
    let inv_phi = (5f64.sqrt() - 1.0) / 2.0;
    let mut c = hi - inv_phi * (hi - lo);
    let mut d = lo + inv_phi * (hi - lo);
    let (mut fc, mut fd) = (f(c), f(d));
    for _ in 0..80 {
        if fc < fd {
            hi = d;
            d = c;
            fd = fc;
            c = hi - inv_phi * (hi - lo);
            fc = f(c);
        } else {
            lo = c;
            c = d;
            fc = fd;
            d = lo + inv_phi * (hi - lo);
            fd = f(d);
        }
        if (hi - lo).abs() < 1e-12 {
            break;
        }
    }
    if fc < fd {
        c
    } else {
        d
    }
}

/// `L(X) = f(X) - ½⟨sym(Xᵀ∇f(X)), XᵀX - I⟩ + μ N(X)`.
pub fn merit_value(x: &DenseMatrix, f_val: f64, grad: &DenseMatrix, mu: f64) -> Result<f64> {
    check_same_shape("merit_value", grad, x)?;
    let resid = constraint_residual(x);
    let s = sym_part(&matmul_tn(x, grad)?)?;
    let h = -0.5 * s.inner(&resid)?;
    Ok(f_val + h + mu * 0.25 * resid.norm_sq())
}

/// `(2/(3-4ε)) (ℒ(1-ε) + 3s + L̂²(1+ε)²/(λ(1-ε)))`.
pub fn mu_lower_bound(l_smooth: f64, s_bound: f64, l_hat: f64, lambda: f64, epsilon: f64) -> Result<f64> {
    if !(0.0..0.75).contains(&epsilon) {
        return Err(Error::config("epsilon", format!("merit bound needs ε < 3/4, got {epsilon}")));
    }
    let e = epsilon;
    Ok(2.0 / (3.0 - 4.0 * e)
        * (l_smooth * (1.0 - e) + 3.0 * s_bound + l_hat * l_hat * (1.0 + e) * (1.0 + e) / (lambda * (1.0 - e))))
}

/// Random point with `‖XᵀX - I‖ = d` exactly (up to rounding, never
/// above `d`): `X = Q (I + E)^{1/2}` with `Q` Haar and `E` a random
/// symmetric matrix of norm `d`.
pub fn sample_safe_region(n: usize, p: usize, d: f64, rng: &mut impl Rng) -> Result<DenseMatrix> {
    if !(0.0..1.0).contains(&d) {
        return Err(Error::Contract(format!("sample distance must lie in [0, 1), got {d}")));
    }
    let q = random_stiefel(n, p, rng)?;
    if d == 0.0 {
        return Ok(q);
    }
    let g = DenseMatrix::from_fn(p, p, |_, _| rng.sample(StandardNormal));
    perturb_frame(&q, &sym_part(&g)?, d)
}

/// `Q (I + tE)^{1/2}` with `t` chosen so that `‖XᵀX - I‖` equals `d`
/// without exceeding it. `q` must be orthonormal and `e` symmetric.
pub fn perturb_frame(q: &DenseMatrix, e: &DenseMatrix, d: f64) -> Result<DenseMatrix> {
    if !(0.0..1.0).contains(&d) {
        return Err(Error::Contract(format!("perturbation size must lie in [0, 1), got {d}")));
    }
    let e_norm = e.frobenius_norm();
    if d == 0.0 || e_norm == 0.0 {
        return Ok(q.clone());
    }
    let mut target = d;
    for k in 0..8 {
        let mut s = e.scaled(target / e_norm);
        s.add_diag(1.0);
        let x = matmul(q, &spd_sqrt(&s)?)?;
        let got = distance(&x);
        if got <= d {
            return Ok(x);
        }
        // rounding in ‖XᵀX - I‖ is absolute, so back off by a growing margin
        target = (target * d / got - f64::EPSILON * (4 << k) as f64).max(0.0);
    }
    Err(Error::NoConvergence {
        op: "perturb_frame",
        iterations: 8,
    })
}

/// Sampled estimates of ℒ, s and L′ over the safe region, times
/// [`ESTIMATE_SAFETY`].
///
/// ℒ comes from finite-difference power iteration on the Hessian at each
/// sampled point, so it tracks the top curvature rather than an average.
/// Heuristic: nothing certifies the sampled maxima.
pub fn smoothness_estimate(
    obj: &dyn Objective,
    epsilon: f64,
    samples: usize,
    rng: &mut impl Rng,
) -> Result<SmoothnessConstants> {
    let (n, p) = obj.dims();
    let (mut l_smooth, mut s_bound, mut l_prime) = (0.0f64, 0.0f64, 0.0f64);
    for k in 0..samples.max(1) {
        let d = if k % 4 == 0 { epsilon } else { epsilon * rng.random::<f64>() };
        let x = sample_safe_region(n, p, d.min(0.999), rng)?;
        let g = obj.grad_full(&x)?;
        l_prime = l_prime.max(g.frobenius_norm());
        s_bound = s_bound.max(sym_part(&matmul_tn(&x, &g)?)?.frobenius_norm());

        let h = 1e-4 * x.frobenius_norm();
        let mut dir = DenseMatrix::from_fn(n, p, |_, _| rng.sample(StandardNormal));
        for _ in 0..10 {
            let norm = dir.frobenius_norm();
            if norm == 0.0 {
                break;
            }
            dir.scale_mut(1.0 / norm);
            let xp = x.lin_comb(1.0, &dir, h)?;
            let diff = obj.grad_full(&xp)?.sub(&g)?;
            l_smooth = l_smooth.max(diff.frobenius_norm() / h);
            dir = diff;
        }
    }
    Ok(SmoothnessConstants {
        l_smooth: ESTIMATE_SAFETY * l_smooth,
        s_bound: ESTIMATE_SAFETY * s_bound,
        l_prime: ESTIMATE_SAFETY * l_prime,
    })
}
