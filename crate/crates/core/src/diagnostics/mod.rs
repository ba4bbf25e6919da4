//! Numerical property checks for the landing geometry, the merit function
//! and convergence behaviour. Each check returns a [`PropertyReport`];
//! [`run_suite`] bundles them for `landing verify`.

mod suites;

pub use suites::{pca_reference, run_suite, saga_unbiasedness, Suite, SuiteReport, VerifyHooks};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::landing::{
    distance, field_norm_bounds, general_field, landing_field, merit_value, perturb_frame, safeguard_eta,
    LandingParams, SAFE_REGION_SLACK,
};
use crate::matcore::{skew_part, sym_part, DenseMatrix};
use crate::optim::Trace;
use crate::problems::{random_stiefel, Objective};

/// Slack on the gradient term of the merit descent inequality.
pub const MERIT_GRAD_SLACK: f64 = 0.49;
/// Slack on the ν and ρ terms.
pub const MERIT_CONST_SLACK: f64 = 0.99;
/// Relative finite-difference step.
pub const FD_DELTA: f64 = 1e-5;
/// Required ratio of running means when the horizon doubles.
pub const RATE_HALVING_RATIO: f64 = 0.75;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PropertyReport {
    pub name: String,
    pub draws: usize,
    /// Largest violation seen, 0 when every draw satisfied the property.
    pub worst_violation: f64,
    pub tolerance: f64,
    /// Draws whose violation exceeded the tolerance.
    pub failures: usize,
    pub passed: bool,
}

impl PropertyReport {
    fn new(name: impl Into<String>, tolerance: f64) -> Self {
        PropertyReport {
            name: name.into(),
            draws: 0,
            worst_violation: 0.0,
            tolerance,
            failures: 0,
            passed: true,
        }
    }

    fn observe(&mut self, violation: f64) {
        self.draws += 1;
        // NaN counts as a failure
        if !(violation <= self.tolerance) {
            self.failures += 1;
        }
        if violation > self.worst_violation || violation.is_nan() {
            self.worst_violation = violation;
        }
        self.passed = self.failures == 0;
    }

    /// Reports that pass exactly when `inner` fails; used for negative controls.
    pub fn expect_failure(name: impl Into<String>, inner: &PropertyReport) -> Self {
        let mut r = PropertyReport::new(name, 0.0);
        r.draws = inner.draws;
        r.worst_violation = if inner.passed { 1.0 } else { 0.0 };
        r.failures = usize::from(inner.passed);
        r.passed = !inner.passed;
        r
    }

    pub fn summary_line(&self) -> String {
        format!(
            "{} {:<36} draws={:<6} worst={:.3e} tol={:.1e} failures={}",
            if self.passed { "PASS" } else { "FAIL" },
            self.name,
            self.draws,
            self.worst_violation,
            self.tolerance,
            self.failures
        )
    }
}

/// Central difference `(φ(x + δu) - φ(x - δu)) / 2δ`, an `O(δ²)` estimate
/// of `⟨∇φ(x), u⟩`.
pub fn fd_directional_derivative(
    phi: impl Fn(&DenseMatrix) -> Result<f64>,
    x: &DenseMatrix,
    direction: &DenseMatrix,
    delta: f64,
) -> Result<f64> {
    if !(delta > 0.0) {
        return Err(Error::Contract(format!("finite-difference step must be positive, got {delta}")));
    }
    let plus = phi(&x.lin_comb(1.0, direction, delta)?)?;
    let minus = phi(&x.lin_comb(1.0, direction, -delta)?)?;
    Ok((plus - minus) / (2.0 * delta))
}

fn gaussian(rows: usize, cols: usize, rng: &mut impl Rng) -> DenseMatrix {
    DenseMatrix::from_fn(rows, cols, |_, _| rng.sample(StandardNormal))
}

/// Safe-region draw used by the geometry checks. Cycles through generic
/// interior points, generic boundary points and boundary points whose
/// perturbation is a single negative direction (`XᵀX` shrunk along one
/// axis), the least favourable shape for the safeguard.
fn geometry_draw(n: usize, p: usize, epsilon: f64, k: usize, rng: &mut impl Rng) -> Result<DenseMatrix> {
    let q = random_stiefel(n, p, rng)?;
    let (e, d) = match k % 4 {
        0 => (sym_part(&gaussian(p, p, rng))?, epsilon * rng.random::<f64>()),
        1 => (sym_part(&gaussian(p, p, rng))?, epsilon),
        _ => {
            let v = gaussian(p, 1, rng);
            let mut e = crate::matcore::matmul_nt(&v, &v)?;
            e.scale_mut(-1.0);
            (e, epsilon)
        }
    };
    perturb_frame(&q, &e, d)
}

/// Random skew `A` scaled so that `‖AX‖` is log-uniform over
/// `[λε/100, 100λ]`, which spans both the capped and the quadratic regime
/// of the safeguard.
fn skew_draw(n: usize, lambda: f64, epsilon: f64, x: &DenseMatrix, rng: &mut impl Rng) -> Result<DenseMatrix> {
    let a = skew_part(&gaussian(n, n, rng))?;
    let ax = crate::matcore::matmul(&a, x)?.frobenius_norm();
    let (lo, hi) = ((lambda * epsilon / 100.0).ln(), (100.0 * lambda).ln());
    let target = (lo + (hi - lo) * rng.random::<f64>()).exp();
    Ok(a.scaled(target / ax.max(f64::MIN_POSITIVE)))
}

/// Steps `X - η F(X, A)` with `η = eta_scale · safeguard_eta` and checks
/// that the result stays in the safe region. `eta_scale = 1` is the guaranteed case;
/// anything larger is a negative control.
pub fn check_safeguard_containment_scaled(
    n: usize,
    p: usize,
    lambda: f64,
    epsilon: f64,
    draws: usize,
    seed: u64,
    eta_scale: f64,
) -> Result<PropertyReport> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut report = PropertyReport::new("safeguard_containment", SAFE_REGION_SLACK);
    for k in 0..draws {
        let x = geometry_draw(n, p, epsilon, k, &mut rng)?;
        let a = skew_draw(n, lambda, epsilon, &x, &mut rng)?;
        let fd = general_field(&a, &x, lambda)?;
        let eta = eta_scale * safeguard_eta(fd.total.frobenius_norm(), fd.distance, lambda, epsilon)?;
        let next = x.lin_comb(1.0, &fd.total, -eta)?;
        report.observe((distance(&next) - epsilon).max(0.0));
    }
    Ok(report)
}

pub fn check_safeguard_containment(
    n: usize,
    p: usize,
    lambda: f64,
    epsilon: f64,
    draws: usize,
    seed: u64,
) -> Result<PropertyReport> {
    check_safeguard_containment_scaled(n, p, lambda, epsilon, draws, seed, 1.0)
}

/// Orthogonality of the two field components (cosine of their angle) and
/// the norm sandwich of [`field_norm_bounds`] (relative violation).
pub fn check_field_geometry(
    n: usize,
    p: usize,
    lambda: f64,
    epsilon: f64,
    draws: usize,
    seed: u64,
) -> Result<(PropertyReport, PropertyReport)> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut orth = PropertyReport::new("field_orthogonality", 1e-10);
    let mut sandwich = PropertyReport::new("field_norm_sandwich", 1e-12);
    for k in 0..draws {
        let x = geometry_draw(n, p, epsilon, k, &mut rng)?;
        let a = skew_draw(n, lambda, epsilon, &x, &mut rng)?;
        let fd = general_field(&a, &x, lambda)?;
        let denom = fd.tangent_norm * fd.normal_norm;
        let cos = if denom > 0.0 {
            fd.tangent_part.inner(&fd.normal_part)?.abs() / denom
        } else {
            0.0
        };
        orth.observe(cos);
        let f2 = fd.total.norm_sq();
        let (lo, hi) = field_norm_bounds(&fd, lambda, epsilon);
        sandwich.observe(((lo - f2).max(f2 - hi) / f2.max(f64::MIN_POSITIVE)).max(0.0));
    }
    Ok((orth, sandwich))
}

fn merit_at(obj: &dyn Objective, x: &DenseMatrix, mu: f64) -> Result<f64> {
    let (f, g) = obj.value_and_grad(x)?;
    merit_value(x, f, &g, mu)
}

/// Draws points of the safe region (including some on the manifold and
/// some on its boundary) and compares the finite-difference slope of the
/// merit function along `Λ` with `0.49‖grad f‖² + 0.99νN` and
/// `0.99ρ‖Λ‖²`. Violations are relative to `‖Λ‖²`, after discounting the
/// rounding error of the difference quotient.
pub fn check_merit_inequalities(
    obj: &dyn Objective,
    params: &LandingParams,
    draws: usize,
    seed: u64,
) -> Result<PropertyReport> {
    let (n, p) = obj.dims();
    let eps = params.epsilon;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut report = PropertyReport::new(format!("merit_descent[{}]", obj.name()), 0.0);
    for k in 0..draws {
        let d = match k % 5 {
            0 => 0.0,
            1 => eps,
            _ => eps * rng.random::<f64>(),
        };
        let q = random_stiefel(n, p, &mut rng)?;
        let x = perturb_frame(&q, &sym_part(&gaussian(p, p, &mut rng))?, d)?;
        let g = obj.grad_full(&x)?;
        let fd = landing_field(&g, &x, params.lambda)?;
        let lam_sq = fd.total.norm_sq();
        // a field at rounding level means a stationary point: nothing to test
        if lam_sq.sqrt() <= 1e-12 * (g.frobenius_norm() + params.lambda) {
            report.observe(0.0);
            continue;
        }
        let lam_norm = lam_sq.sqrt();
        let unit = fd.total.scaled(1.0 / lam_norm);
        let delta = FD_DELTA * x.frobenius_norm().max(1.0);
        let phi = |y: &DenseMatrix| merit_at(obj, y, params.mu);
        let slope = lam_norm * fd_directional_derivative(phi, &x, &unit, delta)?;
        // cancellation error of the central difference
        let noise = 16.0 * f64::EPSILON * (phi(&x)?.abs() + 1.0) / delta * lam_norm;
        let grad_sq = fd.tangent_norm * fd.tangent_norm;
        let bound_nu = MERIT_GRAD_SLACK * grad_sq + MERIT_CONST_SLACK * params.nu * fd.n_of_x();
        let bound_rho = MERIT_CONST_SLACK * params.rho * lam_sq;
        let excess = bound_nu.max(bound_rho) - slope - noise;
        report.observe((excess / lam_sq).max(0.0));
    }
    Ok(report)
}

fn mean_before(trace: &Trace, horizon: usize, pick: impl Fn(&crate::optim::RunRecord) -> f64) -> f64 {
    let vals: Vec<f64> = trace.records.iter().filter(|r| r.iter < horizon).map(pick).collect();
    vals.iter().sum::<f64>() / vals.len().max(1) as f64
}

/// Running means of `‖grad f‖²` and `N(X)` over the first `2K` iterates
/// must be at most 0.75 of those over the first `K` (`K` is the length of
/// `trace_k`). Violation is the excess ratio of the worse of the two.
pub fn check_rate_halving(trace_k: &Trace, trace_2k: &Trace) -> PropertyReport {
    let k = trace_k.iterations;
    let k2 = trace_2k.iterations;
    let mut report = PropertyReport::new("rate_halving", 0.0);
    let ratio = |pick: fn(&crate::optim::RunRecord) -> f64| {
        let short = mean_before(trace_k, k, pick);
        let long = mean_before(trace_2k, k2, pick);
        if short == 0.0 {
            if long == 0.0 {
                0.0
            } else {
                f64::INFINITY
            }
        } else {
            long / short
        }
    };
    let worst = ratio(|r| r.grad_norm_sq).max(ratio(|r| r.n_of_x));
    report.observe((worst - RATE_HALVING_RATIO).max(0.0));
    report
}

/// Best `‖grad f‖²` over the long trace relative to the short one must not
/// exceed `max_ratio`.
pub fn check_best_gradient_ratio(name: &str, short: &Trace, long: &Trace, max_ratio: f64) -> PropertyReport {
    let mut report = PropertyReport::new(name, 0.0);
    let ratio = long.best_grad_norm_sq() / short.best_grad_norm_sq();
    report.observe((ratio - max_ratio).max(0.0));
    report
}

/// Consecutive merit values must not increase by more than `slack`
/// (relative to the initial magnitude).
pub fn check_merit_monotone(trace: &Trace, slack: f64) -> PropertyReport {
    let mut report = PropertyReport::new("merit_monotone", slack);
    let scale = trace.records[0].merit.abs().max(1.0);
    for w in trace.records.windows(2) {
        report.observe(((w[1].merit - w[0].merit) / scale).max(0.0));
    }
    report
}
