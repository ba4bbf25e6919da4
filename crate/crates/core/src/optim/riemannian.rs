use serde::{Deserialize, Serialize};

use super::{Advance, Batch, Driver, RunOptions, Sampler, StepSchedule, Trace};
use crate::error::{Error, Result};
use crate::matcore::{gram, matmul, matmul_tn, spd_inv_sqrt, thin_qr, DenseMatrix};
use crate::problems::Objective;

/// Iterations between drift-killing re-orthonormalizations.
pub const REORTHONORMALIZE_EVERY: usize = 1000;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Retraction {
    #[default]
    Qr,
    Projection,
}

/// `qf(x + z)`.
pub fn qr_retraction(x: &DenseMatrix, z: &DenseMatrix) -> Result<DenseMatrix> {
    Ok(thin_qr(&x.add(z)?)?.0)
}

/// `Y (YᵀY)^{-1/2}` with `Y = x + z`.
pub fn projection_retraction(x: &DenseMatrix, z: &DenseMatrix) -> Result<DenseMatrix> {
    let y = x.add(z)?;
    matmul(&y, &spd_inv_sqrt(&gram(&y))?)
}

/// `½ (G - X Gᵀ X)`, the canonical-metric gradient for `X` on the manifold.
pub fn riemannian_gradient(g: &DenseMatrix, x: &DenseMatrix) -> Result<DenseMatrix> {
    let c = matmul_tn(g, x)?;
    let mut out = g.clone();
    out.axpy(-1.0, &matmul(x, &c)?)?;
    out.scale_mut(0.5);
    Ok(out)
}

fn retract(kind: Retraction, x: &DenseMatrix, z: &DenseMatrix) -> Result<DenseMatrix> {
    match kind {
        Retraction::Qr => qr_retraction(x, z),
        Retraction::Projection => projection_retraction(x, z),
    }
}

/// Riemannian gradient descent (`Batch::Full`) or SGD with a retraction.
/// `lambda`/`mu` only feed the logged field norm and merit value.
#[allow(clippy::too_many_arguments)]
pub fn run_riemannian(
    obj: &dyn Objective,
    x0: &DenseMatrix,
    retraction: Retraction,
    sched: &StepSchedule,
    opts: &RunOptions,
    lambda: f64,
    mu: f64,
) -> Result<Trace> {
    let n_samples = obj.sample_count();
    let orth = crate::landing::distance(x0);
    if orth > 1e-10 {
        return Err(Error::Contract(format!(
            "Riemannian methods need an orthonormal start, got ‖XᵀX - I‖ = {orth:.3e}"
        )));
    }
    let (per_iter, mut sampler) = match opts.batch {
        Batch::Full => (n_samples, None),
        Batch::Size(b) => (b, Some(Sampler::new(opts.seed, n_samples, b, opts.sampling))),
    };
    let driver = Driver::new(obj, lambda, mu, opts, per_iter)?;
    driver.run(x0, sched, 0, |k, x, eta| {
        let g = match sampler.as_mut() {
            None => obj.grad_full(x)?,
            Some(s) => obj.grad_samples(&s.draw(), x)?,
        };
        let z = riemannian_gradient(&g, x)?.scaled(-eta);
        let mut next = retract(retraction, x, &z)?;
        if (k + 1) % REORTHONORMALIZE_EVERY == 0 && retraction != Retraction::Qr {
            next = thin_qr(&next)?.0;
        }
        Ok(Advance {
            x: next,
            eta,
            clamped: false,
        })
    })
}
