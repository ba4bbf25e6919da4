use super::{Advance, Batch, Driver, RunOptions, Sampler, StepSchedule, Trace};
use crate::error::{Error, Result};
use crate::landing::{landing_direction, safeguard_eta, LandingParams, SAFE_REGION_SLACK};
use crate::matcore::DenseMatrix;
use crate::problems::Objective;

#[derive(Debug, Clone)]
pub struct StepOutcome {
    pub x_next: DenseMatrix,
    pub eta: f64,
    pub clamped: bool,
    pub field_norm: f64,
    /// `‖XᵀX - I‖` at the starting point.
    pub distance: f64,
}

/// `X - η Λ(X)` with `η = min(eta_sched, safeguard)`, where `g` is the
/// (possibly stochastic) Euclidean gradient estimate.
pub fn step_landing(x: &DenseMatrix, g: &DenseMatrix, params: &LandingParams, eta_sched: f64) -> Result<StepOutcome> {
    let dir = landing_direction(g, x, params.lambda)?;
    if dir.distance > params.epsilon + SAFE_REGION_SLACK {
        return Err(Error::OutsideSafeRegion {
            distance: dir.distance,
            epsilon: params.epsilon,
        });
    }
    let field_norm = dir.field.frobenius_norm();
    let safe = safeguard_eta(field_norm, dir.distance, params.lambda, params.epsilon)?;
    let clamped = safe < eta_sched;
    let eta = if clamped { safe } else { eta_sched };
    let x_next = x.lin_comb(1.0, &dir.field, -eta)?;
    Ok(StepOutcome {
        x_next,
        eta,
        clamped,
        field_norm,
        distance: dir.distance,
    })
}

impl From<StepOutcome> for Advance {
    fn from(s: StepOutcome) -> Self {
        Advance {
            x: s.x_next,
            eta: s.eta,
            clamped: s.clamped,
        }
    }
}

/// Deterministic landing with full gradients; `opts.batch` is ignored.
pub fn run_landing_gd(
    obj: &dyn Objective,
    x0: &DenseMatrix,
    params: &LandingParams,
    sched: &StepSchedule,
    opts: &RunOptions,
) -> Result<Trace> {
    let n = obj.sample_count();
    let driver = Driver::new(obj, params.lambda, params.mu, opts, n)?;
    driver.run(x0, sched, 0, |_, x, eta| {
        let g = obj.grad_full(x)?;
        Ok(step_landing(x, &g, params, eta)?.into())
    })
}

/// Stochastic landing: minibatches drawn uniformly with replacement (or in
/// shuffled passes). `Batch::Full` uses the exact gradient, reproducing
/// [`run_landing_gd`].
pub fn run_landing_sgd(
    obj: &dyn Objective,
    x0: &DenseMatrix,
    params: &LandingParams,
    sched: &StepSchedule,
    opts: &RunOptions,
) -> Result<Trace> {
    let n = obj.sample_count();
    match opts.batch {
        Batch::Full => run_landing_gd(obj, x0, params, sched, opts),
        Batch::Size(b) => {
            let driver = Driver::new(obj, params.lambda, params.mu, opts, b)?;
            let mut sampler = Sampler::new(opts.seed, n, b, opts.sampling);
            driver.run(x0, sched, 0, |_, x, eta| {
                let idx = sampler.draw();
                let g = obj.grad_samples(&idx, x)?;
                Ok(step_landing(x, &g, params, eta)?.into())
            })
        }
    }
}
