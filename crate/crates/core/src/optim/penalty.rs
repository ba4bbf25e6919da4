use super::{Advance, Batch, Driver, RunOptions, Sampler, StepSchedule, Trace};
use crate::error::{Error, Result};
use crate::landing::constraint_residual;
use crate::matcore::{matmul, DenseMatrix};
use crate::problems::Objective;

/// Plain Euclidean (S)GD on `f + λ_pen N`: no safeguard, no clamp.
/// `lambda`/`mu` only feed the logged field norm and merit value.
#[allow(clippy::too_many_arguments)]
pub fn run_penalty_sgd(
    obj: &dyn Objective,
    x0: &DenseMatrix,
    lambda_pen: f64,
    sched: &StepSchedule,
    opts: &RunOptions,
    lambda: f64,
    mu: f64,
) -> Result<Trace> {
    if !(lambda_pen >= 0.0 && lambda_pen.is_finite()) {
        return Err(Error::config("lambda_pen", format!("must be finite and nonnegative, got {lambda_pen}")));
    }
    let n_samples = obj.sample_count();
    let (per_iter, mut sampler) = match opts.batch {
        Batch::Full => (n_samples, None),
        Batch::Size(b) => (b, Some(Sampler::new(opts.seed, n_samples, b, opts.sampling))),
    };
    let driver = Driver::new(obj, lambda, mu, opts, per_iter)?;
    driver.run(x0, sched, 0, |_, x, eta| {
        let mut g = match sampler.as_mut() {
            None => obj.grad_full(x)?,
            Some(s) => obj.grad_samples(&s.draw(), x)?,
        };
        if lambda_pen > 0.0 {
            g.axpy(lambda_pen, &matmul(x, &constraint_residual(x))?)?;
        }
        let next = x.lin_comb(1.0, &g, -eta)?;
        if !next.is_finite() {
            return Err(Error::NonFinite("penalty iterate"));
        }
        Ok(Advance {
            x: next,
            eta,
            clamped: false,
        })
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::problems::{penalty_oracle, random_stiefel, LinearObjective};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use rand_distr::StandardNormal;

    #[test]
    fn zero_penalty_is_plain_gradient_descent() {
        let m = DenseMatrix::from_rows(&[&[1.0], &[-2.0]]);
        let obj = LinearObjective::new(m.clone());
        let x0 = DenseMatrix::from_rows(&[&[0.5], &[0.5]]);
        let trace = run_penalty_sgd(&obj, &x0, 0.0, &StepSchedule::constant(0.1), &RunOptions::new(3), 1.0, 1.0).unwrap();
        let expect = x0.lin_comb(1.0, &m, -0.3).unwrap();
        assert!(trace.x_final.distance(&expect).unwrap() < 1e-15);
    }

    #[test]
    fn converges_to_penalty_minimizer_not_manifold() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let m = DenseMatrix::from_fn(8, 2, |_, _| rng.sample::<f64, _>(StandardNormal));
        let obj = LinearObjective::new(m.clone());
        let x0 = random_stiefel(8, 2, &mut rng).unwrap();
        let lambda_pen = 2.0;
        let sol = penalty_oracle(&m, lambda_pen).unwrap();
        let top = sol.sigma_star[0];
        let eta = 0.5 / (lambda_pen * (3.0 * top * top - 1.0));
        let trace = run_penalty_sgd(&obj, &x0, lambda_pen, &StepSchedule::constant(eta), &RunOptions::new(5000).log_every(500), 1.0, 1.0).unwrap();
        assert!(trace.x_final.distance(&sol.x_star).unwrap() < 1e-8);
        assert!(trace.last().distance > 0.1);
    }
}
