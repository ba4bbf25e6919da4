//! Optimizer drivers: landing GD/SGD/SAGA, Riemannian baselines and the
//! penalty method, all producing the same trace schema.

mod landing;
mod penalty;
mod riemannian;
mod saga;
mod schedule;

use std::time::{Duration, Instant};

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

pub use landing::{run_landing_gd, run_landing_sgd, step_landing, StepOutcome};
pub use penalty::run_penalty_sgd;
pub use riemannian::{
    projection_retraction, qr_retraction, riemannian_gradient, run_riemannian, Retraction, REORTHONORMALIZE_EVERY,
};
pub use saga::{run_landing_saga, step_saga, SagaInit, SagaOptions, SagaState};
pub use schedule::{ScheduleKind, StepSchedule};

use crate::error::{Error, Result};
use crate::landing::{constraint_residual, merit_value, riemannian_gradient_ext};
use crate::matcore::DenseMatrix;
use crate::problems::Objective;

/// Substream of the run seed used for minibatch sampling.
pub const SAMPLING_STREAM: u64 = 1;

/// Clamp-rate window and threshold for the persistent-clamping warning.
pub const CLAMP_WINDOW: usize = 100;
pub const CLAMP_WARN_FRACTION: f64 = 0.5;

/// One logged point of a convergence trace.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RunRecord {
    pub iter: usize,
    pub epoch: f64,
    pub wall_time_s: f64,
    pub f_value: f64,
    /// `‖skew(∇f Xᵀ) X‖²`
    pub grad_norm_sq: f64,
    /// `‖XᵀX - I‖`
    pub distance: f64,
    pub n_of_x: f64,
    pub merit: f64,
    /// Step that produced this iterate (0 for the initial point).
    pub step_used: f64,
    pub clamped: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Batch {
    Full,
    #[serde(untagged)]
    Size(usize),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Sampling {
    /// Independent uniform draws, as in the analysis.
    #[default]
    WithReplacement,
    /// Reshuffled passes over the data.
    Shuffled,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunOptions {
    pub max_iter: usize,
    pub log_every: usize,
    pub seed: u64,
    pub batch: Batch,
    pub sampling: Sampling,
    /// When false, `wall_time_s` is logged as 0 so traces are byte-stable.
    pub record_wall_time: bool,
}

impl RunOptions {
    pub fn new(max_iter: usize) -> Self {
        RunOptions {
            max_iter,
            log_every: 1,
            seed: 0,
            batch: Batch::Full,
            sampling: Sampling::WithReplacement,
            record_wall_time: true,
        }
    }

    pub fn log_every(mut self, every: usize) -> Self {
        self.log_every = every;
        self
    }

    pub fn seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    pub fn batch(mut self, batch: Batch) -> Self {
        self.batch = batch;
        self
    }

    pub fn sampling(mut self, sampling: Sampling) -> Self {
        self.sampling = sampling;
        self
    }

    pub fn record_wall_time(mut self, on: bool) -> Self {
        self.record_wall_time = on;
        self
    }

    fn validate(&self, obj: &dyn Objective) -> Result<()> {
        if self.log_every == 0 {
            return Err(Error::config("log_every", "must be at least 1"));
        }
        if let Batch::Size(b) = self.batch {
            if b == 0 {
                return Err(Error::config("batch_size", "must be at least 1"));
            }
            if b > obj.sample_count() && self.sampling == Sampling::Shuffled {
                return Err(Error::config("batch_size", "shuffled batches cannot exceed the sample count"));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone)]
pub struct Trace {
    pub records: Vec<RunRecord>,
    /// `‖Λ(X)‖²` with the landing λ at each logged point.
    pub field_norm_sq: Vec<f64>,
    pub x_final: DenseMatrix,
    pub iterations: usize,
    pub clamp_count: usize,
    pub clamp_warnings: usize,
    /// Per-sample gradient evaluations spent by the algorithm (logging excluded).
    pub sample_grad_evals: u64,
}

impl Trace {
    pub fn last(&self) -> &RunRecord {
        self.records.last().expect("traces always hold the initial point")
    }

    pub fn clamp_rate(&self) -> f64 {
        if self.iterations == 0 {
            0.0
        } else {
            self.clamp_count as f64 / self.iterations as f64
        }
    }

    pub fn best_grad_norm_sq(&self) -> f64 {
        self.records.iter().map(|r| r.grad_norm_sq).fold(f64::INFINITY, f64::min)
    }

    pub fn best_field_norm_sq(&self) -> f64 {
        self.field_norm_sq.iter().copied().fold(f64::INFINITY, f64::min)
    }
}

/// Draws minibatch indices from the sampling substream.
pub(crate) struct Sampler {
    rng: ChaCha8Rng,
    count: usize,
    batch: usize,
    mode: Sampling,
    perm: Vec<usize>,
    pos: usize,
}

impl Sampler {
    pub(crate) fn new(seed: u64, count: usize, batch: usize, mode: Sampling) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(SAMPLING_STREAM);
        Sampler {
            rng,
            count,
            batch,
            mode,
            perm: (0..count).collect(),
            pos: count,
        }
    }

    pub(crate) fn draw(&mut self) -> Vec<usize> {
        match self.mode {
            Sampling::WithReplacement => (0..self.batch).map(|_| self.rng.random_range(0..self.count)).collect(),
            Sampling::Shuffled => {
                let mut out = Vec::with_capacity(self.batch);
                while out.len() < self.batch {
                    if self.pos == self.count {
                        self.perm.shuffle(&mut self.rng);
                        self.pos = 0;
                    }
                    out.push(self.perm[self.pos]);
                    self.pos += 1;
                }
                out
            }
        }
    }
}

/// Outcome of one iteration as seen by the shared loop.
pub(crate) struct Advance {
    pub x: DenseMatrix,
    pub eta: f64,
    pub clamped: bool,
}

/// Shared iteration loop: logging, timing, clamp accounting.
pub(crate) struct Driver<'a> {
    obj: &'a dyn Objective,
    lambda: f64,
    mu: f64,
    opts: &'a RunOptions,
    samples_per_iter: usize,
}

impl<'a> Driver<'a> {
    pub(crate) fn new(obj: &'a dyn Objective, lambda: f64, mu: f64, opts: &'a RunOptions, samples_per_iter: usize) -> Result<Self> {
        opts.validate(obj)?;
        Ok(Driver {
            obj,
            lambda,
            mu,
            opts,
            samples_per_iter,
        })
    }

    fn epoch(&self, k: usize) -> f64 {
        (k * self.samples_per_iter) as f64 / self.obj.sample_count() as f64
    }

    fn record(&self, k: usize, x: &DenseMatrix, wall: f64, step: f64, clamped: bool) -> Result<(RunRecord, f64)> {
        let (f, g) = self.obj.value_and_grad(x).map_err(|e| e.at_iter(k))?;
        let rg = riemannian_gradient_ext(&g, x)?;
        let resid = constraint_residual(x);
        let distance = resid.frobenius_norm();
        let n_of_x = 0.25 * distance * distance;
        let merit = merit_value(x, f, &g, self.mu)?;
        let normal_sq = crate::matcore::matmul(x, &resid)?.norm_sq() * self.lambda * self.lambda;
        let rec = RunRecord {
            iter: k,
            epoch: self.epoch(k),
            wall_time_s: wall,
            f_value: f,
            grad_norm_sq: rg.norm_sq(),
            distance,
            n_of_x,
            merit,
            step_used: step,
            clamped,
        };
        Ok((rec, rg.norm_sq() + normal_sq))
    }

    pub(crate) fn run(
        self,
        x0: &DenseMatrix,
        sched: &StepSchedule,
        initial_evals: u64,
        mut step: impl FnMut(usize, &DenseMatrix, f64) -> Result<Advance>,
    ) -> Result<Trace> {
        let (n, p) = self.obj.dims();
        if x0.shape() != (n, p) {
            return Err(Error::DimensionMismatch {
                op: "initial point",
                left: (n, p),
                right: x0.shape(),
            });
        }
        let mut records = Vec::new();
        let mut field = Vec::new();
        let (r0, f0) = self.record(0, x0, 0.0, 0.0, false)?;
        records.push(r0);
        field.push(f0);

        let mut x = x0.clone();
        let mut clock = Duration::ZERO;
        let mut clamp_count = 0;
        let mut window = 0;
        let mut warnings = 0;
        for k in 0..self.opts.max_iter {
            let eta_sched = sched.eta(k, self.epoch(k));
            let start = Instant::now();
            let adv = step(k, &x, eta_sched).map_err(|e| e.at_iter(k))?;
            clock += start.elapsed();
            x = adv.x;
            if adv.clamped {
                clamp_count += 1;
                window += 1;
            }
            if (k + 1) % CLAMP_WINDOW == 0 {
                if window as f64 > CLAMP_WARN_FRACTION * CLAMP_WINDOW as f64 {
                    warnings += 1;
                    log::warn!(
                        "safeguard clamped {window} of the last {CLAMP_WINDOW} steps (iteration {}); consider a smaller eta0",
                        k + 1
                    );
                }
                window = 0;
            }
            if (k + 1) % self.opts.log_every == 0 || k + 1 == self.opts.max_iter {
                let wall = if self.opts.record_wall_time { clock.as_secs_f64() } else { 0.0 };
                let (rec, f) = self.record(k + 1, &x, wall, adv.eta, adv.clamped)?;
                log::debug!(
                    "iter {} f {:.6e} grad {:.3e} N {:.3e}",
                    rec.iter,
                    rec.f_value,
                    rec.grad_norm_sq,
                    rec.n_of_x
                );
                records.push(rec);
                field.push(f);
            }
        }
        Ok(Trace {
            records,
            field_norm_sq: field,
            x_final: x,
            iterations: self.opts.max_iter,
            clamp_count,
            clamp_warnings: warnings,
            sample_grad_evals: initial_evals + (self.opts.max_iter * self.samples_per_iter) as u64,
        })
    }
}

/// Empirical `E_i ‖Λ_i(X) - Λ(X)‖² = E_i ‖skew((∇f_i - ∇f) Xᵀ) X‖²`,
/// enumerating all samples when `max_samples >= N` and an even stride
/// otherwise.
pub fn estimate_variance(obj: &dyn Objective, x: &DenseMatrix, max_samples: usize) -> Result<f64> {
    let n = obj.sample_count();
    let full = obj.grad_full(x)?;
    let take = max_samples.clamp(1, n);
    let mut acc = 0.0;
    for s in 0..take {
        let i = s * n / take;
        let diff = obj.grad_samples(&[i], x)?.sub(&full)?;
        acc += riemannian_gradient_ext(&diff, x)?.norm_sq();
    }
    Ok(acc / take as f64)
}
