use serde::{Deserialize, Serialize};

use super::landing::{step_landing, StepOutcome};
use super::{Advance, Batch, Driver, RunOptions, Sampler, StepSchedule, Trace};
use crate::error::{Error, Result};
use crate::landing::LandingParams;
use crate::matcore::DenseMatrix;
use crate::problems::{check_indices, Objective};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SagaInit {
    Zeros,
    /// Fill every slot with `∇f_i(x0)` before the first step.
    #[default]
    FirstPass,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SagaOptions {
    pub init: SagaInit,
    /// Upper bound on the gradient table size.
    pub memory_budget_bytes: usize,
}

impl Default for SagaOptions {
    fn default() -> Self {
        SagaOptions {
            init: SagaInit::FirstPass,
            memory_budget_bytes: 1 << 30,
        }
    }
}

/// Table of the last gradient seen for each sample, plus its mean.
#[derive(Debug, Clone)]
pub struct SagaState {
    memory: Vec<DenseMatrix>,
    memory_mean: DenseMatrix,
    last_update_iter: Vec<Option<usize>>,
    updates_since_refresh: usize,
}

impl SagaState {
    pub fn zeros(count: usize, n: usize, p: usize) -> Self {
        SagaState {
            memory: vec![DenseMatrix::zeros(n, p); count],
            memory_mean: DenseMatrix::zeros(n, p),
            last_update_iter: vec![None; count],
            updates_since_refresh: 0,
        }
    }

    pub fn first_pass(obj: &dyn Objective, x: &DenseMatrix) -> Result<Self> {
        let count = obj.sample_count();
        let memory = (0..count)
            .map(|i| obj.grad_samples(&[i], x))
            .collect::<Result<Vec<_>>>()?;
        let mut state = SagaState {
            memory,
            memory_mean: DenseMatrix::zeros(x.rows(), x.cols()),
            last_update_iter: vec![Some(0); count],
            updates_since_refresh: 0,
        };
        state.refresh_mean();
        Ok(state)
    }

    pub fn len(&self) -> usize {
        self.memory.len()
    }

    pub fn is_empty(&self) -> bool {
        self.memory.is_empty()
    }

    pub fn memory(&self) -> &[DenseMatrix] {
        &self.memory
    }

    pub fn memory_mean(&self) -> &DenseMatrix {
        &self.memory_mean
    }

    pub fn last_update_iter(&self) -> &[Option<usize>] {
        &self.last_update_iter
    }

    /// Recomputes the mean from scratch, discarding accumulated drift.
    pub fn refresh_mean(&mut self) {
        let count = self.memory.len() as f64;
        let mut mean = DenseMatrix::zeros(self.memory_mean.rows(), self.memory_mean.cols());
        for m in &self.memory {
            mean.axpy(1.0, m).expect("slots share the iterate shape");
        }
        mean.scale_mut(1.0 / count);
        self.memory_mean = mean;
        self.updates_since_refresh = 0;
    }

    /// Relative gap between the running mean and a full recomputation.
    pub fn mean_drift(&self) -> f64 {
        let mut fresh = self.clone();
        fresh.refresh_mean();
        let scale = fresh.memory_mean.frobenius_norm().max(f64::MIN_POSITIVE);
        self.memory_mean.distance(&fresh.memory_mean).expect("same shape") / scale
    }

    /// Overwrites slot `i`, updating the mean incrementally.
    pub fn replace(&mut self, i: usize, grad: DenseMatrix, iter: usize) -> Result<()> {
        let count = self.memory.len();
        if i >= count {
            return Err(Error::IndexOutOfRange { index: i, count });
        }
        let delta = grad.sub(&self.memory[i])?;
        self.memory_mean.axpy(1.0 / count as f64, &delta)?;
        self.memory[i] = grad;
        self.last_update_iter[i] = Some(iter);
        self.updates_since_refresh += 1;
        if self.updates_since_refresh >= count {
            self.refresh_mean();
        }
        Ok(())
    }

    /// `(1/b) Σ_{i ∈ batch} (∇f_i(x) - Φⁱ) + Φ̄` and the fresh per-sample
    /// gradients it used.
    pub fn estimate(
        &self,
        obj: &dyn Objective,
        indices: &[usize],
        x: &DenseMatrix,
    ) -> Result<(DenseMatrix, Vec<(usize, DenseMatrix)>)> {
        check_indices(indices, self.memory.len())?;
        let w = 1.0 / indices.len() as f64;
        let mut g = self.memory_mean.clone();
        let mut fresh = Vec::with_capacity(indices.len());
        for &i in indices {
            let gi = obj.grad_samples(&[i], x)?;
            g.axpy(w, &gi)?;
            g.axpy(-w, &self.memory[i])?;
            fresh.push((i, gi));
        }
        Ok((g, fresh))
    }
}

/// One landing SAGA step on the minibatch `indices`. Each distinct index
/// gets its memory slot refreshed once.
pub fn step_saga(
    x: &DenseMatrix,
    indices: &[usize],
    obj: &dyn Objective,
    state: &mut SagaState,
    params: &LandingParams,
    eta_sched: f64,
    iter: usize,
) -> Result<StepOutcome> {
    let (g, fresh) = state.estimate(obj, indices, x)?;
    let out = step_landing(x, &g, params, eta_sched)?;
    let mut seen = std::collections::HashSet::with_capacity(fresh.len());
    for (i, gi) in fresh {
        if seen.insert(i) {
            state.replace(i, gi, iter)?;
        }
    }
    Ok(out)
}

/// Landing SAGA. `opts.batch` of `Full` means one sample per step.
pub fn run_landing_saga(
    obj: &dyn Objective,
    x0: &DenseMatrix,
    params: &LandingParams,
    sched: &StepSchedule,
    opts: &RunOptions,
    saga: &SagaOptions,
) -> Result<Trace> {
    let (n, p) = obj.dims();
    let count = obj.sample_count();
    let bytes = count.saturating_mul(n * p * std::mem::size_of::<f64>());
    if bytes > saga.memory_budget_bytes {
        return Err(Error::config(
            "algorithm",
            format!(
                "SAGA memory needs {bytes} bytes for {count} samples of {n}x{p}, over the budget of {}",
                saga.memory_budget_bytes
            ),
        ));
    }
    let b = match opts.batch {
        Batch::Full => 1,
        Batch::Size(b) => b,
    };
    let driver = Driver::new(obj, params.lambda, params.mu, opts, b)?;
    let (mut state, initial) = match saga.init {
        SagaInit::Zeros => (SagaState::zeros(count, n, p), 0),
        SagaInit::FirstPass => (SagaState::first_pass(obj, x0)?, count as u64),
    };
    let mut sampler = Sampler::new(opts.seed, count, b, opts.sampling);
    driver.run(x0, sched, initial, |k, x, eta| {
        let idx = sampler.draw();
        let out = step_saga(x, &idx, obj, &mut state, params, eta, k + 1)?;
        Ok(Advance::from(out))
    })
}
