use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::Serialize;

use super::config::{Algorithm, ProblemKind, RunConfig};
use crate::error::{Error, Result};
use crate::landing::{sample_safe_region, smoothness_estimate, LandingParams, SmoothnessConstants};
use crate::matcore::{matmul_tn, DenseMatrix};
use crate::optim::{
    estimate_variance, run_landing_gd, run_landing_saga, run_landing_sgd, run_penalty_sgd, run_riemannian, Batch,
    RunOptions, RunRecord, SagaInit, SagaOptions, StepSchedule, Trace,
};
use crate::problems::{
    amari_distance, gen_ica_data, gen_pca_data, read_instance, IcaObjective, Instance, LinearObjective, Objective,
    PcaObjective,
};

/// Substream of the run seed for the starting point. Data uses stream 0 of
/// the data seed and minibatch sampling stream 1 of the run seed.
pub const INIT_STREAM: u64 = 2;
/// Substream for sampled smoothness estimates.
pub const ESTIMATE_STREAM: u64 = 3;
/// Points used by the sampled smoothness estimate.
pub const ESTIMATE_SAMPLES: usize = 20;
/// Samples enumerated for the gradient variance estimate.
pub const VARIANCE_SAMPLES: usize = 2000;

pub const CSV_HEADER: &str = "iter,epoch,wall_time_s,f_value,grad_norm_sq,distance,n_of_x,merit,step_used,clamped";

/// An objective built from a config, plus what is needed to score it.
pub struct Problem {
    pub objective: Box<dyn Objective>,
    /// ICA mixing matrix, for the Amari distance.
    pub mixing: Option<DenseMatrix>,
}

pub fn build_problem(cfg: &RunConfig) -> Result<Problem> {
    let pp = &cfg.problem_params;
    let seed = cfg.data_seed();
    let loaded = match &pp.data_path {
        Some(path) => {
            let mut f = std::io::BufReader::new(File::open(path)?);
            Some(read_instance(&mut f)?)
        }
        None => None,
    };
    let problem = match cfg.problem {
        ProblemKind::Pca => {
            let p = pp.p.expect("validated");
            let inst = match loaded {
                Some(Instance::Pca(inst)) => inst,
                Some(Instance::Ica(_)) => return Err(Error::config("problem_params.data_path", "holds an ICA instance")),
                None => gen_pca_data(pp.n, p, pp.samples.expect("validated"), pp.sigma, seed)?,
            };
            check_width(inst.data.cols(), pp.n)?;
            Problem {
                objective: Box::new(PcaObjective::new(inst.data, p)),
                mixing: None,
            }
        }
        ProblemKind::Ica => {
            let inst = match loaded {
                Some(Instance::Ica(inst)) => inst,
                Some(Instance::Pca(_)) => return Err(Error::config("problem_params.data_path", "holds a PCA instance")),
                None => gen_ica_data(pp.n, pp.samples.expect("validated"), seed)?,
            };
            check_width(inst.data.cols(), pp.n)?;
            let p = pp.p.unwrap_or(pp.n);
            Problem {
                objective: Box::new(IcaObjective::new(inst.data, p)),
                mixing: Some(inst.mixing),
            }
        }
        ProblemKind::Linear => Problem {
            objective: Box::new(LinearObjective::new(linear_matrix(pp.n, pp.p.expect("validated"), seed))),
            mixing: None,
        },
    };
    Ok(problem)
}

fn check_width(cols: usize, n: usize) -> Result<()> {
    if cols != n {
        return Err(Error::config("problem_params.n", format!("data file has dimension {cols}, config says {n}")));
    }
    Ok(())
}

/// Gaussian `n x p` matrix with entry variance `1/n`.
pub fn linear_matrix(n: usize, p: usize, seed: u64) -> DenseMatrix {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let scale = 1.0 / (n as f64).sqrt();
    DenseMatrix::from_fn(n, p, |_, _| scale * rng.sample::<f64, _>(StandardNormal))
}

pub fn initial_point(cfg: &RunConfig, n: usize, p: usize) -> Result<DenseMatrix> {
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    rng.set_stream(INIT_STREAM);
    sample_safe_region(n, p, cfg.init_distance, &mut rng)
}

/// Everything derived from the config before iterating.
#[derive(Debug, Clone, Serialize)]
pub struct Resolved {
    pub n: usize,
    pub p: usize,
    pub samples: usize,
    pub iterations: usize,
    pub constants: SmoothnessConstants,
    pub constants_source: &'static str,
    pub params: LandingParams,
    pub schedule: StepSchedule,
}

fn samples_per_iter(cfg: &RunConfig, count: usize) -> usize {
    match cfg.algorithm {
        Algorithm::LandingGd | Algorithm::RiemannianGd => count,
        Algorithm::LandingSaga => cfg.batch_size.unwrap_or(1),
        _ => cfg.batch_size.unwrap_or(count),
    }
}

fn initial_evals(cfg: &RunConfig, count: usize) -> usize {
    if cfg.algorithm == Algorithm::LandingSaga && cfg.saga_init == SagaInit::FirstPass {
        count
    } else {
        0
    }
}

/// Iteration count for the budget. An epoch budget includes SAGA's
/// initial pass over the data.
pub fn iteration_budget(cfg: &RunConfig, count: usize) -> usize {
    match (cfg.max_iter, cfg.max_epochs) {
        (Some(k), _) => k,
        (None, Some(epochs)) => {
            let total = epochs * count as f64 - initial_evals(cfg, count) as f64;
            (total / samples_per_iter(cfg, count) as f64).ceil().max(0.0) as usize
        }
        (None, None) => unreachable!("validated"),
    }
}

pub fn resolve(cfg: &RunConfig, obj: &dyn Objective) -> Result<Resolved> {
    let (n, p) = obj.dims();
    let count = obj.sample_count();
    let (constants, constants_source) = match (cfg.constants, obj.known_constants(cfg.epsilon)) {
        (Some(c), _) => (c, "config"),
        (None, Some(c)) => (c, "analytic"),
        (None, None) => {
            let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
            rng.set_stream(ESTIMATE_STREAM);
            (smoothness_estimate(obj, cfg.epsilon, ESTIMATE_SAMPLES, &mut rng)?, "estimated")
        }
    };
    let params = LandingParams::new(cfg.lambda, cfg.epsilon, &constants, cfg.mu.value())?;
    let iterations = iteration_budget(cfg, count);
    let eta0 = match cfg.schedule.eta0.value() {
        Some(v) => v,
        None => auto_step(cfg, &params, count),
    };
    let schedule = StepSchedule::new(cfg.schedule.kind(iterations)?, eta0)?;
    Ok(Resolved {
        n,
        p,
        samples: count,
        iterations,
        constants,
        constants_source,
        params,
        schedule,
    })
}

/// Default `eta0`: the theory steps for landing, and `1/L` style steps
/// for the baselines.
pub fn auto_step(cfg: &RunConfig, params: &LandingParams, count: usize) -> f64 {
    let guard = |v: f64| if v.is_finite() && v > 0.0 { v } else { 1.0 };
    match cfg.algorithm {
        Algorithm::LandingGd | Algorithm::LandingSgd => params.theory_step(),
        Algorithm::LandingSaga => params.saga_step(count),
        Algorithm::RiemannianGd | Algorithm::RiemannianSgd => guard(1.0 / (params.l_smooth + params.s_bound)),
        Algorithm::PenaltySgd => {
            let pen = cfg.lambda_pen.unwrap_or(0.0) * (2.0 + 3.0 * cfg.epsilon);
            guard(1.0 / (params.l_smooth + pen))
        }
    }
}

/// Runs the configured algorithm in memory.
pub fn execute(cfg: &RunConfig, problem: &Problem, resolved: &Resolved) -> Result<Trace> {
    let obj = problem.objective.as_ref();
    let x0 = initial_point(cfg, resolved.n, resolved.p)?;
    let batch = cfg.batch_size.map_or(Batch::Full, Batch::Size);
    let opts = RunOptions::new(resolved.iterations)
        .log_every(cfg.log_every)
        .seed(cfg.seed)
        .batch(batch)
        .sampling(cfg.sampling)
        .record_wall_time(cfg.record_wall_time);
    let params = &resolved.params;
    let sched = &resolved.schedule;
    match cfg.algorithm {
        Algorithm::LandingGd => run_landing_gd(obj, &x0, params, sched, &opts),
        Algorithm::LandingSgd => run_landing_sgd(obj, &x0, params, sched, &opts),
        Algorithm::LandingSaga => {
            let mut saga = SagaOptions {
                init: cfg.saga_init,
                ..SagaOptions::default()
            };
            if let Some(mb) = cfg.saga_memory_mb {
                saga.memory_budget_bytes = mb.saturating_mul(1 << 20);
            }
            run_landing_saga(obj, &x0, params, sched, &opts, &saga)
        }
        Algorithm::RiemannianGd => {
            run_riemannian(obj, &x0, cfg.retraction, sched, &opts.batch(Batch::Full), params.lambda, params.mu)
        }
        Algorithm::RiemannianSgd => run_riemannian(obj, &x0, cfg.retraction, sched, &opts, params.lambda, params.mu),
        Algorithm::PenaltySgd => run_penalty_sgd(
            obj,
            &x0,
            cfg.lambda_pen.expect("validated"),
            sched,
            &opts,
            params.lambda,
            params.mu,
        ),
    }
}

/// Writes the trace as CSV with 17 significant digits per float.
pub fn write_trace_csv(w: &mut impl Write, records: &[RunRecord]) -> Result<()> {
    writeln!(w, "{CSV_HEADER}")?;
    for r in records {
        writeln!(
            w,
            "{},{:.16e},{:.16e},{:.16e},{:.16e},{:.16e},{:.16e},{:.16e},{:.16e},{}",
            r.iter,
            r.epoch,
            r.wall_time_s,
            r.f_value,
            r.grad_norm_sq,
            r.distance,
            r.n_of_x,
            r.merit,
            r.step_used,
            u8::from(r.clamped)
        )?;
    }
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum RunStatus {
    Ok,
    Failed,
}

#[derive(Debug, Clone, Serialize)]
pub struct RunSummary {
    pub status: RunStatus,
    pub error: Option<String>,
    pub config: RunConfig,
    pub csv_path: Option<PathBuf>,
    pub resolved: Option<Resolved>,
    #[serde(rename = "final")]
    pub final_record: Option<RunRecord>,
    pub final_field_norm_sq: Option<f64>,
    pub best_grad_norm_sq: Option<f64>,
    pub best_field_norm_sq: Option<f64>,
    pub iterations: Option<usize>,
    pub clamp_count: Option<usize>,
    pub clamp_rate: Option<f64>,
    pub clamp_warnings: Option<usize>,
    pub sample_grad_evals: Option<u64>,
    /// Empirical `E‖Λ_i - Λ‖²` at the final iterate.
    pub variance_estimate: Option<f64>,
    pub amari_distance: Option<f64>,
    /// Optimal value over the manifold, when known in closed form.
    pub f_reference: Option<f64>,
}

impl RunSummary {
    fn failed(cfg: &RunConfig, err: &Error) -> Self {
        RunSummary {
            status: RunStatus::Failed,
            error: Some(err.to_string()),
            config: cfg.clone(),
            csv_path: None,
            resolved: None,
            final_record: None,
            final_field_norm_sq: None,
            best_grad_norm_sq: None,
            best_field_norm_sq: None,
            iterations: None,
            clamp_count: None,
            clamp_rate: None,
            clamp_warnings: None,
            sample_grad_evals: None,
            variance_estimate: None,
            amari_distance: None,
            f_reference: None,
        }
    }
}

pub fn summary_path(csv: &Path) -> PathBuf {
    csv.with_extension("json")
}

/// Runs one config and writes `<output>.csv` and its JSON summary. On
/// failure the summary records the error and the error is returned.
pub fn run_experiment(cfg: &RunConfig) -> Result<RunSummary> {
    let csv = cfg
        .output_path
        .clone()
        .ok_or_else(|| Error::config("output_path", "required to write a trace"))?;
    if let Some(dir) = csv.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir)?;
    }
    match run_and_write(cfg, &csv) {
        Ok(summary) => {
            write_summary(&summary_path(&csv), &summary)?;
            Ok(summary)
        }
        Err(err) => {
            log::error!("run failed: {err}");
            write_summary(&summary_path(&csv), &RunSummary::failed(cfg, &err))?;
            Err(err)
        }
    }
}

fn write_summary(path: &Path, summary: &RunSummary) -> Result<()> {
    let mut f = BufWriter::new(File::create(path)?);
    serde_json::to_writer_pretty(&mut f, summary)?;
    writeln!(f)?;
    f.flush()?;
    Ok(())
}

fn run_and_write(cfg: &RunConfig, csv: &Path) -> Result<RunSummary> {
    let problem = build_problem(cfg)?;
    let resolved = resolve(cfg, problem.objective.as_ref())?;
    log::info!(
        "{:?} on {:?} ({}x{}, N = {}): {} iterations, eta0 = {:.3e}, mu = {:.3e}",
        cfg.algorithm,
        cfg.problem,
        resolved.n,
        resolved.p,
        resolved.samples,
        resolved.iterations,
        resolved.schedule.eta0,
        resolved.params.mu
    );
    let trace = execute(cfg, &problem, &resolved)?;
    let mut f = BufWriter::new(File::create(csv)?);
    write_trace_csv(&mut f, &trace.records)?;
    f.flush()?;
    summarize(cfg, &problem, resolved, &trace, csv)
}

pub fn summarize(cfg: &RunConfig, problem: &Problem, resolved: Resolved, trace: &Trace, csv: &Path) -> Result<RunSummary> {
    let obj = problem.objective.as_ref();
    let x = &trace.x_final;
    let amari = match &problem.mixing {
        Some(b) if x.cols() == b.cols() => Some(amari_distance(&matmul_tn(x, b)?)?),
        _ => None,
    };
    Ok(RunSummary {
        status: RunStatus::Ok,
        error: None,
        config: cfg.clone(),
        csv_path: Some(csv.to_path_buf()),
        resolved: Some(resolved),
        final_record: Some(*trace.last()),
        final_field_norm_sq: trace.field_norm_sq.last().copied(),
        best_grad_norm_sq: Some(trace.best_grad_norm_sq()),
        best_field_norm_sq: Some(trace.best_field_norm_sq()),
        iterations: Some(trace.iterations),
        clamp_count: Some(trace.clamp_count),
        clamp_rate: Some(trace.clamp_rate()),
        clamp_warnings: Some(trace.clamp_warnings),
        sample_grad_evals: Some(trace.sample_grad_evals),
        variance_estimate: Some(estimate_variance(obj, x, VARIANCE_SAMPLES)?),
        amari_distance: amari,
        f_reference: obj.reference_value(),
    })
}
