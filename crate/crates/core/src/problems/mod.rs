//! Objectives with per-sample gradients, synthetic instances, and the
//! closed-form oracles used to score runs.

mod data;
mod ica;
mod oracle;
mod pca;
mod simple;

pub use data::{
    gen_ica_data, gen_pca_data, random_stiefel, read_instance, write_instance, IcaInstance, Instance,
    PcaInstance, CONTAINER_MAGIC, CONTAINER_VERSION,
};
pub use ica::{logcosh, IcaObjective};
pub use oracle::{amari_distance, penalty_oracle, penalty_root, PenaltySolution};
pub use pca::PcaObjective;
pub use simple::{LinearObjective, QuadraticObjective};

use crate::error::{Error, Result};
use crate::landing::SmoothnessConstants;
use crate::matcore::DenseMatrix;

/// A finite-sum objective `f(X) = (1/N) Σ f_i(X)` over `n x p` matrices.
pub trait Objective: Send + Sync {
    fn name(&self) -> &'static str;

    /// `(n, p)`.
    fn dims(&self) -> (usize, usize);

    fn sample_count(&self) -> usize;

    fn value(&self, x: &DenseMatrix) -> Result<f64>;

    fn grad_full(&self, x: &DenseMatrix) -> Result<DenseMatrix>;

    /// Mean of the per-sample gradients over `indices`; repeated indices
    /// are counted with multiplicity.
    fn grad_samples(&self, indices: &[usize], x: &DenseMatrix) -> Result<DenseMatrix>;

    fn value_and_grad(&self, x: &DenseMatrix) -> Result<(f64, DenseMatrix)> {
        Ok((self.value(x)?, self.grad_full(x)?))
    }

    /// Closed-form smoothness constants over the safe region, when known.
    fn known_constants(&self, _epsilon: f64) -> Option<SmoothnessConstants> {
        None
    }

    /// Optimal value over the manifold, when known.
    fn reference_value(&self) -> Option<f64> {
        None
    }
}

pub(crate) fn check_point(obj: &dyn Objective, x: &DenseMatrix) -> Result<()> {
    let dims = obj.dims();
    if x.shape() != dims {
        return Err(Error::DimensionMismatch {
            op: "objective",
            left: dims,
            right: x.shape(),
        });
    }
    Ok(())
}

pub(crate) fn check_indices(indices: &[usize], count: usize) -> Result<()> {
    if indices.is_empty() {
        return Err(Error::Contract("empty sample index set".into()));
    }
    if let Some(&index) = indices.iter().find(|&&i| i >= count) {
        return Err(Error::IndexOutOfRange { index, count });
    }
    Ok(())
}

#[cfg(test)]
pub(crate) mod testing {
    use super::*;
    use rand::Rng;
    use rand_distr::StandardNormal;

    pub fn gaussian(rows: usize, cols: usize, rng: &mut impl Rng) -> DenseMatrix {
        DenseMatrix::from_fn(rows, cols, |_, _| rng.sample(StandardNormal))
    }

    /// Max relative gap between `grad_full` and central differences of `value`.
    pub fn fd_gradient_error(obj: &dyn Objective, x: &DenseMatrix) -> f64 {
        let g = obj.grad_full(x).unwrap();
        let delta = 1e-6 * x.max_abs().max(1.0);
        let mut worst: f64 = 0.0;
        for i in 0..x.rows() {
            for j in 0..x.cols() {
                let mut xp = x.clone();
                xp.set(i, j, x.get(i, j) + delta);
                let mut xm = x.clone();
                xm.set(i, j, x.get(i, j) - delta);
                let fd = (obj.value(&xp).unwrap() - obj.value(&xm).unwrap()) / (2.0 * delta);
                worst = worst.max((fd - g.get(i, j)).abs());
            }
        }
        worst / g.frobenius_norm().max(1e-300)
    }

    /// Max relative gap between `grad_full` and the mean of singleton gradients.
    pub fn sum_structure_error(obj: &dyn Objective, x: &DenseMatrix) -> f64 {
        let n = obj.sample_count();
        let full = obj.grad_full(x).unwrap();
        let mut acc = DenseMatrix::zeros(x.rows(), x.cols());
        for i in 0..n {
            acc.axpy(1.0 / n as f64, &obj.grad_samples(&[i], x).unwrap()).unwrap();
        }
        acc.distance(&full).unwrap() / full.frobenius_norm().max(1e-300)
    }
}
