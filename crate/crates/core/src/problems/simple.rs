use super::{check_indices, check_point, Objective};
use crate::error::Result;
use crate::landing::SmoothnessConstants;
use crate::matcore::DenseMatrix;

/// `f(X) = ⟨M, X⟩`, treated as a single sample.
#[derive(Debug, Clone)]
pub struct LinearObjective {
    m: DenseMatrix,
}

impl LinearObjective {
    pub fn new(m: DenseMatrix) -> Self {
        LinearObjective { m }
    }

    pub fn matrix(&self) -> &DenseMatrix {
        &self.m
    }
}

impl Objective for LinearObjective {
    fn name(&self) -> &'static str {
        "linear"
    }

    fn dims(&self) -> (usize, usize) {
        self.m.shape()
    }

    fn sample_count(&self) -> usize {
        1
    }

    fn value(&self, x: &DenseMatrix) -> Result<f64> {
        check_point(self, x)?;
        self.m.inner(x)
    }

    fn grad_full(&self, x: &DenseMatrix) -> Result<DenseMatrix> {
        check_point(self, x)?;
        Ok(self.m.clone())
    }

    fn grad_samples(&self, indices: &[usize], x: &DenseMatrix) -> Result<DenseMatrix> {
        check_indices(indices, 1)?;
        self.grad_full(x)
    }

    fn known_constants(&self, epsilon: f64) -> Option<SmoothnessConstants> {
        let norm = self.m.frobenius_norm();
        Some(SmoothnessConstants {
            l_smooth: 0.0,
            s_bound: (1.0 + epsilon).sqrt() * norm,
            l_prime: norm,
        })
    }
}

/// Isotropic quadratic `f(X) = (c/2) ‖X‖²` on `n x p` matrices.
#[derive(Debug, Clone)]
pub struct QuadraticObjective {
    n: usize,
    p: usize,
    c: f64,
}

impl QuadraticObjective {
    pub fn new(n: usize, p: usize, c: f64) -> Self {
        QuadraticObjective { n, p, c }
    }
}

impl Objective for QuadraticObjective {
    fn name(&self) -> &'static str {
        "quadratic"
    }

    fn dims(&self) -> (usize, usize) {
        (self.n, self.p)
    }

    fn sample_count(&self) -> usize {
        1
    }

    fn value(&self, x: &DenseMatrix) -> Result<f64> {
        check_point(self, x)?;
        Ok(0.5 * self.c * x.norm_sq())
    }

    fn grad_full(&self, x: &DenseMatrix) -> Result<DenseMatrix> {
        check_point(self, x)?;
        Ok(x.scaled(self.c))
    }

    fn grad_samples(&self, indices: &[usize], x: &DenseMatrix) -> Result<DenseMatrix> {
        check_indices(indices, 1)?;
        self.grad_full(x)
    }

    fn known_constants(&self, epsilon: f64) -> Option<SmoothnessConstants> {
        let c = self.c.abs();
        let p = self.p as f64;
        Some(SmoothnessConstants {
            l_smooth: c,
            s_bound: c * (1.0 + epsilon) * p.sqrt(),
            l_prime: c * (p * (1.0 + epsilon)).sqrt(),
        })
    }
}
