use super::{check_indices, check_point, IcaInstance, Objective};
use crate::error::Result;
use crate::matcore::{matmul, matmul_tn, DenseMatrix};

/// `log(cosh(x))` without overflow for large `|x|`.
pub fn logcosh(x: f64) -> f64 {
    let a = x.abs();
    a + (-2.0 * a).exp().ln_1p() - std::f64::consts::LN_2
}

/// `f(X) = (1/N) Σ_ij logcosh([A X]_ij)`.
#[derive(Debug)]
pub struct IcaObjective {
    data: DenseMatrix,
    p: usize,
}

impl IcaObjective {
    pub fn new(data: DenseMatrix, p: usize) -> Self {
        assert!(p >= 1 && p <= data.cols(), "p must be in 1..={}", data.cols());
        IcaObjective { data, p }
    }

    /// Full unmixing problem: `p = n`.
    pub fn from_instance(inst: &IcaInstance) -> Self {
        Self::new(inst.data.clone(), inst.data.cols())
    }

    pub fn data(&self) -> &DenseMatrix {
        &self.data
    }
}

impl Objective for IcaObjective {
    fn name(&self) -> &'static str {
        "ica"
    }

    fn dims(&self) -> (usize, usize) {
        (self.data.cols(), self.p)
    }

    fn sample_count(&self) -> usize {
        self.data.rows()
    }

    fn value(&self, x: &DenseMatrix) -> Result<f64> {
        check_point(self, x)?;
        let ax = matmul(&self.data, x)?;
        Ok(ax.as_slice().iter().map(|&v| logcosh(v)).sum::<f64>() / self.data.rows() as f64)
    }

    fn grad_full(&self, x: &DenseMatrix) -> Result<DenseMatrix> {
        Ok(self.value_and_grad(x)?.1)
    }

    fn value_and_grad(&self, x: &DenseMatrix) -> Result<(f64, DenseMatrix)> {
        check_point(self, x)?;
        let mut ax = matmul(&self.data, x)?;
        let big_n = self.data.rows() as f64;
        let mut value = 0.0;
        for v in ax.as_mut_slice() {
            value += logcosh(*v);
            *v = v.tanh();
        }
        let mut g = matmul_tn(&self.data, &ax)?;
        g.scale_mut(1.0 / big_n);
        Ok((value / big_n, g))
    }

    fn grad_samples(&self, indices: &[usize], x: &DenseMatrix) -> Result<DenseMatrix> {
        check_point(self, x)?;
        check_indices(indices, self.sample_count())?;
        let (n, p) = x.shape();
        let mut out = DenseMatrix::zeros(n, p);
        let mut t = vec![0.0; p];
        let w = 1.0 / indices.len() as f64;
        for &i in indices {
            let a = self.data.row(i);
            t.iter_mut().for_each(|v| *v = 0.0);
            for (r, &ar) in a.iter().enumerate() {
                for (tj, &xj) in t.iter_mut().zip(x.row(r)) {
                    *tj += ar * xj;
                }
            }
            t.iter_mut().for_each(|v| *v = v.tanh());
            for (r, &ar) in a.iter().enumerate() {
                let s = w * ar;
                for (o, &tj) in out.row_mut(r).iter_mut().zip(&t) {
                    *o += s * tj;
                }
            }
        }
        Ok(out)
    }
}

#[cfg(test)]
mod tests {
    use super::super::testing::{fd_gradient_error, gaussian, sum_structure_error};
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn logcosh_values() {
        assert_eq!(logcosh(0.0), 0.0);
        assert!((logcosh(1.0) - 1f64.cosh().ln()).abs() < 1e-15);
        assert!((logcosh(1.0) - 0.433_780_830_483_027).abs() < 1e-12);
        assert!((logcosh(-3.5) - 3.5f64.cosh().ln()).abs() < 1e-14);
        // cosh overflows here; the stable form does not
        assert!((logcosh(1000.0) - (1000.0 - std::f64::consts::LN_2)).abs() < 1e-9);
    }

    #[test]
    fn zero_projection_gives_zero() {
        let obj = IcaObjective::new(DenseMatrix::identity(3), 3);
        let x = DenseMatrix::zeros(3, 3);
        assert_eq!(obj.value(&x).unwrap(), 0.0);
        assert_eq!(obj.grad_full(&x).unwrap().max_abs(), 0.0);
    }

    #[test]
    fn gradient_checks() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let obj = IcaObjective::new(gaussian(40, 4, &mut rng), 4);
        for _ in 0..20 {
            let x = gaussian(4, 4, &mut rng);
            assert!(fd_gradient_error(&obj, &x) < 1e-5);
            assert!(sum_structure_error(&obj, &x) < 1e-10);
        }
        let rect = IcaObjective::new(gaussian(40, 5, &mut rng), 2);
        let x = gaussian(5, 2, &mut rng);
        assert!(fd_gradient_error(&rect, &x) < 1e-5);
    }
}
