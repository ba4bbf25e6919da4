use std::sync::OnceLock;

use super::{check_indices, check_point, Objective, PcaInstance};
use crate::error::Result;
use crate::landing::SmoothnessConstants;
use crate::matcore::{matmul, matmul_tn, sym_eig, DenseMatrix};

/// `f(X) = -(1/2N) ‖A X‖²` with `f_i(X) = -½ ‖a_iᵀ X‖²`.
#[derive(Debug)]
pub struct PcaObjective {
    data: DenseMatrix,
    p: usize,
    /// `AᵀA / N`, kept when it is cheaper than going through `A`.
    second_moment: Option<DenseMatrix>,
    spectrum: OnceLock<Vec<f64>>,
}

impl PcaObjective {
    pub fn new(data: DenseMatrix, p: usize) -> Self {
        let (big_n, n) = data.shape();
        assert!(p >= 1 && p <= n, "p must be in 1..={n}");
        let second_moment = (big_n >= n).then(|| {
            let mut c = crate::matcore::gram(&data);
            c.scale_mut(1.0 / big_n as f64);
            c
        });
        PcaObjective {
            data,
            p,
            second_moment,
            spectrum: OnceLock::new(),
        }
    }

    pub fn from_instance(inst: &PcaInstance) -> Self {
        Self::new(inst.data.clone(), inst.planted_u.cols())
    }

    pub fn data(&self) -> &DenseMatrix {
        &self.data
    }

    /// `AᵀA / N`.
    pub fn second_moment(&self) -> DenseMatrix {
        self.second_moment.clone().unwrap_or_else(|| {
            let mut c = crate::matcore::gram(&self.data);
            c.scale_mut(1.0 / self.data.rows() as f64);
            c
        })
    }

    /// Eigenvalues of the second-moment matrix, descending.
    pub fn spectrum(&self) -> &[f64] {
        self.spectrum.get_or_init(|| {
            let mut w = sym_eig(&self.second_moment())
                .expect("second moment is symmetric and finite")
                .values;
            w.reverse();
            w
        })
    }

    /// `A X / sqrt(N)` or `C X`, whichever representation is stored.
    fn c_times(&self, x: &DenseMatrix) -> Result<DenseMatrix> {
        match &self.second_moment {
            Some(c) => matmul(c, x),
            None => {
                let ax = matmul(&self.data, x)?;
                let mut out = matmul_tn(&self.data, &ax)?;
                out.scale_mut(1.0 / self.data.rows() as f64);
                Ok(out)
            }
        }
    }
}

impl Objective for PcaObjective {
    fn name(&self) -> &'static str {
        "pca"
    }

    fn dims(&self) -> (usize, usize) {
        (self.data.cols(), self.p)
    }

    fn sample_count(&self) -> usize {
        self.data.rows()
    }

    fn value(&self, x: &DenseMatrix) -> Result<f64> {
        check_point(self, x)?;
        Ok(-0.5 * x.inner(&self.c_times(x)?)?)
    }

    fn grad_full(&self, x: &DenseMatrix) -> Result<DenseMatrix> {
        check_point(self, x)?;
        Ok(self.c_times(x)?.scaled(-1.0))
    }

    fn value_and_grad(&self, x: &DenseMatrix) -> Result<(f64, DenseMatrix)> {
        check_point(self, x)?;
        let cx = self.c_times(x)?;
        Ok((-0.5 * x.inner(&cx)?, cx.scaled(-1.0)))
    }

    fn grad_samples(&self, indices: &[usize], x: &DenseMatrix) -> Result<DenseMatrix> {
        check_point(self, x)?;
        check_indices(indices, self.sample_count())?;
        let (n, p) = x.shape();
        let mut out = DenseMatrix::zeros(n, p);
        let mut proj = vec![0.0; p];
        let w = -1.0 / indices.len() as f64;
        for &i in indices {
            let a = self.data.row(i);
            proj.iter_mut().for_each(|v| *v = 0.0);
            for (r, &ar) in a.iter().enumerate() {
                for (pj, &xj) in proj.iter_mut().zip(x.row(r)) {
                    *pj += ar * xj;
                }
            }
            for (r, &ar) in a.iter().enumerate() {
                let s = w * ar;
                for (o, &pj) in out.row_mut(r).iter_mut().zip(&proj) {
                    *o += s * pj;
                }
            }
        }
        Ok(out)
    }

    /// Exact for this quadratic: ℒ = λ_max(C); with ‖X‖₂² ≤ 1+ε, ‖C X‖ is at
    /// most sqrt(1+ε) times the root of the sum of the top-p squared
    /// eigenvalues, and ‖XᵀCX‖ at most (1+ε) times it.
    fn known_constants(&self, epsilon: f64) -> Option<SmoothnessConstants> {
        let w = self.spectrum();
        let top = w[..self.p].iter().map(|v| v * v).sum::<f64>().sqrt();
        Some(SmoothnessConstants {
            l_smooth: w[0],
            s_bound: (1.0 + epsilon) * top,
            l_prime: (1.0 + epsilon).sqrt() * top,
        })
    }

    fn reference_value(&self) -> Option<f64> {
        Some(-0.5 * self.spectrum()[..self.p].iter().sum::<f64>())
    }
}
