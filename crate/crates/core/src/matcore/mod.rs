//! Dense row-major matrices and the factorizations the optimizers need.

mod decomp;
mod dense;

pub use decomp::{
    spd_inv_sqrt, spd_sqrt, sym_eig, thin_qr, thin_svd, Svd, SymEig, EIG_MAX_SWEEPS, EIG_OFF_TOL,
    EIG_SYMMETRY_TOL, INV_SQRT_TOL, QR_RANK_TOL, SVD_ZERO_TOL,
};
pub use dense::{frobenius_norm, gram, matmul, matmul_nt, matmul_tn, skew_part, sym_part, DenseMatrix};
