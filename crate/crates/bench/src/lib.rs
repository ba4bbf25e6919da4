//! Shared fixtures for the criterion benches.

use landing_core::harness::linear_matrix;
use landing_core::problems::random_stiefel;
use landing_core::DenseMatrix;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Shapes swept by the iteration-cost bench; the last one is the
/// (2000, 500) comparison point.
pub const SHAPES: &[(usize, usize)] = &[(200, 20), (500, 100), (1000, 200), (2000, 500)];

/// Orthonormal point and a gradient-sized matrix for an `n x p` problem.
pub fn point_and_gradient(n: usize, p: usize, seed: u64) -> (DenseMatrix, DenseMatrix) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let x = random_stiefel(n, p, &mut rng).expect("valid shape");
    (x, linear_matrix(n, p, seed.wrapping_add(1)))
}
