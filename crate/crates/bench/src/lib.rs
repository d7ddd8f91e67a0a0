//! Fixtures shared by the kernel benchmarks.

use andersonkit::{rng, TallMatrix};
use rand::Rng as _;

/// A random `n × k` history matrix and right-hand side.
pub fn ls_fixture(n: usize, k: usize, seed: u64) -> (TallMatrix, Vec<f64>) {
    let mut g = rng::stream(seed, "bench-ls");
    let data = (0..n * k).map(|_| g.random::<f64>() - 0.5).collect();
    let r = (0..n).map(|_| g.random::<f64>() - 0.5).collect();
    (
        TallMatrix::from_column_major(n, k, data).expect("valid shape"),
        r,
    )
}
