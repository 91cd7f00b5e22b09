//! Fixtures shared by the criterion benchmarks.

use sam_core::{generate_mulcross_like, Dataset, GeneratorConfig};

/// Mulcross-style data with `n` rows and `d` features.
pub fn fixture(n: usize, d: usize, seed: u64) -> Dataset {
    generate_mulcross_like(&GeneratorConfig {
        n,
        d,
        seed,
        ..Default::default()
    })
    .expect("valid generator config")
}

/// Rows of `ds` as owned vectors, for per-point scoring loops.
pub fn rows(ds: &Dataset, limit: usize) -> Vec<Vec<f64>> {
    (0..ds.n().min(limit)).map(|i| ds.row(i)).collect()
}
