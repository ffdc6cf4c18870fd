//! Deterministic synthetic grids for tests, sweeps, and benchmarks.

use std::collections::BTreeSet;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::grid::Grid;

/// Shape parameters for [`random_connected_grid`].
#[derive(Clone, Copy, Debug)]
pub struct SynthSpec {
    pub n: usize,
    /// Chords added on top of the random spanning tree (best effort: duplicate
    /// draws are retried a bounded number of times).
    pub extra_edges: usize,
    pub p_min: f64,
    pub p_max: f64,
    /// Fraction of nodes forced to exactly zero power.
    pub zero_fraction: f64,
}

impl Default for SynthSpec {
    fn default() -> Self {
        SynthSpec {
            n: 12,
            extra_edges: 6,
            p_min: -600.0,
            p_max: 600.0,
            zero_fraction: 0.0,
        }
    }
}

/// Builds a connected grid with external ids `1..=n`: a random recursive
/// tree plus `extra_edges` random chords, powers uniform in
/// `[p_min, p_max]`. Same seed, same grid.
pub fn random_connected_grid(seed: u64, spec: &SynthSpec) -> Grid {
    assert!(spec.n >= 1, "need at least one node");
    assert!(spec.p_min <= spec.p_max);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);

    let mut edges: BTreeSet<(i64, i64)> = BTreeSet::new();
    for i in 1..spec.n {
        let j = rng.gen_range(0..i);
        edges.insert((j as i64 + 1, i as i64 + 1));
    }
    let want = edges.len() + spec.extra_edges;
    let mut attempts = 0usize;
    while edges.len() < want && attempts < 20 * spec.extra_edges.max(1) {
        attempts += 1;
        let a = rng.gen_range(0..spec.n) as i64 + 1;
        let b = rng.gen_range(0..spec.n) as i64 + 1;
        if a == b {
            continue;
        }
        edges.insert((a.min(b), a.max(b)));
    }

    let nodes: Vec<(i64, f64)> = (1..=spec.n as i64)
        .map(|id| {
            let p = if spec.zero_fraction > 0.0 && rng.gen_bool(spec.zero_fraction) {
                0.0
            } else {
                rng.gen_range(spec.p_min..=spec.p_max)
            };
            (id, p)
        })
        .collect();

    Grid::new(nodes, edges.into_iter().collect()).expect("synthetic grid is valid by construction")
}
