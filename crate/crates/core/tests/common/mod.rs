//! Random inputs for integration tests, independent of the search module.

#![allow(dead_code)]

use dyadic_bounds::{CubeSeq, Grid, LeafFn};
use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Uniform masses half the time, log-uniform masses otherwise.
pub fn grid(rng: &mut ChaCha8Rng, depth: u32) -> Grid {
    if rng.gen_bool(0.5) {
        Grid::uniform(depth).unwrap()
    } else {
        let masses = (0..1usize << depth)
            .map(|_| rng.gen_range(-2.0f64..2.0).exp())
            .collect();
        Grid::new(depth, masses).unwrap()
    }
}

/// Multiplicative cascade: each cube scales its subtree by `e^{±σ}`.
pub fn weight(rng: &mut ChaCha8Rng, grid: &Grid) -> LeafFn {
    let sigma = rng.gen_range(0.0f64..1.5);
    let mut logs = vec![0.0f64; grid.num_cubes()];
    for c in 1..logs.len() {
        let step = if rng.gen_bool(0.5) { sigma } else { -sigma };
        logs[c] = logs[(c - 1) / 2] + step;
    }
    let first = grid.num_leaves() - 1;
    LeafFn::weight(logs[first..].iter().map(|l| l.exp()).collect()).unwrap()
}

/// Nonnegative, zero on roughly a fifth of the leaves.
pub fn function(rng: &mut ChaCha8Rng, grid: &Grid) -> LeafFn {
    let v = (0..grid.num_leaves())
        .map(|_| {
            if rng.gen_bool(0.2) {
                0.0
            } else {
                rng.gen_range(-3.0f64..3.0).exp()
            }
        })
        .collect();
    LeafFn::new(v).unwrap()
}

/// Nonnegative cube sequence with positive root.
pub fn carleson(rng: &mut ChaCha8Rng, grid: &Grid) -> CubeSeq {
    let density = rng.gen_range(0.05f64..1.0);
    let mut v: Vec<f64> = (0..grid.num_cubes())
        .map(|_| {
            if rng.gen_bool(density) {
                rng.gen_range(-3.0f64..3.0).exp()
            } else {
                0.0
            }
        })
        .collect();
    v[0] = rng.gen_range(0.1f64..2.0);
    CubeSeq::new(grid, v).unwrap()
}

pub fn close(a: f64, b: f64, rel: f64) -> bool {
    a == b || (a - b).abs() <= rel * a.abs().max(b.abs())
}
