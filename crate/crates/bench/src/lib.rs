//! Fixed inputs shared by the benchmarks.

use qmetric::generate::{grid, tree};
use qmetric::{GeneratorSpec, MeasuredSpace, ModulusProblem, WeightedGraph};

/// Seeded Euclidean sample of `n` points in the square.
pub fn plane_sample(n: usize) -> MeasuredSpace {
    GeneratorSpec::EuclideanSample { n, dim: 2 }
        .generate(1)
        .and_then(|g| g.into_space())
        .expect("valid generator")
}

/// Left-to-right crossing of the `n x n` grid.
pub fn grid_crossing(n: usize, q: f64) -> ModulusProblem {
    let g = grid(n).expect("valid grid");
    let left = g.boundary("left").expect("left side").to_vec();
    let right = g.boundary("right").expect("right side").to_vec();
    ModulusProblem::new(g, &left, &right, q, None).expect("valid problem")
}

pub fn binary_tree(depth: usize) -> WeightedGraph {
    tree(depth, 2, 1.0).expect("valid tree")
}
