//! Seeded generators for example spaces and graphs.

use std::collections::BTreeMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::WeightedGraph;
use crate::space::{MeasuredSpace, PointId, QuasimetricSpace};

fn one() -> usize {
    1
}

fn two() -> usize {
    2
}

fn ten() -> usize {
    10
}

fn unit() -> f64 {
    1.0
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Masses {
    #[default]
    Uniform,
    /// Mass `2^-j` at the point `2^-j`, and `2^-k` at 0.
    Geometric,
}

/// What to generate. Random kinds sample points uniformly from the unit cube.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum GeneratorSpec {
    EuclideanSample {
        n: usize,
        #[serde(default = "one")]
        dim: usize,
    },
    /// Euclidean sample with distances raised to `alpha`; the same seed gives
    /// the same points as `euclidean_sample`.
    Snowflake {
        n: usize,
        #[serde(default = "one")]
        dim: usize,
        alpha: f64,
    },
    /// `rho(x, y) = sum_i |x_i - y_i|^{alpha_i}` on a sample of the cube of
    /// dimension `alphas.len()`.
    Nonisotropic { n: usize, alphas: Vec<f64> },
    /// `{2^-j : 0 <= j <= k} ∪ {0}` on the line.
    GeometricSet {
        #[serde(default = "ten")]
        k: usize,
        #[serde(default)]
        masses: Masses,
    },
    /// Rooted tree with unit edges; boundary set "leaves", base at the root.
    Tree {
        depth: usize,
        #[serde(default = "two")]
        branching: usize,
        #[serde(default = "unit")]
        edge_length: f64,
    },
    /// Cycle graph on `n` vertices; boundary set "all", base 0.
    Cycle { n: usize },
    /// `n x n` grid, vertex `row * n + col`; boundary sets "left", "right",
    /// "top", "bottom" (rows grow downward).
    Grid { n: usize },
    /// Binary tree whose levels are additionally joined into paths, a
    /// combinatorial model of a hyperbolic half-plane; boundary set
    /// "leaves" (the deepest level), base at the root.
    HyperbolicPatch { depth: usize },
}

#[derive(Clone, Debug, PartialEq)]
pub enum Generated {
    Space(MeasuredSpace),
    Graph(WeightedGraph),
}

impl Generated {
    pub fn into_space(self) -> Result<MeasuredSpace> {
        match self {
            Generated::Space(s) => Ok(s),
            Generated::Graph(_) => Err(Error::InvalidArgument("generator produced a graph".into())),
        }
    }

    pub fn into_graph(self) -> Result<WeightedGraph> {
        match self {
            Generated::Graph(g) => Ok(g),
            Generated::Space(_) => Err(Error::InvalidArgument("generator produced a space".into())),
        }
    }
}

fn invalid(msg: impl Into<String>) -> Error {
    Error::InvalidArgument(msg.into())
}

fn check_n(n: usize) -> Result<()> {
    if n < 2 {
        return Err(invalid(format!("n must be at least 2, got {n}")));
    }
    Ok(())
}

fn sample(n: usize, dim: usize, seed: u64) -> Vec<Vec<f64>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n)
        .map(|_| (0..dim).map(|_| rng.gen::<f64>()).collect())
        .collect()
}

fn euclid(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt()
}

impl GeneratorSpec {
    /// Short name such as `snowflake(alpha=0.5,dim=1,n=128)`.
    pub fn label(&self) -> String {
        let v = serde_json::to_value(self).expect("serializable spec");
        let obj = v.as_object().expect("tagged spec");
        let kind = obj["kind"].as_str().unwrap_or("unknown");
        let params: Vec<String> = obj
            .iter()
            .filter(|(k, _)| k.as_str() != "kind")
            .map(|(k, v)| match v.as_str() {
                Some(s) => format!("{k}={s}"),
                None => format!("{k}={v}"),
            })
            .collect();
        format!("{kind}({})", params.join(","))
    }

    pub fn validate(&self) -> Result<()> {
        match self {
            GeneratorSpec::EuclideanSample { n, dim } => {
                check_n(*n)?;
                if *dim == 0 {
                    return Err(invalid("dim must be positive"));
                }
            }
            GeneratorSpec::Snowflake { n, dim, alpha } => {
                check_n(*n)?;
                if *dim == 0 {
                    return Err(invalid("dim must be positive"));
                }
                if !(*alpha > 0.0 && *alpha <= 1.0) {
                    return Err(invalid(format!("snowflake exponent must lie in (0, 1], got {alpha}")));
                }
            }
            GeneratorSpec::Nonisotropic { n, alphas } => {
                check_n(*n)?;
                if alphas.is_empty() || alphas.iter().any(|a| !(*a > 0.0 && a.is_finite())) {
                    return Err(invalid("exponents must be positive and nonempty"));
                }
            }
            GeneratorSpec::GeometricSet { k, .. } => {
                if *k > 60 {
                    return Err(invalid("k above 60 underflows distinct distances"));
                }
            }
            GeneratorSpec::Tree { depth, branching, edge_length } => {
                if *depth == 0 || *branching < 2 {
                    return Err(invalid("tree needs depth >= 1 and branching >= 2"));
                }
                if !(*edge_length > 0.0 && edge_length.is_finite()) {
                    return Err(invalid("edge length must be positive"));
                }
                if (*branching as f64).powi(*depth as i32) > 1e6 {
                    return Err(invalid("tree has more than 10^6 leaves"));
                }
            }
            GeneratorSpec::Cycle { n } => {
                if *n < 3 {
                    return Err(invalid("cycle needs n >= 3"));
                }
            }
            GeneratorSpec::Grid { n } => check_n(*n)?,
            GeneratorSpec::HyperbolicPatch { depth } => {
                if *depth == 0 || *depth > 16 {
                    return Err(invalid("hyperbolic patch depth must lie in 1..=16"));
                }
            }
        }
        Ok(())
    }

    /// Deterministic for a fixed seed; kinds without randomness ignore it.
    pub fn generate(&self, seed: u64) -> Result<Generated> {
        self.validate()?;
        Ok(match self {
            GeneratorSpec::EuclideanSample { n, dim } => {
                let pts = sample(*n, *dim, seed);
                space(QuasimetricSpace::from_fn(*n, |i, j| euclid(&pts[i], &pts[j]))?)
            }
            GeneratorSpec::Snowflake { n, dim, alpha } => {
                let pts = sample(*n, *dim, seed);
                let a = *alpha;
                space(QuasimetricSpace::from_fn(*n, |i, j| {
                    let d = euclid(&pts[i], &pts[j]);
                    if a == 1.0 {
                        d
                    } else {
                        d.powf(a)
                    }
                })?)
            }
            GeneratorSpec::Nonisotropic { n, alphas } => {
                let pts = sample(*n, alphas.len(), seed);
                space(QuasimetricSpace::from_fn(*n, |i, j| {
                    alphas
                        .iter()
                        .enumerate()
                        .map(|(c, a)| (pts[i][c] - pts[j][c]).abs().powf(*a))
                        .sum()
                })?)
            }
            GeneratorSpec::GeometricSet { k, masses } => {
                let mut xs: Vec<f64> = (0..=*k).map(|j| 0.5f64.powi(j as i32)).collect();
                xs.push(0.0);
                let s = QuasimetricSpace::from_fn(xs.len(), |i, j| (xs[i] - xs[j]).abs())?;
                match masses {
                    Masses::Uniform => space(s),
                    Masses::Geometric => {
                        let mut m: Vec<f64> = xs.clone();
                        *m.last_mut().expect("nonempty") = 0.5f64.powi(*k as i32);
                        Generated::Space(MeasuredSpace::new(s, m)?)
                    }
                }
            }
            GeneratorSpec::Tree { depth, branching, edge_length } => {
                Generated::Graph(tree(*depth, *branching, *edge_length)?)
            }
            GeneratorSpec::Cycle { n } => {
                let edges: Vec<_> = (0..*n).map(|i| (i, (i + 1) % n, 1.0)).collect();
                Generated::Graph(WeightedGraph::from_edges(*n, &edges)?.with_boundary("all", (0..*n).collect()))
            }
            GeneratorSpec::Grid { n } => Generated::Graph(grid(*n)?),
            GeneratorSpec::HyperbolicPatch { depth } => Generated::Graph(hyperbolic_patch(*depth)?),
        })
    }
}

fn space(s: QuasimetricSpace) -> Generated {
    Generated::Space(MeasuredSpace::uniform(s))
}

/// Vertices in breadth-first order from the root 0; the children of `v` are
/// `b v + 1 ..= b v + b`.
pub fn tree(depth: usize, branching: usize, edge_length: f64) -> Result<WeightedGraph> {
    let level_start = |l: usize| (branching.pow(l as u32) - 1) / (branching - 1);
    let n = level_start(depth + 1);
    let edges: Vec<_> = (1..n).map(|v| ((v - 1) / branching, v, edge_length)).collect();
    Ok(WeightedGraph::from_edges(n, &edges)?.with_boundary("leaves", (level_start(depth)..n).collect()))
}

pub fn grid(n: usize) -> Result<WeightedGraph> {
    let mut edges = Vec::with_capacity(2 * n * n);
    for i in 0..n {
        for j in 0..n {
            if j + 1 < n {
                edges.push((i * n + j, i * n + j + 1, 1.0));
            }
            if i + 1 < n {
                edges.push((i * n + j, (i + 1) * n + j, 1.0));
            }
        }
    }
    let mut sets = BTreeMap::new();
    sets.insert("left".to_string(), (0..n).map(|i| i * n).collect::<Vec<_>>());
    sets.insert("right".to_string(), (0..n).map(|i| i * n + n - 1).collect());
    sets.insert("top".to_string(), (0..n).collect());
    sets.insert("bottom".to_string(), (0..n).map(|j| (n - 1) * n + j).collect());
    let mut g = WeightedGraph::from_edges(n * n, &edges)?;
    for (name, members) in sets {
        g = g.with_boundary(&name, members);
    }
    Ok(g)
}

pub fn hyperbolic_patch(depth: usize) -> Result<WeightedGraph> {
    let n = (1usize << (depth + 1)) - 1;
    let mut edges: Vec<_> = (1..n).map(|v| ((v - 1) / 2, v, 1.0)).collect();
    for l in 1..=depth {
        let start = (1usize << l) - 1;
        let end = (1usize << (l + 1)) - 1;
        edges.extend((start..end - 1).map(|v| (v, v + 1, 1.0)));
    }
    Ok(WeightedGraph::from_edges(n, &edges)?.with_boundary("leaves", (((1usize << depth) - 1)..n).collect()))
}

/// `m` internally disjoint paths of `k` unit edges between vertices 0 and 1.
pub fn parallel_paths(m: usize, k: usize) -> Result<WeightedGraph> {
    if m == 0 || k == 0 {
        return Err(Error::InvalidArgument("need at least one path of one edge".into()));
    }
    let mut edges = Vec::with_capacity(m * k);
    let mut next = 2;
    for _ in 0..m {
        let mut prev = 0;
        for step in 0..k {
            let v = if step + 1 == k {
                1
            } else {
                next += 1;
                next - 1
            };
            edges.push((prev, v, 1.0));
            prev = v;
        }
    }
    WeightedGraph::from_edges(next, &edges)
}

/// Ids of a vertex list, for building problems from generated graphs.
pub fn ids(g: &WeightedGraph, vs: &[usize]) -> Vec<PointId> {
    vs.iter().map(|&v| g.vertex(v).clone()).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::hyperbolic::delta_hyperbolicity;
    use crate::space::quasimetric_constant;

    #[test]
    fn snowflake_one_is_euclidean() {
        let a = GeneratorSpec::EuclideanSample { n: 20, dim: 2 }.generate(7).unwrap().into_space().unwrap();
        let b = GeneratorSpec::Snowflake { n: 20, dim: 2, alpha: 1.0 }.generate(7).unwrap().into_space().unwrap();
        assert_eq!(a.space().table(), b.space().table());
        let c = GeneratorSpec::Snowflake { n: 20, dim: 2, alpha: 0.5 }.generate(7).unwrap().into_space().unwrap();
        for (x, y) in a.space().table().iter().zip(c.space().table()) {
            assert!((x.sqrt() - y).abs() <= 1e-15 * y);
        }
    }

    #[test]
    fn nonisotropic_is_not_a_metric() {
        let spec = GeneratorSpec::Nonisotropic { n: 3, alphas: vec![1.0, 0.5] };
        let s = spec.generate(11).unwrap().into_space().unwrap();
        assert!(quasimetric_constant(s.space()).unwrap() > 1.0);
        // Each coordinate term is a metric, so the sum has K <= 2.
        let s = GeneratorSpec::Nonisotropic { n: 40, alphas: vec![1.0, 0.25] }.generate(1).unwrap().into_space().unwrap();
        let k = quasimetric_constant(s.space()).unwrap();
        assert!(k > 1.0 && k <= 2.0, "{k}");
    }

    #[test]
    fn tree_leaf_counts() {
        let g = GeneratorSpec::Tree { depth: 3, branching: 2, edge_length: 1.0 }.generate(0).unwrap().into_graph().unwrap();
        assert_eq!(g.boundary("leaves").unwrap().len(), 8);
        assert_eq!(g.len(), 15);
        let g = tree(2, 3, 1.0).unwrap();
        assert_eq!(g.boundary("leaves").unwrap().len(), 9);
        assert_eq!(g.d(0, 12), 2.0);
    }

    #[test]
    fn graph_kinds_are_connected() {
        for spec in [
            GeneratorSpec::Cycle { n: 12 },
            GeneratorSpec::Grid { n: 5 },
            GeneratorSpec::HyperbolicPatch { depth: 4 },
        ] {
            let g = spec.generate(0).unwrap().into_graph().unwrap();
            assert!(g.is_connected());
        }
        let g = grid(4).unwrap();
        assert_eq!(g.boundary("bottom").unwrap(), &[12, 13, 14, 15]);
        assert_eq!(g.d(0, 15), 6.0);
    }

    #[test]
    fn hyperbolic_patch_has_small_delta() {
        let g = hyperbolic_patch(6).unwrap();
        let d = delta_hyperbolicity(&g, 0, 0).unwrap().delta;
        assert!(d > 0.0 && d <= 3.0, "{d}");
    }

    #[test]
    fn geometric_masses() {
        let s = GeneratorSpec::GeometricSet { k: 3, masses: Masses::Geometric }.generate(0).unwrap().into_space().unwrap();
        assert_eq!(s.mass(), &[1.0, 0.5, 0.25, 0.125, 0.125]);
    }

    #[test]
    fn rejects_bad_params() {
        assert!(GeneratorSpec::EuclideanSample { n: 1, dim: 1 }.generate(0).is_err());
        assert!(GeneratorSpec::Snowflake { n: 5, dim: 1, alpha: 1.5 }.generate(0).is_err());
        assert!(GeneratorSpec::Nonisotropic { n: 5, alphas: vec![1.0, 0.0] }.generate(0).is_err());
        assert!(GeneratorSpec::Tree { depth: 0, branching: 2, edge_length: 1.0 }.generate(0).is_err());
    }

    #[test]
    fn spec_json_shape() {
        let s: GeneratorSpec = serde_json::from_str(r#"{"kind":"snowflake","n":8,"alpha":0.5}"#).unwrap();
        assert_eq!(s, GeneratorSpec::Snowflake { n: 8, dim: 1, alpha: 0.5 });
        assert!(serde_json::from_str::<GeneratorSpec>(r#"{"kind":"blob","n":8}"#).is_err());
    }

    #[test]
    fn deterministic_per_seed() {
        let spec = GeneratorSpec::EuclideanSample { n: 10, dim: 3 };
        assert_eq!(spec.generate(5).unwrap(), spec.generate(5).unwrap());
        assert_ne!(spec.generate(5).unwrap(), spec.generate(6).unwrap());
    }
}
