//! Gromov products on weighted graphs and the boundary quasimetrics built
//! from them.
//!
//! Boundary points are stood in for by designated vertices (for example the
//! leaves of a tree), and products with boundary arguments use those
//! vertices directly.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::graph::WeightedGraph;
use crate::space::{
    ahlfors_fit, quasimetric_constant, scale_window, AhlforsFit, FitOptions, MeasuredSpace,
    PointId, QuasimetricSpace, ScaleWindow,
};
use crate::transforms::{chain_metrize, flatten, ChainMetric};

/// Exponent agreement required between the two sides of the duality check.
pub const DUALITY_Q_TOL: f64 = 0.15;

#[inline]
fn product(g: &WeightedGraph, x: usize, y: usize, w: usize) -> f64 {
    0.5 * (g.d(x, w) + g.d(y, w) - g.d(x, y))
}

/// `(x|y)_w = (d(x,w) + d(y,w) - d(x,y)) / 2`.
pub fn gromov_product(g: &WeightedGraph, x: &str, y: &str, w: &str) -> Result<f64> {
    let (x, y, w) = (g.index_of(x)?, g.index_of(y)?, g.index_of(w)?);
    g.require_connected()?;
    Ok(product(g, x, y, w))
}

/// Four-point constant at one base point over a vertex subset.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct DeltaAt {
    pub base: PointId,
    pub delta: f64,
    /// `(x, y, z)` with `min((x|z), (z|y)) - (x|y) = delta`.
    pub witness: Option<[PointId; 3]>,
}

/// Smallest `delta` with `(x|y)_w >= min((x|z)_w, (z|y)_w) - delta` for all
/// `x, y, z` in `members`.
pub fn delta_at(g: &WeightedGraph, members: &[usize], w: usize) -> Result<DeltaAt> {
    g.require_connected()?;
    let m = members.len();
    let mut p = vec![0.0; m * m];
    for (i, &x) in members.iter().enumerate() {
        for (j, &y) in members.iter().enumerate() {
            p[i * m + j] = product(g, x, y, w);
        }
    }
    let mut delta = 0.0;
    let mut witness = None;
    for i in 0..m {
        let pi = &p[i * m..(i + 1) * m];
        for j in (i + 1)..m {
            let pj = &p[j * m..(j + 1) * m];
            let mut best = f64::NEG_INFINITY;
            let mut arg = 0;
            for k in 0..m {
                let v = pi[k].min(pj[k]);
                if v > best {
                    best = v;
                    arg = k;
                }
            }
            let excess = best - pi[j];
            if excess > delta {
                delta = excess;
                witness = Some([i, j, arg]);
            }
        }
    }
    Ok(DeltaAt {
        base: g.vertex(w).clone(),
        delta,
        witness: witness.map(|t| t.map(|i| g.vertex(members[i]).clone())),
    })
}

/// Hyperbolicity at the graph's base point with an optional scan over other
/// base points.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct DeltaReport {
    pub delta: f64,
    pub at_base: DeltaAt,
    pub alternatives: Vec<DeltaAt>,
    pub max_alternative: Option<f64>,
    /// Max over sampled `o'` and vertex pairs of
    /// `|(x|y)_o - (x|y)_{o'}| - d(o, o')`.
    pub base_change_excess: Option<f64>,
}

/// Exhaustive four-point scan over all vertices at the base point, plus the
/// same scan at up to `alternatives` seeded other base points.
pub fn delta_hyperbolicity(g: &WeightedGraph, alternatives: usize, seed: u64) -> Result<DeltaReport> {
    let all: Vec<usize> = (0..g.len()).collect();
    let w = g.base();
    let at_base = delta_at(g, &all, w)?;
    let mut others: Vec<usize> = all.iter().copied().filter(|&v| v != w).collect();
    others.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    others.truncate(alternatives);
    others.sort_unstable();
    let mut alts = Vec::new();
    let mut excess: Option<f64> = None;
    for &o in &others {
        alts.push(delta_at(g, &all, o)?);
        let doo = g.d(w, o);
        for x in 0..g.len() {
            for y in x..g.len() {
                let e = (product(g, x, y, w) - product(g, x, y, o)).abs() - doo;
                excess = Some(excess.map_or(e, |c| c.max(e)));
            }
        }
    }
    let max_alternative = alts.iter().map(|a| a.delta).reduce(f64::max);
    Ok(DeltaReport {
        delta: at_base.delta,
        at_base,
        alternatives: alts,
        max_alternative,
        base_change_excess: excess,
    })
}

/// Busemann function of a boundary vertex, `b(x) = (xi|w)_x - (xi|x)_w`,
/// which for a vertex `xi` equals `d(xi,x) - d(xi,w)`.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Busemann {
    pub xi: PointId,
    pub base: PointId,
    pub values: Vec<f64>,
}

pub fn busemann(g: &WeightedGraph, xi: &str, w: &str) -> Result<Busemann> {
    let (xi_i, w_i) = (g.index_of(xi)?, g.index_of(w)?);
    if !g.boundary_sets().values().any(|s| s.contains(&xi_i)) {
        return Err(Error::InvalidArgument(format!(
            "`{xi}` is not in any boundary set"
        )));
    }
    g.require_connected()?;
    let values = (0..g.len())
        .map(|x| product(g, xi_i, w_i, x) - product(g, xi_i, x, w_i))
        .collect();
    Ok(Busemann {
        xi: g.vertex(xi_i).clone(),
        base: g.vertex(w_i).clone(),
        values,
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Flavor {
    Bourdon,
    Hamenstadt,
}

/// Exponentiated Gromov products on a boundary set and their chain metric.
#[derive(Clone, Debug, Serialize)]
pub struct BoundaryQuasimetric {
    pub flavor: Flavor,
    pub epsilon: f64,
    pub base: PointId,
    pub omega: Option<PointId>,
    #[serde(skip)]
    pub table: QuasimetricSpace,
    pub chain: ChainMetric,
    pub k: f64,
    /// Four-point constant of the boundary vertices together with the base.
    pub delta: f64,
    pub in_range: bool,
    pub warnings: Vec<String>,
    /// Max over pairs of `|Busemann form - product form|` of the based
    /// product (Hamenstädt only).
    pub form_difference: Option<f64>,
}

fn boundary_members(g: &WeightedGraph, set: &str) -> Result<Vec<usize>> {
    let members = g.boundary(set)?.to_vec();
    if members.len() < 2 {
        return Err(Error::InvalidArgument(format!(
            "boundary set `{set}` needs at least 2 vertices"
        )));
    }
    Ok(members)
}

fn check_epsilon(epsilon: f64) -> Result<()> {
    if !(epsilon > 0.0 && epsilon.is_finite()) {
        return Err(Error::InvalidArgument(format!(
            "epsilon must be positive, got {epsilon}"
        )));
    }
    Ok(())
}

fn finish(
    flavor: Flavor,
    g: &WeightedGraph,
    epsilon: f64,
    omega: Option<usize>,
    table: QuasimetricSpace,
    delta: f64,
    in_range: bool,
    mut warnings: Vec<String>,
    form_difference: Option<f64>,
) -> Result<BoundaryQuasimetric> {
    let k = quasimetric_constant(&table)?;
    let chain = chain_metrize(&table)?;
    if in_range && k <= std::f64::consts::SQRT_2 && !(chain.upper_ok && chain.half_sandwich) {
        return Err(Error::InvariantViolation(format!(
            "rho/2 <= d <= rho fails with K = {k}, min d/rho = {}",
            chain.min_ratio
        )));
    }
    if k > std::f64::consts::SQRT_2 {
        warnings.push(format!(
            "K = {k} exceeds sqrt 2; the half sandwich is reported, not asserted"
        ));
    }
    Ok(BoundaryQuasimetric {
        flavor,
        epsilon,
        base: g.vertex(g.base()).clone(),
        omega: omega.map(|o| g.vertex(o).clone()),
        table,
        chain,
        k,
        delta,
        in_range,
        warnings,
        form_difference,
    })
}

/// `rho(xi, zeta) = exp(-eps (xi|zeta)_w)` on a boundary set, based at the
/// graph's base point, with its chain metric.
pub fn bourdon(g: &WeightedGraph, set: &str, epsilon: f64) -> Result<BoundaryQuasimetric> {
    check_epsilon(epsilon)?;
    let members = boundary_members(g, set)?;
    let w = g.base();
    let mut scan = members.clone();
    if !scan.contains(&w) {
        scan.push(w);
    }
    let delta = delta_at(g, &scan, w)?.delta;
    let limit = if delta > 0.0 { 1f64.min(1.0 / (5.0 * delta)) } else { 1.0 };
    let in_range = epsilon < limit;
    let mut warnings = Vec::new();
    if !in_range {
        warnings.push(format!(
            "epsilon = {epsilon} is outside (0, min(1, 1/(5 delta))) = (0, {limit})"
        ));
    }
    let ids = members.iter().map(|&v| g.vertex(v).clone()).collect();
    let table = QuasimetricSpace::with_ids_fn(ids, |a, b| {
        (-epsilon * product(g, members[a], members[b], w)).exp()
    })?;
    finish(Flavor::Bourdon, g, epsilon, None, table, delta, in_range, warnings, None)
}

/// `rho(xi, eta) = exp(-eps [(xi|eta)_w - (xi|omega)_w - (eta|omega)_w])` on
/// the boundary set without `omega`.
pub fn hamenstadt(g: &WeightedGraph, set: &str, omega: &str, epsilon: f64) -> Result<BoundaryQuasimetric> {
    check_epsilon(epsilon)?;
    let members = boundary_members(g, set)?;
    let o = g.index_of(omega)?;
    if !members.contains(&o) {
        return Err(Error::InvalidArgument(format!(
            "`{omega}` is not in boundary set `{set}`"
        )));
    }
    let w = g.base();
    let mut scan = members.clone();
    if !scan.contains(&w) {
        scan.push(w);
    }
    let delta = delta_at(g, &scan, w)?.delta;
    let in_range = (22.0 * epsilon * delta).exp() <= 2.0;
    let mut warnings = Vec::new();
    if !in_range {
        warnings.push(format!(
            "exp(22 eps delta) = {} exceeds 2",
            (22.0 * epsilon * delta).exp()
        ));
    }
    let rest: Vec<usize> = members.iter().copied().filter(|&v| v != o).collect();
    if rest.len() < 2 {
        return Err(Error::InvalidArgument(format!(
            "boundary set `{set}` needs at least 2 vertices besides `{omega}`"
        )));
    }
    let based = |x: usize, y: usize| product(g, x, y, w) - product(g, x, o, w) - product(g, y, o, w);
    // Busemann form with b = b_{omega, w}.
    let b = |x: usize| g.d(o, x) - g.d(o, w);
    let mut diff: f64 = 0.0;
    for (i, &x) in rest.iter().enumerate() {
        for &y in &rest[i + 1..] {
            let via_b = 0.5 * (b(x) + b(y) - g.d(x, y));
            diff = diff.max((via_b - based(x, y)).abs());
        }
    }
    let ids = rest.iter().map(|&v| g.vertex(v).clone()).collect();
    let table = QuasimetricSpace::with_ids_fn(ids, |a, c| (-epsilon * based(rest[a], rest[c])).exp())?;
    finish(Flavor::Hamenstadt, g, epsilon, Some(o), table, delta, in_range, warnings, Some(diff))
}

/// Max relative deviation from `rho_H(x,y) rho_B(x,omega) rho_B(y,omega) = rho_B(x,y)`.
pub fn flattening_identity_error(b: &BoundaryQuasimetric, h: &BoundaryQuasimetric) -> Result<f64> {
    let omega = h
        .omega
        .as_ref()
        .ok_or_else(|| Error::InvalidArgument("second table must be a Hamenstädt table".into()))?;
    let bt = &b.table;
    let o = bt.index_of(omega.as_str())?;
    let ht = &h.table;
    let mut err: f64 = 0.0;
    for i in 0..ht.len() {
        let bi = bt.index_of(ht.id(i).as_str())?;
        for j in (i + 1)..ht.len() {
            let bj = bt.index_of(ht.id(j).as_str())?;
            let lhs = ht.d(i, j) * bt.d(bi, o) * bt.d(bj, o);
            let rhs = bt.d(bi, bj);
            err = err.max((lhs - rhs).abs() / rhs);
        }
    }
    Ok(err)
}

/// Exponent fits on both sides of the boundary duality.
#[derive(Clone, Debug, Serialize)]
pub struct DualityReport {
    pub epsilon: f64,
    pub omega: PointId,
    pub bourdon_fit: AhlforsFit,
    pub hamenstadt_fit: AhlforsFit,
    pub difference: f64,
    pub agree: bool,
    /// Relative deviation between the flattened Bourdon table and the
    /// directly computed Hamenstädt table.
    pub identity_error: f64,
}

/// Fits the Bourdon boundary with equal masses and its flattening at `omega`
/// (which carries the flattened measure) on their own scale windows.
pub fn regularity_duality_check(
    g: &WeightedGraph,
    set: &str,
    omega: &str,
    epsilon: f64,
    window: ScaleWindow,
    fit: FitOptions,
) -> Result<DualityReport> {
    let b = bourdon(g, set, epsilon)?;
    let h = hamenstadt(g, set, omega, epsilon)?;
    let bm = MeasuredSpace::uniform(b.table.clone());
    let hm = flatten(&bm, omega)?;
    let mut identity_error: f64 = 0.0;
    for i in 0..hm.len() {
        let hi = h.table.index_of(hm.space().id(i).as_str())?;
        for j in (i + 1)..hm.len() {
            let hj = h.table.index_of(hm.space().id(j).as_str())?;
            let (x, y) = (hm.space().d(i, j), h.table.d(hi, hj));
            identity_error = identity_error.max((x - y).abs() / y);
        }
    }
    let bourdon_fit = ahlfors_fit(&bm, &scale_window(&bm, window)?, fit)?;
    let hamenstadt_fit = ahlfors_fit(&hm, &scale_window(&hm, window)?, fit)?;
    let difference = (bourdon_fit.q - hamenstadt_fit.q).abs();
    Ok(DualityReport {
        epsilon,
        omega: h.omega.clone().expect("hamenstadt sets omega"),
        bourdon_fit,
        hamenstadt_fit,
        difference,
        agree: difference <= DUALITY_Q_TOL,
        identity_error,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::collections::BTreeMap;

    /// Binary tree in heap order with unit edges; leaves form the boundary.
    fn binary_tree(depth: u32) -> WeightedGraph {
        let n = (1usize << (depth + 1)) - 1;
        let edges: Vec<_> = (1..n).map(|v| ((v - 1) / 2, v, 1.0)).collect();
        let first_leaf = (1usize << depth) - 1;
        WeightedGraph::from_edges(n, &edges)
            .unwrap()
            .with_boundary("leaves", (first_leaf..n).collect())
    }

    fn lca_depth(mut a: usize, mut b: usize) -> u32 {
        while a != b {
            if a > b {
                a = (a - 1) / 2;
            } else {
                b = (b - 1) / 2;
            }
        }
        (usize::BITS - (a + 1).leading_zeros()) - 1
    }

    fn cycle(n: usize) -> WeightedGraph {
        let edges: Vec<_> = (0..n).map(|i| (i, (i + 1) % n, 1.0)).collect();
        WeightedGraph::from_edges(n, &edges).unwrap()
    }

    fn path(n: usize) -> WeightedGraph {
        let edges: Vec<_> = (0..n - 1).map(|i| (i, i + 1, 1.0)).collect();
        WeightedGraph::from_edges(n, &edges).unwrap()
    }

    /// Four-point excess straight from the definition, all triples.
    fn delta_oracle(g: &WeightedGraph) -> f64 {
        let n = g.len();
        let w = g.base();
        let mut d: f64 = 0.0;
        for x in 0..n {
            for y in 0..n {
                for z in 0..n {
                    let lhs = product(g, x, y, w);
                    d = d.max(product(g, x, z, w).min(product(g, z, y, w)) - lhs);
                }
            }
        }
        d
    }

    #[test]
    fn product_examples() {
        let star = WeightedGraph::from_edges(4, &[(0, 1, 1.0), (0, 2, 1.0), (0, 3, 1.0)]).unwrap();
        assert_eq!(gromov_product(&star, "1", "2", "0").unwrap(), 0.0);
        let fork = WeightedGraph::from_edges(4, &[(0, 1, 1.0), (1, 2, 1.0), (1, 3, 1.0)]).unwrap();
        assert_eq!(gromov_product(&fork, "2", "3", "0").unwrap(), 1.0);
        assert_eq!(gromov_product(&fork, "2", "2", "0").unwrap(), 2.0);
        let split = WeightedGraph::from_edges(3, &[(0, 1, 1.0)]).unwrap();
        assert!(gromov_product(&split, "0", "1", "2").is_err());
    }

    #[test]
    fn trees_have_zero_delta() {
        let g = binary_tree(4);
        let r = delta_hyperbolicity(&g, 3, 1).unwrap();
        assert_eq!(r.delta, 0.0);
        assert_eq!(r.max_alternative, Some(0.0));
        assert!(r.base_change_excess.unwrap() <= 1e-12);
        assert_eq!(delta_hyperbolicity(&path(2), 0, 0).unwrap().delta, 0.0);
    }

    #[test]
    fn cycles_have_delta_m() {
        for m in 1..=4 {
            let g = cycle(4 * m);
            let d = delta_hyperbolicity(&g, 0, 0).unwrap().delta;
            assert_eq!(d, m as f64);
            assert_eq!(d, delta_oracle(&g));
        }
    }

    #[test]
    fn chord_raises_delta() {
        let n = 24;
        let mut edges: Vec<_> = (0..n - 1).map(|i| (i, i + 1, 1.0)).collect();
        assert_eq!(delta_oracle(&WeightedGraph::from_edges(n, &edges).unwrap()), 0.0);
        edges.push((4, 16, 1.0));
        let g = WeightedGraph::from_edges(n, &edges).unwrap();
        let d = delta_hyperbolicity(&g, 0, 0).unwrap().delta;
        assert!(d > 0.0);
        assert_eq!(d, delta_oracle(&g));
    }

    #[test]
    fn busemann_on_a_path() {
        let g = path(9).with_boundary("end", vec![8]).with_base(3);
        let b = busemann(&g, "8", "3").unwrap();
        assert_eq!(b.values[3], 0.0);
        for t in 0..=5 {
            assert_eq!(b.values[3 + t], -(t as f64));
        }
        for t in 0..=3 {
            assert_eq!(b.values[3 - t], t as f64);
        }
        assert!(busemann(&g, "2", "3").is_err());
    }

    #[test]
    fn bourdon_on_tree_is_lca_exponential() {
        let depth = 5;
        let g = binary_tree(depth);
        let eps = 0.7;
        let b = bourdon(&g, "leaves", eps).unwrap();
        let leaves = g.boundary("leaves").unwrap();
        for (i, &x) in leaves.iter().enumerate() {
            assert_eq!(b.table.d(i, i), 0.0);
            for (j, &y) in leaves.iter().enumerate() {
                if i != j {
                    let expect = (-eps * lca_depth(x, y) as f64).exp();
                    assert!((b.table.d(i, j) - expect).abs() <= 1e-15);
                }
            }
        }
        assert_eq!(b.k, 1.0);
        assert!(b.in_range);
        assert!(b.chain.half_sandwich && b.chain.upper_ok);
        // Ultrametric: rho(x,z) <= max(rho(x,y), rho(y,z)) exactly.
        let t = &b.table;
        for x in 0..t.len() {
            for y in 0..t.len() {
                for z in 0..t.len() {
                    assert!(t.d(x, z) <= t.d(x, y).max(t.d(y, z)));
                }
            }
        }
    }

    #[test]
    fn hamenstadt_matches_lca_arithmetic_and_flattening() {
        let depth = 5;
        let g = binary_tree(depth);
        let leaves = g.boundary("leaves").unwrap().to_vec();
        let omega = leaves[3];
        let eps = 0.5;
        let h = hamenstadt(&g, "leaves", &omega.to_string(), eps).unwrap();
        let b = bourdon(&g, "leaves", eps).unwrap();
        let rest: Vec<usize> = leaves.iter().copied().filter(|&v| v != omega).collect();
        for (i, &x) in rest.iter().enumerate() {
            for (j, &y) in rest.iter().enumerate() {
                if i != j {
                    let e = lca_depth(x, y) as f64 - lca_depth(x, omega) as f64 - lca_depth(y, omega) as f64;
                    let expect = (-eps * e).exp();
                    assert!((h.table.d(i, j) - expect).abs() <= 1e-12 * expect);
                }
            }
        }
        assert_eq!(h.form_difference, Some(0.0));
        assert!(flattening_identity_error(&b, &h).unwrap() <= 1e-12);
        assert!(hamenstadt(&g, "leaves", "0", eps).is_err());
    }

    #[test]
    fn busemann_and_product_forms_agree_on_paths_and_cycles() {
        let g = path(10).with_boundary("ends", vec![0, 4, 9]).with_base(2);
        let h = hamenstadt(&g, "ends", "9", 0.3).unwrap();
        assert!(h.form_difference.unwrap() <= 1e-12);
        let c = cycle(12).with_boundary("all", (0..12).collect()).with_base(0);
        let h = hamenstadt(&c, "all", "6", 0.02).unwrap();
        assert!(h.form_difference.unwrap() <= 1e-12);
    }

    #[test]
    fn warns_outside_range() {
        let c = cycle(16).with_boundary("all", (0..16).collect());
        let b = bourdon(&c, "all", 0.9).unwrap();
        assert!(!b.in_range);
        assert!(!b.warnings.is_empty());
        let small = bourdon(&c, "all", 0.01).unwrap();
        assert!(small.in_range);
    }

    #[test]
    fn rejects_small_boundary() {
        let g = path(3).with_boundary("one", vec![2]);
        assert!(bourdon(&g, "one", 0.5).is_err());
        let mut sets = BTreeMap::new();
        sets.insert("x".to_string(), vec![PointId::from("0")]);
        assert!(WeightedGraph::new(vec!["0".into()], vec![], sets, "0".into()).is_ok());
    }

    #[test]
    fn duality_on_depth_eight_tree() {
        let g = binary_tree(8);
        let omega = g.boundary("leaves").unwrap()[0].to_string();
        let r = regularity_duality_check(
            &g,
            "leaves",
            &omega,
            std::f64::consts::LN_2,
            ScaleWindow::default(),
            FitOptions { min_members: 8 },
        )
        .unwrap();
        assert!(r.identity_error <= 1e-12);
        assert!((r.bourdon_fit.q - 1.0).abs() <= 0.1, "{}", r.bourdon_fit.q);
        assert!(r.agree, "{r:?}");
    }
}
