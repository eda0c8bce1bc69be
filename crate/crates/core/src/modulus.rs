//! Discrete Q-modulus of E–F path families on weighted graphs.
//!
//! A density `g` lives on edges and a path has `g`-length `sum g(e) len(e)`.
//! The solver works in the variables `x(e) = g(e) len(e)`, where the problem
//! reads
//!
//! ```text
//! minimize  sum_e w(e) x(e)^Q,  w(e) = measure(e) / len(e)^Q
//! subject to sum_{e in path} x(e) >= 1 for every E-F path.
//! ```
//!
//! Constraints are generated by shortest-path queries. The problem
//! restricted to the generated paths is solved by an augmented Lagrangian
//! method, and its multipliers give a lower bound that certifies the gap.

use std::collections::HashSet;

use faer::linalg::solvers::Solve;
use faer::{Mat, Side};
use serde::Serialize;

use crate::error::{Error, Result};
use crate::graph::WeightedGraph;
use crate::space::{PointId, QuasimetricSpace};

pub const DEFAULT_FEAS_TOL: f64 = 1e-6;
pub const DEFAULT_GAP_TOL: f64 = 1e-5;
pub const DEFAULT_MAX_ITER: usize = 10_000;
/// Discrepancy budget for the conformal check at 9x9 grids.
pub const CONFORMAL_BUDGET: f64 = 0.05;

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct SolverOptions {
    pub feas_tol: f64,
    pub gap_tol: f64,
    pub max_iter: usize,
}

impl Default for SolverOptions {
    fn default() -> Self {
        SolverOptions {
            feas_tol: DEFAULT_FEAS_TOL,
            gap_tol: DEFAULT_GAP_TOL,
            max_iter: DEFAULT_MAX_ITER,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ModulusProblem {
    graph: WeightedGraph,
    e: Vec<usize>,
    f: Vec<usize>,
    q: f64,
    measure: Vec<f64>,
}

impl ModulusProblem {
    /// `measure` defaults to the edge lengths.
    pub fn new(
        graph: WeightedGraph,
        e: &[usize],
        f: &[usize],
        q: f64,
        measure: Option<Vec<f64>>,
    ) -> Result<Self> {
        if !(q > 1.0 && q.is_finite()) {
            return Err(Error::InvalidArgument(format!("Q must exceed 1, got {q}")));
        }
        if e.is_empty() || f.is_empty() {
            return Err(Error::InvalidArgument("E and F must be nonempty".into()));
        }
        let n = graph.len();
        if let Some(&v) = e.iter().chain(f).find(|&&v| v >= n) {
            return Err(Error::InvalidArgument(format!("vertex index {v} out of range")));
        }
        let es: HashSet<usize> = e.iter().copied().collect();
        if let Some(&v) = f.iter().find(|v| es.contains(v)) {
            return Err(Error::InvalidArgument(format!(
                "E and F share vertex `{}`",
                graph.vertex(v)
            )));
        }
        let measure = match measure {
            Some(m) => {
                if m.len() != graph.edges().len() {
                    return Err(Error::InvalidArgument(format!(
                        "{} edge measures for {} edges",
                        m.len(),
                        graph.edges().len()
                    )));
                }
                if let Some(x) = m.iter().find(|x| !(**x > 0.0 && x.is_finite())) {
                    return Err(Error::InvalidArgument(format!("edge measure {x} is not positive")));
                }
                m
            }
            None => graph.edges().iter().map(|e| e.2).collect(),
        };
        let mut e = e.to_vec();
        let mut f = f.to_vec();
        e.sort_unstable();
        e.dedup();
        f.sort_unstable();
        f.dedup();
        Ok(ModulusProblem { graph, e, f, q, measure })
    }

    /// Same as [`ModulusProblem::new`] with vertex ids.
    pub fn from_ids(
        graph: WeightedGraph,
        e: &[PointId],
        f: &[PointId],
        q: f64,
        measure: Option<Vec<f64>>,
    ) -> Result<Self> {
        let look = |s: &[PointId]| s.iter().map(|v| graph.index_of(v.as_str())).collect::<Result<Vec<_>>>();
        let (e, f) = (look(e)?, look(f)?);
        Self::new(graph, &e, &f, q, measure)
    }

    pub fn graph(&self) -> &WeightedGraph {
        &self.graph
    }

    pub fn e(&self) -> &[usize] {
        &self.e
    }

    pub fn f(&self) -> &[usize] {
        &self.f
    }

    pub fn q(&self) -> f64 {
        self.q
    }

    pub fn measure(&self) -> &[f64] {
        &self.measure
    }

    fn weights(&self) -> Vec<f64> {
        self.graph
            .edges()
            .iter()
            .zip(&self.measure)
            .map(|(e, m)| m / e.2.powf(self.q))
            .collect()
    }

    /// Shortest E–F path under per-edge weights `x`, as `(length, edges)`.
    fn shortest(&self, x: &[f64]) -> Option<(f64, Vec<usize>)> {
        let (dist, via) = self.graph.multi_source_dijkstra(&self.e, |e| x[e].max(0.0));
        let &t = self
            .f
            .iter()
            .min_by(|a, b| dist[**a].total_cmp(&dist[**b]))?;
        if !dist[t].is_finite() {
            return None;
        }
        Some((dist[t], trace(&self.graph, &via, t)))
    }

    /// Shortest E–F length, and for every edge whose shortest E–F path
    /// through it is shorter than `bound`, that path (when simple).
    fn violated(&self, x: &[f64], bound: f64) -> (f64, Vec<Vec<usize>>) {
        let weight = |e: usize| x[e].max(0.0);
        let (de, ve) = self.graph.multi_source_dijkstra(&self.e, weight);
        let min = self.f.iter().map(|&t| de[t]).fold(f64::INFINITY, f64::min);
        if !(min < bound) {
            return (min, Vec::new());
        }
        let (df, vf) = self.graph.multi_source_dijkstra(&self.f, weight);
        let mut paths = Vec::new();
        let mut marks = vec![usize::MAX; self.graph.len()];
        for (k, &(a, b, _)) in self.graph.edges().iter().enumerate() {
            for (u, v) in [(a, b), (b, a)] {
                if de[u] + weight(k) + df[v] >= bound {
                    continue;
                }
                let mut path = Vec::new();
                let mut simple = true;
                for (start, via) in [(u, &ve), (v, &vf)] {
                    let mut t = start;
                    loop {
                        if marks[t] == k {
                            simple = false;
                            break;
                        }
                        marks[t] = k;
                        let Some(e) = via[t] else { break };
                        path.push(e);
                        let (p0, p1, _) = self.graph.edges()[e];
                        t = if p0 == t { p1 } else { p0 };
                    }
                }
                if simple {
                    path.push(k);
                    path.sort_unstable();
                    paths.push(path);
                }
                // Reset marks for the other orientation.
                marks.iter_mut().filter(|m| **m == k).for_each(|m| *m = usize::MAX);
            }
        }
        paths.sort();
        paths.dedup();
        (min, paths)
    }
}

fn trace(g: &WeightedGraph, via: &[Option<usize>], mut v: usize) -> Vec<usize> {
    let mut path = Vec::new();
    while let Some(e) = via[v] {
        path.push(e);
        let (a, b, _) = g.edges()[e];
        v = if a == v { b } else { a };
    }
    path.sort_unstable();
    path
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ModulusSolution {
    /// Density per edge, in edge order.
    pub g: Vec<f64>,
    pub value: f64,
    pub dual_bound: f64,
    /// Minimum `g`-length over E–F paths at termination.
    pub shortest_violation: f64,
    pub iterations: usize,
    pub active_paths: usize,
    pub converged: bool,
    /// E and F lie in different components; the family is empty.
    pub empty_family: bool,
}

/// Lower bound for the full problem from multipliers on the active paths:
/// with `s = sum lambda_path` over paths through each edge and `x(s)` the
/// minimizer of `w x^Q - s x`, it is `sum lambda - (1 - 1/Q) sum s x(s)`.
fn dual_bound(paths: &[Vec<usize>], lambda: &[f64], w: &[f64], q: f64) -> f64 {
    let mut s = vec![0.0; w.len()];
    for (path, &l) in paths.iter().zip(lambda) {
        for &e in path {
            s[e] += l;
        }
    }
    let p = 1.0 / (q - 1.0);
    let sx: f64 = s
        .iter()
        .zip(w)
        .filter(|(s, _)| **s > 0.0)
        .map(|(&s, &w)| s * (s / (q * w)).powf(p))
        .sum();
    lambda.iter().sum::<f64>() - (1.0 - 1.0 / q) * sx
}

/// Restricted-problem tolerance while new paths keep appearing.
const EARLY_TOL: f64 = 1e-3;

/// Newton steps per inner minimization before handing back to the
/// multiplier update.
const INNER_STEPS: usize = 50;

/// The active-path subproblem, solved by an augmented Lagrangian whose
/// inner minimizations use semismooth Newton steps in the edge variables.
struct Restricted<'a> {
    q: f64,
    w: &'a [f64],
    paths: Vec<Vec<usize>>,
    /// Paths as positions among `edges`.
    locals: Vec<Vec<usize>>,
    lambda: Vec<f64>,
    /// Edges on some active path, and each edge's position among them.
    edges: Vec<usize>,
    local: Vec<Option<usize>>,
    rho: f64,
    /// `sum a a^T` over the paths flagged in `counted`, row-major over
    /// `edges`. Entries are path counts, so updates are exact.
    gram: Vec<f64>,
    gram_dim: usize,
    counted: Vec<bool>,
}

impl<'a> Restricted<'a> {
    fn new(q: f64, w: &'a [f64]) -> Self {
        Restricted {
            q,
            w,
            paths: Vec::new(),
            locals: Vec::new(),
            lambda: Vec::new(),
            edges: Vec::new(),
            local: vec![None; w.len()],
            rho: 0.0,
            gram: Vec::new(),
            gram_dim: 0,
            counted: Vec::new(),
        }
    }

    fn push(&mut self, path: Vec<usize>) {
        let mut locals = Vec::with_capacity(path.len());
        for &e in &path {
            let i = *self.local[e].get_or_insert_with(|| {
                self.edges.push(e);
                self.edges.len() - 1
            });
            locals.push(i);
        }
        self.paths.push(path);
        self.locals.push(locals);
        self.lambda.push(0.0);
        self.counted.push(false);
    }

    fn length(&self, path: &[usize], x: &[f64]) -> f64 {
        path.iter().map(|&e| x[e]).sum()
    }

    /// Shifted multipliers `lambda - rho (length - 1)`.
    fn shifted(&self, x: &[f64]) -> Vec<f64> {
        self.paths
            .iter()
            .zip(&self.lambda)
            .map(|(p, l)| l - self.rho * (self.length(p, x) - 1.0))
            .collect()
    }

    fn merit(&self, x: &[f64]) -> f64 {
        let f: f64 = self.edges.iter().map(|&e| self.w[e] * x[e].abs().powf(self.q)).sum();
        let pen: f64 = self.shifted(x).iter().map(|r| r.max(0.0).powi(2)).sum();
        f + pen / (2.0 * self.rho)
    }

    /// Brings `gram` in line with the paths whose shifted multiplier is
    /// positive.
    fn sync_gram(&mut self, r: &[f64]) {
        let n = self.edges.len();
        if self.gram_dim != n {
            self.gram = vec![0.0; n * n];
            self.gram_dim = n;
            self.counted.iter_mut().for_each(|c| *c = false);
        }
        for (k, &rv) in r.iter().enumerate() {
            let want = rv > 0.0;
            if want == self.counted[k] {
                continue;
            }
            let sign = if want { 1.0 } else { -1.0 };
            for &i in &self.locals[k] {
                for &j in &self.locals[k] {
                    self.gram[i * n + j] += sign;
                }
            }
            self.counted[k] = want;
        }
    }

    /// Minimizes the augmented Lagrangian in `x` for the current multipliers.
    /// Returns false when the step budget runs out.
    fn inner(&mut self, x: &mut [f64], steps: &mut usize, max_steps: usize) -> bool {
        let (q, n) = (self.q, self.edges.len());
        let wscale = self.edges.iter().map(|&e| self.w[e]).fold(0.0f64, f64::max);
        let mut local_steps = 0;
        loop {
            let r = self.shifted(x);
            self.sync_gram(&r);
            let mut grad = vec![0.0; n];
            for (i, &e) in self.edges.iter().enumerate() {
                grad[i] = q * self.w[e] * x[e].abs().powf(q - 1.0) * x[e].signum();
            }
            for (locals, &rv) in self.locals.iter().zip(&r) {
                if rv > 0.0 {
                    locals.iter().for_each(|&i| grad[i] -= rv);
                }
            }
            let gnorm = grad.iter().fold(0.0f64, |m, g| m.max(g.abs()));
            let gscale = self
                .edges
                .iter()
                .map(|&e| q * self.w[e] * x[e].abs().powf(q - 1.0))
                .fold(wscale * 1e-6, f64::max);
            if gnorm <= 1e-11 * gscale {
                return true;
            }
            if *steps >= max_steps {
                return false;
            }
            *steps += 1;
            local_steps += 1;
            let gram = &self.gram;
            let rho = self.rho;
            let mut h = Mat::<f64>::from_fn(n, n, |i, j| rho * gram[i * n + j]);
            for (i, &e) in self.edges.iter().enumerate() {
                // The curvature of |x|^Q is unbounded at 0 when Q < 2 and
                // vanishes there when Q > 2; both are clamped.
                let a = x[e].abs().max(1e-12);
                h[(i, i)] += q * (q - 1.0) * self.w[e] * a.powf(q - 2.0) + 1e-12 * wscale;
            }
            let rhs = Mat::<f64>::from_fn(n, 1, |i, _| -grad[i]);
            let Some(dir) = solve_spd(&h, &rhs) else {
                return true;
            };
            let slope: f64 = (0..n).map(|i| dir[i] * grad[i]).sum();
            let m0 = self.merit(x);
            if !(slope < 0.0) || local_steps >= INNER_STEPS {
                return true;
            }
            // Once the predicted decrease is near the rounding of the merit
            // value the line search cannot see it; take the full step.
            let polish = -slope <= 1e-10 * m0.abs();
            let mut t = 1.0;
            let mut trial = x.to_vec();
            loop {
                for (i, &e) in self.edges.iter().enumerate() {
                    trial[e] = x[e] + t * dir[i];
                }
                if polish || t < 1e-10 {
                    break;
                }
                let m1 = self.merit(&trial);
                if m1 <= m0 + 1e-4 * t * slope {
                    break;
                }
                t *= 0.5;
            }
            x.copy_from_slice(&trial);
            if t < 1e-10 {
                return true;
            }
        }
    }

    /// Multiplier loop until every active path has length at least
    /// `1 - tol` and complementary slackness holds to `tol`.
    fn solve(&mut self, x: &mut [f64], tol: f64, steps: &mut usize, max_steps: usize) -> bool {
        if self.rho == 0.0 {
            let mean = self.edges.iter().map(|&e| self.w[e]).sum::<f64>() / self.edges.len() as f64;
            self.rho = 1e3 * mean;
        }
        let ok = self.multipliers(x, tol, steps, max_steps);
        // Negative entries only lower path lengths; zero is never worse.
        self.edges.iter().for_each(|&e| x[e] = x[e].max(0.0));
        ok
    }

    fn multipliers(&mut self, x: &mut [f64], tol: f64, steps: &mut usize, max_steps: usize) -> bool {
        let mut prev = f64::INFINITY;
        for _ in 0..60 {
            if !self.inner(x, steps, max_steps) {
                return false;
            }
            let r = self.shifted(x);
            let mut viol: f64 = 0.0;
            let mut comp: f64 = 0.0;
            for (k, path) in self.paths.iter().enumerate() {
                let len = self.length(path, x);
                viol = viol.max(1.0 - len);
                comp = comp.max((r[k].max(0.0) * (len - 1.0)).abs());
            }
            for (l, rv) in self.lambda.iter_mut().zip(&r) {
                *l = rv.max(0.0);
            }
            let scale = self.lambda.iter().fold(0.0f64, |m, l| m.max(*l)).max(f64::MIN_POSITIVE);
            if viol <= tol && comp <= tol * scale {
                return true;
            }
            if viol > 0.25 * prev {
                self.rho *= 10.0;
            }
            prev = viol.max(0.0);
        }
        true
    }
}

/// Constraint-generation solve with the given tolerances. Stops flagged
/// nonconverged after `max_iter` Newton steps.
pub fn modulus(problem: &ModulusProblem, opts: SolverOptions) -> Result<ModulusSolution> {
    if !(opts.feas_tol > 0.0 && opts.feas_tol < 1.0 && opts.gap_tol > 0.0) {
        return Err(Error::InvalidArgument("tolerances must be positive and feas_tol < 1".into()));
    }
    let m = problem.graph.edges().len();
    let w = problem.weights();
    let q = problem.q;
    if problem.shortest(&vec![1.0; m]).is_none() {
        return Ok(ModulusSolution {
            g: vec![0.0; m],
            value: 0.0,
            dual_bound: 0.0,
            shortest_violation: f64::INFINITY,
            iterations: 0,
            active_paths: 0,
            converged: true,
            empty_family: true,
        });
    }
    let mut sub = Restricted::new(q, &w);
    let mut seen: HashSet<Vec<usize>> = HashSet::new();
    let mut x = vec![0.0; m];
    let mut steps = 0;
    // Early rounds only need to expose new paths, so they are solved
    // loosely; the tolerance tightens once no new path appears.
    let final_tol = opts.feas_tol * 0.1;
    let mut inner_tol = final_tol.max(EARLY_TOL);
    let threshold = 1.0 - opts.feas_tol;
    let (shortest, converged) = loop {
        let (shortest, paths) = problem.violated(&x, threshold);
        let mut added = false;
        for path in paths {
            if seen.insert(path.clone()) {
                // The first path starts from its single-constraint optimum.
                if sub.paths.is_empty() {
                    let p = 1.0 / (q - 1.0);
                    let c: f64 = path.iter().map(|&e| (q * w[e]).powf(-p)).sum();
                    let t = c.powf(-1.0 / p);
                    for &e in &path {
                        x[e] = (t / (q * w[e])).powf(p);
                    }
                }
                sub.push(path);
                added = true;
            }
        }
        if !added {
            if shortest >= threshold && inner_tol <= final_tol {
                let value: f64 = w.iter().zip(&x).map(|(w, x)| w * x.abs().powf(q)).sum();
                let upper = value / shortest.min(1.0).powf(q);
                let lower = dual_bound(&sub.paths, &sub.lambda, &w, q);
                if upper - lower <= opts.gap_tol * upper.max(f64::MIN_POSITIVE) {
                    break (shortest, true);
                }
            }
            if inner_tol < 1e-15 {
                break (shortest, false);
            }
            inner_tol *= 0.1;
        }
        if !sub.solve(&mut x, inner_tol, &mut steps, opts.max_iter) {
            let s = problem.shortest(&x).map_or(f64::INFINITY, |s| s.0);
            break (s, false);
        }
    };
    let value = w.iter().zip(&x).map(|(w, x)| w * x.abs().powf(q)).sum();
    let g = x
        .iter()
        .zip(problem.graph.edges())
        .map(|(x, e)| x.max(0.0) / e.2)
        .collect();
    Ok(ModulusSolution {
        g,
        value,
        dual_bound: dual_bound(&sub.paths, &sub.lambda, &w, q),
        shortest_violation: shortest,
        iterations: steps,
        active_paths: sub.paths.len(),
        converged,
        empty_family: false,
    })
}

/// All E–F paths whose interior avoids E and F, as sorted edge lists, or
/// `None` if there are more than `limit`. Every E–F path contains one of
/// these, so they carry the same constraints.
pub fn enumerate_paths(problem: &ModulusProblem, limit: usize) -> Option<Vec<Vec<usize>>> {
    let g = &problem.graph;
    let mut in_e = vec![false; g.len()];
    let mut in_f = vec![false; g.len()];
    problem.e.iter().for_each(|&v| in_e[v] = true);
    problem.f.iter().for_each(|&v| in_f[v] = true);
    let mut out = Vec::new();
    let mut on_path = vec![false; g.len()];
    let mut edges = Vec::new();

    #[allow(clippy::too_many_arguments)]
    fn dfs(
        g: &WeightedGraph,
        v: usize,
        in_e: &[bool],
        in_f: &[bool],
        on_path: &mut [bool],
        edges: &mut Vec<usize>,
        out: &mut Vec<Vec<usize>>,
        limit: usize,
    ) -> bool {
        for &(u, e) in g.neighbors(v) {
            if on_path[u] || in_e[u] {
                continue;
            }
            edges.push(e);
            if in_f[u] {
                let mut p = edges.clone();
                p.sort_unstable();
                out.push(p);
                if out.len() > limit {
                    return false;
                }
            } else {
                on_path[u] = true;
                let ok = dfs(g, u, in_e, in_f, on_path, edges, out, limit);
                on_path[u] = false;
                if !ok {
                    return false;
                }
            }
            edges.pop();
        }
        true
    }

    for &s in &problem.e {
        on_path[s] = true;
        if !dfs(g, s, &in_e, &in_f, &mut on_path, &mut edges, &mut out, limit) {
            return None;
        }
        on_path[s] = false;
    }
    Some(out)
}

/// Exact solve over an explicit path list: tries every subset of paths as
/// the tight set, solves its stationarity equations by Newton, and keeps
/// the subset whose multipliers are nonnegative and whose solution meets
/// every path. Exponential in the number of paths.
pub fn brute_force_modulus(problem: &ModulusProblem, paths: &[Vec<usize>]) -> Result<f64> {
    if paths.is_empty() {
        return Ok(0.0);
    }
    if paths.len() > 16 {
        return Err(Error::InvalidArgument(format!(
            "{} paths is too many to enumerate active sets",
            paths.len()
        )));
    }
    let q = problem.q;
    let p = 1.0 / (q - 1.0);
    let w = problem.weights();
    let xs = |lambda: &[f64], subset: &[usize]| -> Vec<f64> {
        let mut s = vec![0.0; w.len()];
        for (k, &j) in subset.iter().enumerate() {
            for &e in &paths[j] {
                s[e] += lambda[k];
            }
        }
        s.iter()
            .zip(&w)
            .map(|(&s, &w)| if s > 0.0 { (s / (q * w)).powf(p) } else { 0.0 })
            .collect()
    };
    let mut best: Option<f64> = None;
    let mut subsets: Vec<u32> = (1u32..(1 << paths.len())).collect();
    subsets.sort_by_key(|m| m.count_ones());
    for mask in subsets {
        let subset: Vec<usize> = (0..paths.len()).filter(|j| mask >> j & 1 == 1).collect();
        let Some(lambda) = solve_tight(&subset, paths, &w, q) else {
            continue;
        };
        if lambda.iter().any(|&l| l < -1e-12) {
            continue;
        }
        let x = xs(&lambda, &subset);
        if paths
            .iter()
            .any(|path| path.iter().map(|&e| x[e]).sum::<f64>() < 1.0 - 1e-10)
        {
            continue;
        }
        let value: f64 = w.iter().zip(&x).map(|(w, x)| w * x.powf(q)).sum();
        best = Some(best.map_or(value, |b: f64| b.min(value)));
    }
    best.ok_or_else(|| Error::InvariantViolation("no KKT point found among active sets".into()))
}

/// Newton on `sum_{e in path j} x_e(lambda) = 1` for `j` in `subset`.
fn solve_tight(subset: &[usize], paths: &[Vec<usize>], w: &[f64], q: f64) -> Option<Vec<f64>> {
    let k = subset.len();
    let p = 1.0 / (q - 1.0);
    let mut lambda: Vec<f64> = subset
        .iter()
        .map(|&j| {
            let c: f64 = paths[j].iter().map(|&e| (q * w[e]).powf(-p)).sum();
            c.powf(-1.0 / p) / k as f64
        })
        .collect();
    let eval = |lambda: &[f64]| -> Option<(Vec<f64>, Vec<f64>)> {
        let mut s = vec![0.0; w.len()];
        for (a, &j) in subset.iter().enumerate() {
            for &e in &paths[j] {
                s[e] += lambda[a];
            }
        }
        let mut r = vec![0.0; k];
        let mut jac = vec![0.0; k * k];
        for (a, &ja) in subset.iter().enumerate() {
            r[a] = -1.0;
            for &e in &paths[ja] {
                if s[e] <= 0.0 {
                    return None;
                }
                let x = (s[e] / (q * w[e])).powf(p);
                r[a] += x;
                let dx = p * x / s[e];
                for (b, &jb) in subset.iter().enumerate() {
                    if paths[jb].contains(&e) {
                        jac[a * k + b] += dx;
                    }
                }
            }
        }
        Some((r, jac))
    };
    for _ in 0..100 {
        let (r, jac) = eval(&lambda)?;
        let norm = r.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        if norm <= 1e-14 {
            return Some(lambda);
        }
        let step = lu_solve(jac, r)?;
        let mut t = 1.0;
        loop {
            let trial: Vec<f64> = lambda.iter().zip(&step).map(|(l, d)| l - t * d).collect();
            if let Some((r2, _)) = eval(&trial) {
                let n2 = r2.iter().fold(0.0f64, |m, v| m.max(v.abs()));
                if n2 < norm || t < 1e-6 {
                    lambda = trial;
                    break;
                }
            }
            t *= 0.5;
            if t < 1e-12 {
                return None;
            }
        }
    }
    let (r, _) = eval(&lambda)?;
    (r.iter().all(|v| v.abs() <= 1e-11)).then_some(lambda)
}

/// Cholesky solve, falling back to LU when `a` is not numerically
/// positive definite. `None` if the result is not finite.
fn solve_spd(a: &Mat<f64>, b: &Mat<f64>) -> Option<Vec<f64>> {
    let x = match a.llt(Side::Lower) {
        Ok(c) => c.solve(b),
        Err(_) => a.partial_piv_lu().solve(b),
    };
    let out: Vec<f64> = (0..x.nrows()).map(|i| x[(i, 0)]).collect();
    out.iter().all(|v| v.is_finite()).then_some(out)
}

/// LU solve of a small dense system; `None` when it is singular to working
/// precision.
fn lu_solve(a: Vec<f64>, b: Vec<f64>) -> Option<Vec<f64>> {
    let n = b.len();
    let m = Mat::<f64>::from_fn(n, n, |i, j| a[i * n + j]);
    let rhs = Mat::<f64>::from_fn(n, 1, |i, _| b[i]);
    let x = m.partial_piv_lu().solve(&rhs);
    let scale = a.iter().fold(0.0f64, |s, v| s.max(v.abs())) * b.iter().fold(0.0f64, |s, v| s.max(v.abs())).max(1.0);
    let resid = &m * &x - &rhs;
    let out: Vec<f64> = (0..n).map(|i| x[(i, 0)]).collect();
    let ok = out.iter().all(|v| v.is_finite() && v.abs() < 1e12 * (1.0 + scale))
        && (0..n).all(|i| resid[(i, 0)].abs() <= 1e-9 * scale.max(1.0));
    ok.then_some(out)
}

fn separation_by(d: impl Fn(usize, usize) -> f64, e: &[usize], f: &[usize]) -> Result<f64> {
    if e.is_empty() || f.is_empty() {
        return Err(Error::UndefinedSeparation("empty set".into()));
    }
    let diam = |s: &[usize]| {
        let mut m: f64 = 0.0;
        for (i, &a) in s.iter().enumerate() {
            for &b in &s[i + 1..] {
                m = m.max(d(a, b));
            }
        }
        m
    };
    let small = diam(e).min(diam(f));
    if small <= 0.0 {
        return Err(Error::UndefinedSeparation(
            "a set has diameter 0 (singleton)".into(),
        ));
    }
    let mut dist = f64::INFINITY;
    for &a in e {
        for &b in f {
            dist = dist.min(d(a, b));
        }
    }
    Ok(dist / small)
}

/// `dist(E, F) / min(diam E, diam F)` in a space.
pub fn relative_separation(space: &QuasimetricSpace, e: &[PointId], f: &[PointId]) -> Result<f64> {
    let look = |s: &[PointId]| s.iter().map(|v| space.index_of(v.as_str())).collect::<Result<Vec<_>>>();
    separation_by(|a, b| space.d(a, b), &look(e)?, &look(f)?)
}

/// `dist(E, F) / min(diam E, diam F)` in the shortest-path metric, infinite
/// across components.
pub fn graph_relative_separation(g: &WeightedGraph, e: &[usize], f: &[usize]) -> Result<f64> {
    separation_by(|a, b| g.d(a, b), e, f)
}

/// One `(E, F)` pair for a scan.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct PairSpec {
    pub id: String,
    pub e: Vec<usize>,
    pub f: Vec<usize>,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ScanPoint {
    pub pair_id: String,
    pub delta: f64,
    pub modulus: f64,
    pub iterations: usize,
    pub converged: bool,
    pub empty_family: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct LoewnerScan {
    pub q: f64,
    pub points: Vec<ScanPoint>,
    /// `(delta, min modulus)` per distinct delta, increasing in delta.
    pub envelope: Vec<(f64, f64)>,
}

impl LoewnerScan {
    pub fn to_csv(&self) -> String {
        let mut s = String::from("pair_id,delta,modulus,iterations,converged\n");
        for p in &self.points {
            s.push_str(&format!(
                "{},{},{},{},{}\n",
                p.pair_id, p.delta, p.modulus, p.iterations, p.converged
            ));
        }
        s
    }
}

/// Solves each pair and collects `(delta, modulus)` with the per-delta
/// lower envelope.
pub fn loewner_scan(g: &WeightedGraph, pairs: &[PairSpec], q: f64, opts: SolverOptions) -> Result<LoewnerScan> {
    let mut points = Vec::with_capacity(pairs.len());
    for pair in pairs {
        let delta = graph_relative_separation(g, &pair.e, &pair.f)?;
        let problem = ModulusProblem::new(g.clone(), &pair.e, &pair.f, q, None)?;
        let sol = modulus(&problem, opts)?;
        points.push(ScanPoint {
            pair_id: pair.id.clone(),
            delta,
            modulus: sol.value,
            iterations: sol.iterations,
            converged: sol.converged,
            empty_family: sol.empty_family,
        });
    }
    let mut sorted: Vec<(f64, f64)> = points.iter().map(|p| (p.delta, p.modulus)).collect();
    sorted.sort_by(|a, b| a.0.total_cmp(&b.0));
    let mut envelope: Vec<(f64, f64)> = Vec::new();
    for (d, m) in sorted {
        match envelope.last_mut() {
            Some(last) if (d - last.0).abs() <= 1e-9 * d.abs().max(1.0) || d == last.0 => {
                last.1 = last.1.min(m)
            }
            _ => envelope.push((d, m)),
        }
    }
    Ok(LoewnerScan { q, points, envelope })
}

/// Vertex indices of the square ring at L-infinity radius `r` around the
/// center of an `n x n` grid indexed `row * n + col`.
pub fn square_ring(n: usize, r: usize) -> Vec<usize> {
    let c = (n - 1) / 2;
    let (lo, hi) = (c - r, c + r);
    let mut out: Vec<usize> = (lo..=hi)
        .flat_map(|i| (lo..=hi).map(move |j| (i, j)))
        .filter(|&(i, j)| i == lo || i == hi || j == lo || j == hi)
        .map(|(i, j)| i * n + j)
        .collect();
    out.sort_unstable();
    out
}

/// Concentric ring pairs `(r1, r2)`, `1 <= r1 < r2`, that fit in an `n x n`
/// grid.
pub fn concentric_square_pairs(n: usize) -> Vec<PairSpec> {
    let rmax = (n - 1) / 2;
    let mut out = Vec::new();
    for r1 in 1..rmax {
        for r2 in (r1 + 1)..=rmax {
            out.push(PairSpec {
                id: format!("ring{r1}-ring{r2}"),
                e: square_ring(n, r1),
                f: square_ring(n, r2),
            });
        }
    }
    out
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ConformalReport {
    pub base: PointId,
    pub q: f64,
    pub modulus: f64,
    pub deformed_modulus: f64,
    pub discrepancy: f64,
    pub budget: f64,
    pub within_budget: bool,
    pub converged: bool,
}

/// Reweights each edge `uv` by `rho = 1/((1+d(u,a))(1+d(v,a)))`: length
/// times `rho`, measure times `rho^Q`; returns `|mod - mod_a| / mod`.
pub fn conformal_invariance_check(
    problem: &ModulusProblem,
    a: usize,
    opts: SolverOptions,
    budget: f64,
) -> Result<ConformalReport> {
    let g = problem.graph();
    if a >= g.len() {
        return Err(Error::InvalidArgument(format!("vertex index {a} out of range")));
    }
    if problem.e.contains(&a) || problem.f.contains(&a) {
        return Err(Error::InvalidArgument(format!(
            "base `{}` lies in E or F",
            g.vertex(a)
        )));
    }
    g.require_connected()?;
    let rho: Vec<f64> = g
        .edges()
        .iter()
        .map(|&(u, v, _)| 1.0 / ((1.0 + g.d(u, a)) * (1.0 + g.d(v, a))))
        .collect();
    let edges = g
        .edges()
        .iter()
        .zip(&rho)
        .map(|(&(u, v, l), r)| (g.vertex(u).clone(), g.vertex(v).clone(), l * r))
        .collect();
    let boundary = g
        .boundary_sets()
        .iter()
        .map(|(k, vs)| (k.clone(), vs.iter().map(|&v| g.vertex(v).clone()).collect()))
        .collect();
    let deformed = WeightedGraph::new(g.vertices().to_vec(), edges, boundary, g.vertex(g.base()).clone())?;
    let measure = problem
        .measure
        .iter()
        .zip(&rho)
        .map(|(m, r)| m * r.powf(problem.q))
        .collect();
    let dp = ModulusProblem::new(deformed, &problem.e, &problem.f, problem.q, Some(measure))?;
    let s0 = modulus(problem, opts)?;
    let s1 = modulus(&dp, opts)?;
    let discrepancy = if s0.value > 0.0 {
        (s0.value - s1.value).abs() / s0.value
    } else {
        (s1.value - s0.value).abs()
    };
    Ok(ConformalReport {
        base: g.vertex(a).clone(),
        q: problem.q,
        modulus: s0.value,
        deformed_modulus: s1.value,
        discrepancy,
        budget,
        within_budget: discrepancy <= budget,
        converged: s0.converged && s1.converged,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn grid(n: usize) -> WeightedGraph {
        let mut edges = Vec::new();
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
        WeightedGraph::from_edges(n * n, &edges).unwrap()
    }

    /// `m` disjoint paths of `k` unit edges from vertex 0 to vertex 1.
    fn parallel(m: usize, k: usize) -> WeightedGraph {
        let mut edges = Vec::new();
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
        WeightedGraph::from_edges(next, &edges).unwrap()
    }

    fn tight() -> SolverOptions {
        SolverOptions { feas_tol: 1e-10, gap_tol: 1e-10, max_iter: 100_000 }
    }

    #[test]
    fn single_and_parallel_paths() {
        let p = ModulusProblem::new(parallel(1, 4), &[0], &[1], 2.0, None).unwrap();
        let s = modulus(&p, SolverOptions::default()).unwrap();
        assert!((s.value - 0.25).abs() <= 1e-9);
        assert!(s.g.iter().all(|g| (g - 0.25).abs() <= 1e-9));
        let p = ModulusProblem::new(parallel(3, 4), &[0], &[1], 2.0, None).unwrap();
        let s = modulus(&p, SolverOptions::default()).unwrap();
        assert!((s.value - 0.75).abs() <= 1e-9);
        for q in [1.5, 3.0] {
            let p = ModulusProblem::new(parallel(2, 5), &[0], &[1], q, None).unwrap();
            let s = modulus(&p, tight()).unwrap();
            assert!((s.value - 2.0 * 5f64.powf(1.0 - q)).abs() <= 1e-9, "{q}");
        }
    }

    #[test]
    fn disconnected_family_is_empty() {
        let g = WeightedGraph::from_edges(4, &[(0, 1, 1.0), (2, 3, 1.0)]).unwrap();
        let s = modulus(&ModulusProblem::new(g, &[0], &[3], 2.0, None).unwrap(), SolverOptions::default()).unwrap();
        assert!(s.empty_family);
        assert_eq!(s.value, 0.0);
    }

    #[test]
    fn rejects_bad_problems() {
        let g = parallel(1, 2);
        assert!(ModulusProblem::new(g.clone(), &[0], &[1], 1.0, None).is_err());
        assert!(ModulusProblem::new(g.clone(), &[0], &[0], 2.0, None).is_err());
        assert!(ModulusProblem::new(g, &[0], &[1], 2.0, Some(vec![1.0, 0.0])).is_err());
    }

    #[test]
    fn shared_edge_closed_form() {
        // Two paths 0-2-1 and 0-2-3-1 sharing edge 0-2, Q = 2, unit weights.
        // By symmetry in the tail: x_shared = a, path 1 tail b, path 2 tails c
        // each; KKT gives the value 5/9 (checked by hand: a=2/3 x... see below).
        let g = WeightedGraph::from_edges(4, &[(0, 2, 1.0), (2, 1, 1.0), (2, 3, 1.0), (3, 1, 1.0)]).unwrap();
        let p = ModulusProblem::new(g, &[0], &[1], 2.0, None).unwrap();
        // Parallel tails of lengths 1 and 2 combine to modulus 1 + 1/2 = 3/2
        // (conductance), in series with a unit edge: 1/(1 + 2/3) = 3/5.
        let s = modulus(&p, tight()).unwrap();
        assert!((s.value - 0.6).abs() <= 1e-9, "{}", s.value);
        let paths = enumerate_paths(&p, 8).unwrap();
        assert_eq!(paths.len(), 2);
        assert!((brute_force_modulus(&p, &paths).unwrap() - 0.6).abs() <= 1e-12);
    }

    #[test]
    fn q2_grid_matches_effective_conductance() {
        // For Q = 2 the modulus is the effective conductance between E and F
        // with conductances 1/len (unit measure = len here).
        let n = 4;
        let g = grid(n);
        let e: Vec<usize> = (0..n).map(|i| i * n).collect();
        let f: Vec<usize> = (0..n).map(|i| i * n + n - 1).collect();
        let p = ModulusProblem::new(g, &e, &f, 2.0, None).unwrap();
        let s = modulus(&p, tight()).unwrap();
        // Columns are equipotential: n rows of n-1 series edges in parallel.
        assert!((s.value - n as f64 / (n - 1) as f64).abs() <= 1e-8, "{}", s.value);
        assert!(s.converged);
    }

    #[test]
    fn small_grids_match_brute_force() {
        let g = grid(3);
        for (e, f) in [(vec![0], vec![8]), (vec![0, 3], vec![5, 8]), (vec![1], vec![7])] {
            let p = ModulusProblem::new(g.clone(), &e, &f, 2.0, None).unwrap();
            let Some(paths) = enumerate_paths(&p, 12) else { continue };
            let bf = brute_force_modulus(&p, &paths).unwrap();
            let s = modulus(&p, tight()).unwrap();
            assert!((s.value - bf).abs() <= 1e-8 * bf, "{e:?} {f:?}: {} vs {bf}", s.value);
        }
    }

    #[test]
    fn separation_examples() {
        let line = QuasimetricSpace::from_fn(6, |i, j| (i as f64 - j as f64).abs()).unwrap();
        let ids = |v: &[usize]| v.iter().map(|&i| PointId::from(i)).collect::<Vec<_>>();
        assert_eq!(relative_separation(&line, &ids(&[0, 1]), &ids(&[3, 4])).unwrap(), 2.0);
        assert_eq!(relative_separation(&line, &ids(&[0, 1]), &ids(&[1, 2])).unwrap(), 0.0);
        assert!(relative_separation(&line, &ids(&[0]), &ids(&[3, 4])).is_err());
        let n = 12;
        let cyc = WeightedGraph::from_edges(n, &(0..n).map(|i| (i, (i + 1) % n, 1.0)).collect::<Vec<_>>()).unwrap();
        let (e, f) = ([0, 1, 2], [6, 7, 8]);
        let mut dist = f64::INFINITY;
        for a in e {
            for b in f {
                dist = dist.min(((a as i64 - b as i64).rem_euclid(12)).min((b as i64 - a as i64).rem_euclid(12)) as f64);
            }
        }
        assert_eq!(graph_relative_separation(&cyc, &e, &f).unwrap(), dist / 2.0);
    }

    #[test]
    fn scan_on_grid_decreases_with_outer_ring() {
        let n = 9;
        let g = grid(n);
        let scan = loewner_scan(&g, &concentric_square_pairs(n), 2.0, SolverOptions::default()).unwrap();
        assert!(scan.points.iter().all(|p| p.converged && p.modulus > 0.0));
        assert!(scan.envelope.iter().all(|e| e.1 > 0.0));
        for r1 in 1..3 {
            let ms: Vec<f64> = scan
                .points
                .iter()
                .filter(|p| p.pair_id.starts_with(&format!("ring{r1}-")))
                .map(|p| p.modulus)
                .collect();
            assert!(ms.windows(2).all(|w| w[1] < w[0]), "{ms:?}");
        }
        // Adjacent rings carry the largest moduli of the scan.
        let max = scan.points.iter().max_by(|a, b| a.modulus.total_cmp(&b.modulus)).unwrap();
        assert_eq!(max.pair_id, "ring3-ring4");
        let csv = scan.to_csv();
        assert!(csv.starts_with("pair_id,delta,modulus,iterations,converged\n"));
    }

    #[test]
    fn disconnected_pair_in_scan_is_flagged() {
        let g = WeightedGraph::from_edges(4, &[(0, 1, 1.0), (2, 3, 1.0)]).unwrap();
        let pairs = [PairSpec { id: "split".into(), e: vec![0, 1], f: vec![2, 3] }];
        let scan = loewner_scan(&g, &pairs, 2.0, SolverOptions::default()).unwrap();
        assert!(scan.points[0].empty_family);
        assert_eq!(scan.points[0].modulus, 0.0);
        assert_eq!(scan.points[0].delta, f64::INFINITY);
    }

    #[test]
    fn conformal_examples() {
        let p = ModulusProblem::new(parallel(1, 5), &[0], &[1], 2.0, None).unwrap();
        let r = conformal_invariance_check(&p, 3, tight(), CONFORMAL_BUDGET).unwrap();
        assert!(r.discrepancy <= 1e-9);
        let n = 9;
        let e: Vec<usize> = (0..n - 1).map(|i| i * n + n - 1).collect();
        let f: Vec<usize> = (0..n - 1).map(|j| (n - 1) * n + j).collect();
        let p = ModulusProblem::new(grid(n), &e, &f, 2.0, None).unwrap();
        let r = conformal_invariance_check(&p, 0, SolverOptions::default(), CONFORMAL_BUDGET).unwrap();
        assert!(r.within_budget && r.converged, "{r:?}");
        assert!(conformal_invariance_check(&p, e[0], SolverOptions::default(), 0.05).is_err());
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(24))]

        #[test]
        fn feasible_and_matches_brute_force(
            extra in proptest::collection::vec((0usize..7, 0usize..7, 0.5f64..2.0), 4..9),
            q in prop_oneof![Just(2.0), Just(1.5), Just(3.0)],
        ) {
            let mut edges: Vec<(usize, usize, f64)> = (0..6).map(|i| (i, i + 1, 1.0)).collect();
            edges.extend(extra.into_iter().filter(|e| e.0 != e.1));
            let g = WeightedGraph::from_edges(7, &edges).unwrap();
            let p = ModulusProblem::new(g, &[0], &[6], q, None).unwrap();
            let s = modulus(&p, tight()).unwrap();
            prop_assert!(s.converged);
            let check = p.shortest(&s.g.iter().zip(p.graph().edges()).map(|(g, e)| g * e.2).collect::<Vec<_>>()).unwrap().0;
            prop_assert!(check >= 1.0 - 1e-10);
            prop_assert!(s.value >= s.dual_bound - 1e-9 * s.value);
            if let Some(paths) = enumerate_paths(&p, 8) {
                if q == 2.0 || q == 1.5 {
                    let bf = brute_force_modulus(&p, &paths).unwrap();
                    prop_assert!((s.value - bf).abs() <= 1e-6 * bf, "{} vs {}", s.value, bf);
                }
            }
        }

        #[test]
        fn enlarging_e_never_decreases(extra in 0usize..8, q in 1.5f64..3.0) {
            let g = grid(4);
            let base = ModulusProblem::new(g.clone(), &[0], &[15], q, None).unwrap();
            let bigger = ModulusProblem::new(g, &[0, 1 + extra % 8], &[15], q, None).unwrap();
            let a = modulus(&base, SolverOptions::default()).unwrap().value;
            let b = modulus(&bigger, SolverOptions::default()).unwrap().value;
            prop_assert!(b >= a * (1.0 - 1e-5));
        }

        #[test]
        fn scale_covariance(lambda in 0.1f64..10.0, q in 1.5f64..3.0) {
            let g = grid(3);
            let p = ModulusProblem::new(g.clone(), &[0], &[8], q, None).unwrap();
            let scaled_edges = g.edges().iter().map(|&(u, v, l)| (u, v, l * lambda)).collect::<Vec<_>>();
            let gs = WeightedGraph::from_edges(9, &scaled_edges).unwrap();
            let measure = g.edges().iter().map(|e| e.2 * lambda.powf(q)).collect();
            let ps = ModulusProblem::new(gs, &[0], &[8], q, Some(measure)).unwrap();
            let a = modulus(&p, tight()).unwrap();
            let b = modulus(&ps, tight()).unwrap();
            prop_assert!((a.value - b.value).abs() <= 1e-8 * a.value);
            for (ga, gb) in a.g.iter().zip(&b.g) {
                prop_assert!((gb * lambda - ga).abs() <= 1e-6 * ga.max(1e-3));
            }
        }
    }
}
