//! Weighted undirected graphs with cached shortest-path distances.

use std::cmp::Ordering;
use std::collections::{BTreeMap, BinaryHeap, HashMap};
use std::sync::OnceLock;

use crate::error::{Error, Result};
use crate::space::{PointId, QuasimetricSpace};

/// An edge `(u, v, length)` by vertex index.
pub type Edge = (usize, usize, f64);

#[derive(Debug)]
pub struct WeightedGraph {
    vertices: Vec<PointId>,
    index: HashMap<PointId, usize>,
    edges: Vec<Edge>,
    adjacency: Vec<Vec<(usize, usize)>>,
    boundary: BTreeMap<String, Vec<usize>>,
    base: usize,
    dist: OnceLock<Vec<f64>>,
}

impl Clone for WeightedGraph {
    fn clone(&self) -> Self {
        WeightedGraph {
            vertices: self.vertices.clone(),
            index: self.index.clone(),
            edges: self.edges.clone(),
            adjacency: self.adjacency.clone(),
            boundary: self.boundary.clone(),
            base: self.base,
            dist: OnceLock::new(),
        }
    }
}

impl PartialEq for WeightedGraph {
    fn eq(&self, other: &Self) -> bool {
        self.vertices == other.vertices
            && self.edges == other.edges
            && self.boundary == other.boundary
            && self.base == other.base
    }
}

impl WeightedGraph {
    /// Validates ids, edge endpoints and lengths. Parallel edges are kept;
    /// self-loops are rejected. Connectivity is not required here.
    pub fn new(
        vertices: Vec<PointId>,
        edges: Vec<(PointId, PointId, f64)>,
        boundary: BTreeMap<String, Vec<PointId>>,
        base: PointId,
    ) -> Result<Self> {
        if vertices.is_empty() {
            return Err(Error::InvalidGraph("graph has no vertices".into()));
        }
        let mut index = HashMap::with_capacity(vertices.len());
        for (i, v) in vertices.iter().enumerate() {
            if index.insert(v.clone(), i).is_some() {
                return Err(Error::InvalidGraph(format!("duplicate vertex `{v}`")));
            }
        }
        let lookup = |v: &PointId| -> Result<usize> {
            index
                .get(v)
                .copied()
                .ok_or_else(|| Error::InvalidGraph(format!("unknown vertex `{v}`")))
        };
        let mut out_edges = Vec::with_capacity(edges.len());
        let mut adjacency = vec![Vec::new(); vertices.len()];
        for (u, v, len) in &edges {
            let (a, b) = (lookup(u)?, lookup(v)?);
            if a == b {
                return Err(Error::InvalidGraph(format!("self-loop at `{u}`")));
            }
            if !(*len > 0.0 && len.is_finite()) {
                return Err(Error::InvalidGraph(format!(
                    "edge ({u}, {v}) has non-positive length {len}"
                )));
            }
            let e = out_edges.len();
            out_edges.push((a, b, *len));
            adjacency[a].push((b, e));
            adjacency[b].push((a, e));
        }
        let mut sets = BTreeMap::new();
        for (name, ids) in &boundary {
            let members = ids.iter().map(lookup).collect::<Result<Vec<_>>>()?;
            sets.insert(name.clone(), members);
        }
        let base = lookup(&base)?;
        Ok(WeightedGraph {
            vertices,
            index,
            edges: out_edges,
            adjacency,
            boundary: sets,
            base,
            dist: OnceLock::new(),
        })
    }

    /// Graph on ids `0..n` from index edges, without boundary sets, based at 0.
    pub fn from_edges(n: usize, edges: &[Edge]) -> Result<Self> {
        let vertices: Vec<PointId> = (0..n).map(PointId::from).collect();
        let edges = edges
            .iter()
            .map(|&(u, v, l)| (PointId::from(u), PointId::from(v), l))
            .collect();
        Self::new(vertices, edges, BTreeMap::new(), PointId::from(0usize))
    }

    pub fn with_boundary(mut self, name: &str, members: Vec<usize>) -> Self {
        self.boundary.insert(name.to_string(), members);
        self
    }

    pub fn with_base(mut self, base: usize) -> Self {
        self.base = base;
        self
    }

    pub fn len(&self) -> usize {
        self.vertices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.vertices.is_empty()
    }

    pub fn vertices(&self) -> &[PointId] {
        &self.vertices
    }

    pub fn vertex(&self, i: usize) -> &PointId {
        &self.vertices[i]
    }

    pub fn index_of(&self, id: &str) -> Result<usize> {
        self.index
            .get(&PointId::new(id))
            .copied()
            .ok_or_else(|| Error::UnknownPoint(id.to_string()))
    }

    pub fn edges(&self) -> &[Edge] {
        &self.edges
    }

    /// Neighbours of `v` as `(vertex, edge index)`.
    pub fn neighbors(&self, v: usize) -> &[(usize, usize)] {
        &self.adjacency[v]
    }

    pub fn boundary_sets(&self) -> &BTreeMap<String, Vec<usize>> {
        &self.boundary
    }

    pub fn boundary(&self, name: &str) -> Result<&[usize]> {
        self.boundary
            .get(name)
            .map(Vec::as_slice)
            .ok_or_else(|| Error::InvalidArgument(format!("no boundary set named `{name}`")))
    }

    pub fn base(&self) -> usize {
        self.base
    }

    /// All-pairs shortest-path distances, row-major, `INFINITY` between
    /// components. Computed once by Dijkstra from every source.
    pub fn distances(&self) -> &[f64] {
        self.dist.get_or_init(|| {
            let n = self.len();
            let mut all = Vec::with_capacity(n * n);
            for s in 0..n {
                all.extend(self.dijkstra(s, |e| self.edges[e].2));
            }
            all
        })
    }

    #[inline]
    pub fn d(&self, u: usize, v: usize) -> f64 {
        self.distances()[u * self.len() + v]
    }

    pub fn is_connected(&self) -> bool {
        self.distances()[..self.len()].iter().all(|d| d.is_finite())
    }

    pub fn require_connected(&self) -> Result<()> {
        if self.is_connected() {
            Ok(())
        } else {
            Err(Error::InvalidGraph("graph is disconnected".into()))
        }
    }

    /// Single-source shortest paths under per-edge weights.
    pub fn dijkstra(&self, source: usize, weight: impl Fn(usize) -> f64) -> Vec<f64> {
        self.multi_source_dijkstra(&[source], weight).0
    }

    /// Shortest paths from a set of sources. Returns distances and, per vertex,
    /// the edge used to reach it.
    pub fn multi_source_dijkstra(
        &self,
        sources: &[usize],
        weight: impl Fn(usize) -> f64,
    ) -> (Vec<f64>, Vec<Option<usize>>) {
        let n = self.len();
        let mut dist = vec![f64::INFINITY; n];
        let mut via = vec![None; n];
        let mut heap = BinaryHeap::new();
        for &s in sources {
            dist[s] = 0.0;
            heap.push(Entry(0.0, s));
        }
        while let Some(Entry(d, u)) = heap.pop() {
            if d > dist[u] {
                continue;
            }
            for &(v, e) in &self.adjacency[u] {
                let nd = d + weight(e);
                if nd < dist[v] {
                    dist[v] = nd;
                    via[v] = Some(e);
                    heap.push(Entry(nd, v));
                }
            }
        }
        (dist, via)
    }

    /// The shortest-path metric as a quasimetric space on all vertices.
    pub fn to_space(&self) -> Result<QuasimetricSpace> {
        self.require_connected()?;
        QuasimetricSpace::new(self.vertices.clone(), self.distances().to_vec(), None)
    }

    /// Shortest-path metric restricted to the given vertices.
    pub fn subspace(&self, members: &[usize]) -> Result<QuasimetricSpace> {
        let ids = members.iter().map(|&i| self.vertices[i].clone()).collect();
        QuasimetricSpace::with_ids_fn(ids, |a, b| self.d(members[a], members[b]))
    }
}

#[derive(PartialEq)]
struct Entry(f64, usize);

impl Eq for Entry {}

impl PartialOrd for Entry {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for Entry {
    // Reversed so the max-heap pops the smallest distance.
    fn cmp(&self, other: &Self) -> Ordering {
        other.0.total_cmp(&self.0).then(other.1.cmp(&self.1))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn validates_edges() {
        assert!(WeightedGraph::from_edges(2, &[(0, 1, 0.0)]).is_err());
        assert!(WeightedGraph::from_edges(2, &[(0, 0, 1.0)]).is_err());
        assert!(WeightedGraph::from_edges(2, &[(0, 2, 1.0)]).is_err());
    }

    #[test]
    fn shortest_paths_match_floyd_warshall() {
        let edges = [
            (0, 1, 1.0),
            (1, 2, 2.5),
            (0, 2, 4.0),
            (2, 3, 0.5),
            (3, 4, 1.0),
            (1, 4, 5.0),
            (0, 1, 0.7),
        ];
        let g = WeightedGraph::from_edges(5, &edges).unwrap();
        let n = 5;
        let mut fw = vec![f64::INFINITY; n * n];
        for i in 0..n {
            fw[i * n + i] = 0.0;
        }
        for &(u, v, l) in &edges {
            fw[u * n + v] = fw[u * n + v].min(l);
            fw[v * n + u] = fw[v * n + u].min(l);
        }
        for k in 0..n {
            for i in 0..n {
                for j in 0..n {
                    fw[i * n + j] = fw[i * n + j].min(fw[i * n + k] + fw[k * n + j]);
                }
            }
        }
        assert_eq!(g.distances(), &fw[..]);
        assert!(g.is_connected());
    }

    #[test]
    fn disconnected_graph_reports_infinity() {
        let g = WeightedGraph::from_edges(4, &[(0, 1, 1.0), (2, 3, 1.0)]).unwrap();
        assert!(!g.is_connected());
        assert_eq!(g.d(0, 3), f64::INFINITY);
        assert!(g.to_space().is_err());
    }
}
