//! Interaction graphs and their partition into matchings.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Leg {
    pub neighbor: usize,
    pub edge: usize,
}

/// Connected graph with canonically ordered edges `(i, j)`, `i < j`.
///
/// Parallel edges are only produced by [`Graph::cycle`] for the two-vertex
/// ring that appears after blocking a short chain; [`Graph::new`] rejects them.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "GraphFile", into = "GraphFile")]
pub struct Graph {
    n: usize,
    edges: Vec<(usize, usize)>,
    legs: Vec<Vec<Leg>>,
    max_degree: usize,
}

#[derive(Serialize, Deserialize)]
struct GraphFile {
    n: usize,
    edges: Vec<[usize; 2]>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    max_degree: Option<usize>,
    #[serde(default, skip_serializing_if = "std::ops::Not::not")]
    parallel_edges: bool,
}

impl TryFrom<GraphFile> for Graph {
    type Error = Error;
    fn try_from(f: GraphFile) -> Result<Self> {
        let edges: Vec<(usize, usize)> = f.edges.iter().map(|e| (e[0], e[1])).collect();
        let g = Graph::build(f.n, edges, f.parallel_edges)?;
        if let Some(d) = f.max_degree {
            g.with_max_degree(d)
        } else {
            Ok(g)
        }
    }
}

impl From<Graph> for GraphFile {
    fn from(g: Graph) -> Self {
        let parallel_edges = g.has_parallel_edges();
        GraphFile {
            n: g.n,
            edges: g.edges.iter().map(|&(i, j)| [i, j]).collect(),
            max_degree: Some(g.max_degree),
            parallel_edges,
        }
    }
}

impl Graph {
    /// Simple connected graph. Edge endpoints are canonicalized to `i < j`
    /// and the list is sorted.
    pub fn new(n: usize, edges: Vec<(usize, usize)>) -> Result<Self> {
        Self::build(n, edges, false)
    }

    /// Ring of `m` vertices. For `m = 2` the two bonds of the ring become
    /// parallel edges between vertices 0 and 1.
    pub fn cycle(m: usize) -> Result<Self> {
        if m < 2 {
            return Err(Error::validation(format!("cycle needs at least 2 vertices, got {m}")));
        }
        let mut edges: Vec<(usize, usize)> = (0..m - 1).map(|i| (i, i + 1)).collect();
        edges.push((0, m - 1));
        Self::build(m, edges, m == 2)
    }

    fn build(n: usize, edges: Vec<(usize, usize)>, allow_parallel: bool) -> Result<Self> {
        if n == 0 {
            return Err(Error::validation("graph must have at least one vertex"));
        }
        let mut es = Vec::with_capacity(edges.len());
        for (i, j) in edges {
            if i >= n || j >= n {
                return Err(Error::validation(format!("edge ({i}, {j}) out of range for n = {n}")));
            }
            if i == j {
                return Err(Error::validation(format!("self-loop at vertex {i}")));
            }
            es.push((i.min(j), i.max(j)));
        }
        es.sort_unstable();
        if !allow_parallel {
            if let Some(w) = es.windows(2).find(|w| w[0] == w[1]) {
                return Err(Error::validation(format!("duplicate edge {:?}", w[0])));
            }
        }
        let mut legs = vec![Vec::new(); n];
        for (k, &(i, j)) in es.iter().enumerate() {
            legs[i].push(Leg { neighbor: j, edge: k });
            legs[j].push(Leg { neighbor: i, edge: k });
        }
        for l in legs.iter_mut() {
            l.sort_unstable();
        }
        let max_degree = legs.iter().map(|l| l.len()).max().unwrap_or(0);
        let g = Graph { n, edges: es, legs, max_degree };
        if !g.is_connected() {
            return Err(Error::validation("graph is not connected"));
        }
        Ok(g)
    }

    /// Declare a degree bound; fails if the graph exceeds it.
    pub fn with_max_degree(mut self, d0: usize) -> Result<Self> {
        let actual = self.legs.iter().map(|l| l.len()).max().unwrap_or(0);
        if actual > d0 {
            return Err(Error::validation(format!(
                "max_degree {d0} declared but a vertex has degree {actual}"
            )));
        }
        self.max_degree = d0;
        Ok(self)
    }

    fn is_connected(&self) -> bool {
        let mut seen = vec![false; self.n];
        let mut stack = vec![0usize];
        seen[0] = true;
        while let Some(v) = stack.pop() {
            for l in &self.legs[v] {
                if !seen[l.neighbor] {
                    seen[l.neighbor] = true;
                    stack.push(l.neighbor);
                }
            }
        }
        seen.iter().all(|&s| s)
    }

    pub fn num_vertices(&self) -> usize {
        self.n
    }

    pub fn num_edges(&self) -> usize {
        self.edges.len()
    }

    pub fn edges(&self) -> &[(usize, usize)] {
        &self.edges
    }

    pub fn edge(&self, k: usize) -> (usize, usize) {
        self.edges[k]
    }

    /// Incident legs of `v`, ordered by (neighbor id, edge index).
    pub fn legs(&self, v: usize) -> &[Leg] {
        &self.legs[v]
    }

    pub fn neighbors(&self, v: usize) -> Vec<usize> {
        self.legs[v].iter().map(|l| l.neighbor).collect()
    }

    pub fn degree(&self, v: usize) -> usize {
        self.legs[v].len()
    }

    pub fn max_degree(&self) -> usize {
        self.max_degree
    }

    pub fn has_parallel_edges(&self) -> bool {
        self.edges.windows(2).any(|w| w[0] == w[1])
    }

    /// Position of edge `k` among the legs of vertex `v`.
    pub fn leg_position(&self, v: usize, k: usize) -> Option<usize> {
        self.legs[v].iter().position(|l| l.edge == k)
    }

    /// Edges sharing exactly one vertex, as (shared vertex, edge a, edge b), a < b.
    pub fn adjacent_edge_pairs(&self) -> Vec<(usize, usize, usize)> {
        let mut out = Vec::new();
        for v in 0..self.n {
            let ls = &self.legs[v];
            for x in 0..ls.len() {
                for y in x + 1..ls.len() {
                    let (a, b) = (ls[x].edge.min(ls[y].edge), ls[x].edge.max(ls[y].edge));
                    if self.edges[a] != self.edges[b] {
                        out.push((v, a, b));
                    }
                }
            }
        }
        out
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LatticeKind {
    Ring,
    Path,
    Grid2d,
}

impl std::str::FromStr for LatticeKind {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "ring" => Ok(LatticeKind::Ring),
            "path" => Ok(LatticeKind::Path),
            "grid2d" => Ok(LatticeKind::Grid2d),
            _ => Err(Error::validation(format!("unknown lattice kind '{s}'"))),
        }
    }
}

pub fn build_lattice_graph(kind: LatticeKind, dims: &[usize]) -> Result<Graph> {
    if dims.is_empty() || dims.iter().any(|&d| d == 0) {
        return Err(Error::validation(format!("dims must be positive, got {dims:?}")));
    }
    match kind {
        LatticeKind::Ring => {
            let n = dims[0];
            if dims.len() != 1 || n < 3 {
                return Err(Error::validation(format!("ring needs one length >= 3, got {dims:?}")));
            }
            let mut e: Vec<_> = (0..n - 1).map(|i| (i, i + 1)).collect();
            e.push((0, n - 1));
            Graph::new(n, e)
        }
        LatticeKind::Path => {
            let n = dims[0];
            if dims.len() != 1 || n < 2 {
                return Err(Error::validation(format!("path needs one length >= 2, got {dims:?}")));
            }
            Graph::new(n, (0..n - 1).map(|i| (i, i + 1)).collect())
        }
        LatticeKind::Grid2d => {
            if dims.len() != 2 {
                return Err(Error::validation(format!("grid2d needs [rows, cols], got {dims:?}")));
            }
            let (r, c) = (dims[0], dims[1]);
            if r * c < 2 {
                return Err(Error::validation("grid2d needs at least 2 vertices"));
            }
            let mut e = Vec::new();
            for y in 0..r {
                for x in 0..c {
                    let v = y * c + x;
                    if x + 1 < c {
                        e.push((v, v + 1));
                    }
                    if y + 1 < r {
                        e.push((v, v + c));
                    }
                }
            }
            Graph::new(r * c, e)
        }
    }
}

/// Partition of the edge set into matchings. Classes hold edge indices.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct EdgeColoring {
    pub classes: Vec<Vec<usize>>,
}

impl EdgeColoring {
    pub fn k(&self) -> usize {
        self.classes.len()
    }

    pub fn validate(&self, g: &Graph) -> Result<()> {
        let mut seen = vec![false; g.num_edges()];
        for (q, class) in self.classes.iter().enumerate() {
            let mut used = vec![false; g.num_vertices()];
            for &k in class {
                if k >= g.num_edges() || seen[k] {
                    return Err(Error::validation(format!("class {q}: edge {k} repeated or out of range")));
                }
                seen[k] = true;
                let (i, j) = g.edge(k);
                if used[i] || used[j] {
                    return Err(Error::validation(format!("class {q} is not a matching at edge ({i}, {j})")));
                }
                used[i] = true;
                used[j] = true;
            }
        }
        if seen.iter().any(|s| !s) {
            return Err(Error::validation("coloring does not cover every edge"));
        }
        Ok(())
    }
}

/// Greedy coloring over the canonical edge order: each edge takes the lowest
/// class unused at both endpoints.
pub fn edge_color(g: &Graph) -> EdgeColoring {
    let mut at_vertex: Vec<Vec<usize>> = vec![Vec::new(); g.num_vertices()];
    let mut classes: Vec<Vec<usize>> = Vec::new();
    for (k, &(i, j)) in g.edges().iter().enumerate() {
        let mut q = 0;
        while at_vertex[i].contains(&q) || at_vertex[j].contains(&q) {
            q += 1;
        }
        if q == classes.len() {
            classes.push(Vec::new());
        }
        classes[q].push(k);
        at_vertex[i].push(q);
        at_vertex[j].push(q);
    }
    EdgeColoring { classes }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn ring_four_has_canonical_edges() {
        let g = build_lattice_graph(LatticeKind::Ring, &[4]).unwrap();
        assert_eq!(g.edges(), &[(0, 1), (0, 3), (1, 2), (2, 3)]);
        assert_eq!(g.neighbors(0), vec![1, 3]);
    }

    #[test]
    fn rejects_bad_inputs() {
        assert!(build_lattice_graph(LatticeKind::Ring, &[2]).is_err());
        assert!(build_lattice_graph(LatticeKind::Path, &[1]).is_err());
        assert!(Graph::new(3, vec![(0, 1), (1, 0)]).is_err());
        assert!(Graph::new(3, vec![(0, 0)]).is_err());
        assert!(Graph::new(4, vec![(0, 1), (2, 3)]).is_err());
    }

    #[test]
    fn two_cycle_has_parallel_edges() {
        let g = Graph::cycle(2).unwrap();
        assert_eq!(g.edges(), &[(0, 1), (0, 1)]);
        assert_eq!(g.degree(0), 2);
        let c = edge_color(&g);
        assert_eq!(c.k(), 2);
        c.validate(&g).unwrap();
    }

    #[test]
    fn json_roundtrip() {
        let g = build_lattice_graph(LatticeKind::Grid2d, &[2, 3]).unwrap();
        let s = serde_json::to_string(&g).unwrap();
        assert!(s.starts_with("{\"n\":6,\"edges\":[[0,1],[0,3]"));
        let back: Graph = serde_json::from_str(&s).unwrap();
        assert_eq!(back, g);
        assert!(serde_json::from_str::<Graph>(r#"{"n":3,"edges":[[0,1],[0,1],[1,2]]}"#).is_err());
        let two: Graph = serde_json::from_str(&serde_json::to_string(&Graph::cycle(2).unwrap()).unwrap()).unwrap();
        assert!(two.has_parallel_edges());
    }
}
