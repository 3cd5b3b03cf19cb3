//! Finite graphs, their oriented-edge structure, and the derived
//! directed-edge ("kite") graph.
//!
//! A graph carries one canonical orientation per edge (lexicographic, tail <
//! head after vertex indexing) so that edge-indexed noise is reproducible.
//! The full oriented set `B` is the canonical set plus all reversals,
//! materialized on demand by [`EdgeGraph`].

use std::collections::BTreeMap;

use nalgebra::DMatrix;

use crate::error::{Error, Result};

/// How a graph was constructed; used to recognize vertex-transitive families.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum GraphKind {
    Cycle { n: usize },
    Torus { side: usize },
    Path { n: usize },
}

/// A finite connected simple graph with a fixed edge orientation.
#[derive(Debug, Clone, PartialEq)]
pub struct Graph {
    n_vertices: usize,
    /// Canonical oriented edges (tail, head), tail < head, sorted
    /// lexicographically. One per unordered edge.
    edges: Vec<(usize, usize)>,
    adjacency: Vec<Vec<usize>>,
    origin: usize,
    degree_bound: usize,
    /// BFS distance to the origin, cached for the order functional weights.
    dist_from_origin: Vec<usize>,
    kind: GraphKind,
}

/// One oriented edge of `B`. `id` indexes the canonical edge list; the
/// reversal of a canonical edge keeps its id with `is_reversed` set.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct OrientedEdge {
    pub tail: usize,
    pub head: usize,
    pub id: usize,
    pub is_reversed: bool,
}

impl OrientedEdge {
    pub fn reversal(&self) -> OrientedEdge {
        OrientedEdge {
            tail: self.head,
            head: self.tail,
            id: self.id,
            is_reversed: !self.is_reversed,
        }
    }

    /// -1 if `x` is the tail, +1 if `x` is the head, 0 otherwise.
    pub fn sgn(&self, x: usize) -> i32 {
        if x == self.tail {
            -1
        } else if x == self.head {
            1
        } else {
            0
        }
    }
}

/// Free-function form of [`OrientedEdge::sgn`].
pub fn sgn(x: usize, b: &OrientedEdge) -> i32 {
    b.sgn(x)
}

impl Graph {
    fn from_edge_set(
        n: usize,
        mut edges: Vec<(usize, usize)>,
        kind: GraphKind,
    ) -> Result<Graph> {
        for e in edges.iter_mut() {
            if e.0 > e.1 {
                *e = (e.1, e.0);
            }
        }
        edges.sort_unstable();
        for w in edges.windows(2) {
            if w[0] == w[1] {
                return Err(Error::InvalidSize(format!(
                    "parallel edge {:?} in construction",
                    w[0]
                )));
            }
        }
        let mut adjacency = vec![Vec::new(); n];
        for &(t, h) in &edges {
            if t == h {
                return Err(Error::InvalidSize(format!("self-loop at {t}")));
            }
            if h >= n {
                return Err(Error::InvalidSize(format!("vertex {h} out of range")));
            }
            adjacency[t].push(h);
            adjacency[h].push(t);
        }
        for nbrs in adjacency.iter_mut() {
            nbrs.sort_unstable();
        }
        let degree_bound = adjacency.iter().map(Vec::len).max().unwrap_or(0);
        let dist_from_origin = bfs_distances(&adjacency, 0)?;
        Ok(Graph {
            n_vertices: n,
            edges,
            adjacency,
            origin: 0,
            degree_bound,
            dist_from_origin,
            kind,
        })
    }

    pub fn n_vertices(&self) -> usize {
        self.n_vertices
    }

    pub fn n_edges(&self) -> usize {
        self.edges.len()
    }

    /// Canonical oriented edges (tail, head) with tail < head.
    pub fn edges(&self) -> &[(usize, usize)] {
        &self.edges
    }

    pub fn oriented_edge(&self, id: usize) -> OrientedEdge {
        let (tail, head) = self.edges[id];
        OrientedEdge {
            tail,
            head,
            id,
            is_reversed: false,
        }
    }

    pub fn oriented_edges(&self) -> impl Iterator<Item = OrientedEdge> + '_ {
        (0..self.edges.len()).map(|id| self.oriented_edge(id))
    }

    pub fn neighbors(&self, x: usize) -> &[usize] {
        &self.adjacency[x]
    }

    pub fn degree(&self, x: usize) -> usize {
        self.adjacency[x].len()
    }

    pub fn origin(&self) -> usize {
        self.origin
    }

    pub fn degree_bound(&self) -> usize {
        self.degree_bound
    }

    /// Graph distance |x| to the origin.
    pub fn distance_to_origin(&self, x: usize) -> usize {
        self.dist_from_origin[x]
    }

    pub fn kind(&self) -> GraphKind {
        self.kind
    }

    /// Cycles and tori are vertex-transitive; paths are not.
    pub fn is_vertex_transitive(&self) -> bool {
        matches!(self.kind, GraphKind::Cycle { .. } | GraphKind::Torus { .. })
    }

    pub fn are_adjacent(&self, x: usize, y: usize) -> bool {
        self.adjacency[x].binary_search(&y).is_ok()
    }
}

fn bfs_distances(adjacency: &[Vec<usize>], from: usize) -> Result<Vec<usize>> {
    let n = adjacency.len();
    let mut dist = vec![usize::MAX; n];
    let mut queue = std::collections::VecDeque::new();
    dist[from] = 0;
    queue.push_back(from);
    while let Some(x) = queue.pop_front() {
        for &y in &adjacency[x] {
            if dist[y] == usize::MAX {
                dist[y] = dist[x] + 1;
                queue.push_back(y);
            }
        }
    }
    if dist.contains(&usize::MAX) {
        return Err(Error::InvalidSize("graph is not connected".into()));
    }
    Ok(dist)
}

/// Cycle on `n >= 3` vertices. Degree bound 2, origin 0.
pub fn build_cycle(n: usize) -> Result<Graph> {
    if n < 3 {
        return Err(Error::InvalidSize(format!(
            "cycle needs n >= 3, got {n} (n = 2 would create a parallel edge)"
        )));
    }
    let edges = (0..n).map(|i| (i, (i + 1) % n)).collect();
    Graph::from_edge_set(n, edges, GraphKind::Cycle { n })
}

/// Torus (Z/side Z)^dim for dim in {1, 2}, side >= 3. Row-major vertex
/// indexing with periodic wrap; dim = 1 reduces to [`build_cycle`].
pub fn build_torus(side: usize, dim: usize) -> Result<Graph> {
    if side < 3 {
        return Err(Error::InvalidSize(format!(
            "torus needs side >= 3, got {side}"
        )));
    }
    match dim {
        1 => build_cycle(side),
        2 => {
            let n = side * side;
            let vid = |r: usize, c: usize| (r % side) * side + (c % side);
            let mut edges = Vec::with_capacity(2 * n);
            for r in 0..side {
                for c in 0..side {
                    edges.push((vid(r, c), vid(r, c + 1)));
                    edges.push((vid(r, c), vid(r + 1, c)));
                }
            }
            Graph::from_edge_set(n, edges, GraphKind::Torus { side })
        }
        d => Err(Error::InvalidParameter(format!(
            "torus dimension must be 1 or 2, got {d}"
        ))),
    }
}

/// Path on `n >= 2` vertices. Small test graph; the only non
/// vertex-transitive family in the crate.
pub fn build_path(n: usize) -> Result<Graph> {
    if n < 2 {
        return Err(Error::InvalidSize(format!("path needs n >= 2, got {n}")));
    }
    let edges = (0..n - 1).map(|i| (i, i + 1)).collect();
    Graph::from_edge_set(n, edges, GraphKind::Path { n })
}

/// Dense graph Laplacian: diagonal = degree, off-diagonal -1 on edges.
/// Positive semidefinite with kernel exactly the constants.
pub fn laplacian(g: &Graph) -> DMatrix<f64> {
    let n = g.n_vertices();
    let mut m = DMatrix::zeros(n, n);
    for x in 0..n {
        m[(x, x)] = g.degree(x) as f64;
    }
    for &(t, h) in g.edges() {
        m[(t, h)] = -1.0;
        m[(h, t)] = -1.0;
    }
    m
}

/// The graph on oriented edges `B` induced by the Hessian cross-terms of the
/// Gaussian potential H = (1/2) sum eta_x^2.
///
/// For b = (x, y), b' = (u, v) the cross term is the inner product
/// <delta_x - delta_y, delta_u - delta_v>: +2 on the diagonal, -2 on the
/// reversal, and +-1 for edges sharing exactly one endpoint. Kite neighbors
/// are the pairs with b' != reversal(b) and a negative cross term; on these
/// the induced walk is a simple random walk. The compensation constant per
/// node is kite degree minus the diagonal term (0 on cycles, 4 on the 2d
/// torus), the rate surplus that the edge representation must exponentiate
/// away.
#[derive(Debug, Clone)]
pub struct EdgeGraph {
    n_edges: usize,
    nodes: Vec<OrientedEdge>,
    /// Nonzero Hessian cross terms, keyed by node-index pairs.
    weights: BTreeMap<(usize, usize), f64>,
    kite_adjacency: Vec<Vec<usize>>,
    compensation: Vec<f64>,
}

impl EdgeGraph {
    /// Number of nodes, 2|E|.
    pub fn n_nodes(&self) -> usize {
        self.nodes.len()
    }

    pub fn nodes(&self) -> &[OrientedEdge] {
        &self.nodes
    }

    /// Node index of the canonical orientation of edge `id`.
    pub fn canonical_index(&self, id: usize) -> usize {
        id
    }

    /// Node index of the reversal of node `i`.
    pub fn reversal_index(&self, i: usize) -> usize {
        if i < self.n_edges {
            i + self.n_edges
        } else {
            i - self.n_edges
        }
    }

    pub fn weight(&self, i: usize, j: usize) -> f64 {
        self.weights.get(&(i, j)).copied().unwrap_or(0.0)
    }

    pub fn weights(&self) -> &BTreeMap<(usize, usize), f64> {
        &self.weights
    }

    pub fn kite_neighbors(&self, i: usize) -> &[usize] {
        &self.kite_adjacency[i]
    }

    pub fn compensation(&self, i: usize) -> f64 {
        self.compensation[i]
    }

    /// Laplacian of the unit-rate kite walk: diagonal = kite degree,
    /// -1 between kite neighbors. Symmetric, kernel contains the constants.
    pub fn kite_laplacian(&self) -> DMatrix<f64> {
        let m = self.n_nodes();
        let mut lap = DMatrix::zeros(m, m);
        for i in 0..m {
            lap[(i, i)] = self.kite_adjacency[i].len() as f64;
            for &j in &self.kite_adjacency[i] {
                lap[(i, j)] = -1.0;
            }
        }
        lap
    }
}

/// Build the kite graph of `g` under the Gaussian Hessian convention.
pub fn build_edge_graph(g: &Graph) -> EdgeGraph {
    let ne = g.n_edges();
    let mut nodes = Vec::with_capacity(2 * ne);
    nodes.extend(g.oriented_edges());
    for id in 0..ne {
        nodes.push(g.oriented_edge(id).reversal());
    }

    let cross = |a: &OrientedEdge, b: &OrientedEdge| -> f64 {
        let mut w = 0.0;
        if a.tail == b.tail {
            w += 1.0;
        }
        if a.tail == b.head {
            w -= 1.0;
        }
        if a.head == b.tail {
            w -= 1.0;
        }
        if a.head == b.head {
            w += 1.0;
        }
        w
    };

    let m = nodes.len();
    let mut weights = BTreeMap::new();
    let mut kite_adjacency = vec![Vec::new(); m];
    for i in 0..m {
        for j in 0..m {
            let w = cross(&nodes[i], &nodes[j]);
            if w != 0.0 {
                weights.insert((i, j), w);
            }
            let j_is_reversal = j == if i < ne { i + ne } else { i - ne };
            if j != i && !j_is_reversal && w < 0.0 {
                kite_adjacency[i].push(j);
            }
        }
    }
    let compensation = (0..m)
        .map(|i| {
            let diag = weights.get(&(i, i)).copied().unwrap_or(0.0);
            kite_adjacency[i].len() as f64 - diag
        })
        .collect();

    EdgeGraph {
        n_edges: ne,
        nodes,
        weights,
        kite_adjacency,
        compensation,
    }
}
