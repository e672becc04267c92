//! Undirected architecture graphs with all-pairs hop distances.

use std::collections::VecDeque;

use crate::error::{Error, Result};

const TOKYO: &str = include_str!("../../../data/arch/tokyo.edges");
const ROCHESTER: &str = include_str!("../../../data/arch/rochester.edges");
const SYCAMORE: &str = include_str!("../../../data/arch/sycamore.edges");

const NO_EDGE: u32 = u32::MAX;

/// A connected, simple, undirected coupling graph.
///
/// Edges are stored sorted as `(u, v)` with `u < v`; an edge's id is its
/// position in that order, so comparing ids compares edges lexicographically.
#[derive(Clone, Debug)]
pub struct ArchGraph {
    num_nodes: usize,
    edges: Vec<(u32, u32)>,
    adj: Vec<Vec<(u32, u32)>>,
    edge_ids: Vec<u32>,
    dist: Vec<u16>,
    diameter: u32,
    max_degree: usize,
}

impl ArchGraph {
    /// Builds the graph, rejecting self-loops and disconnected inputs.
    /// Duplicate edges (in either orientation) are merged.
    pub fn from_edges(num_nodes: usize, edges: &[(u32, u32)]) -> Result<Self> {
        if num_nodes == 0 {
            return Err(Error::Arch("graph has no nodes".into()));
        }
        if num_nodes > u16::MAX as usize {
            return Err(Error::Arch(format!("{num_nodes} nodes is too many")));
        }
        let mut sorted = Vec::with_capacity(edges.len());
        for &(a, b) in edges {
            if a == b {
                return Err(Error::Arch(format!("self-loop on node {a}")));
            }
            if a as usize >= num_nodes || b as usize >= num_nodes {
                return Err(Error::Arch(format!("edge {{{a}, {b}}} outside 0..{num_nodes}")));
            }
            sorted.push((a.min(b), a.max(b)));
        }
        sorted.sort_unstable();
        sorted.dedup();

        let mut adj = vec![Vec::new(); num_nodes];
        let mut edge_ids = vec![NO_EDGE; num_nodes * num_nodes];
        for (id, &(u, v)) in sorted.iter().enumerate() {
            adj[u as usize].push((v, id as u32));
            adj[v as usize].push((u, id as u32));
            edge_ids[u as usize * num_nodes + v as usize] = id as u32;
            edge_ids[v as usize * num_nodes + u as usize] = id as u32;
        }
        for list in &mut adj {
            list.sort_unstable();
        }

        let dist = bfs_all_pairs(num_nodes, &adj);
        if dist.contains(&u16::MAX) {
            return Err(Error::Disconnected);
        }
        let diameter = dist.iter().copied().max().unwrap_or(0) as u32;
        let max_degree = adj.iter().map(Vec::len).max().unwrap_or(0);
        Ok(ArchGraph {
            num_nodes,
            edges: sorted,
            adj,
            edge_ids,
            dist,
            diameter,
            max_degree,
        })
    }

    /// Parses an `.edges` file: one `u v` pair per line, `#` starts a comment.
    /// The node count is one more than the largest id mentioned.
    pub fn parse(text: &str) -> Result<Self> {
        let mut edges = Vec::new();
        let mut max_id: Option<u32> = None;
        for (i, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let fields: Vec<&str> = line.split_whitespace().collect();
            let parse = |s: &str| {
                s.parse::<u32>()
                    .map_err(|_| Error::Arch(format!("line {}: bad node id `{s}`", i + 1)))
            };
            if fields.len() != 2 {
                return Err(Error::Arch(format!("line {}: expected `u v`", i + 1)));
            }
            let (u, v) = (parse(fields[0])?, parse(fields[1])?);
            if u == v {
                return Err(Error::Arch(format!("line {}: self-loop on node {u}", i + 1)));
            }
            max_id = Some(max_id.unwrap_or(0).max(u).max(v));
            edges.push((u, v));
        }
        let n = max_id.map_or(0, |m| m as usize + 1);
        ArchGraph::from_edges(n, &edges)
    }

    /// `rows x cols` lattice with 4-neighbour couplings; node `r * cols + c`.
    pub fn grid(rows: usize, cols: usize) -> Result<Self> {
        let mut edges = Vec::new();
        for r in 0..rows {
            for c in 0..cols {
                let id = (r * cols + c) as u32;
                if c + 1 < cols {
                    edges.push((id, id + 1));
                }
                if r + 1 < rows {
                    edges.push((id, id + cols as u32));
                }
            }
        }
        ArchGraph::from_edges(rows * cols, &edges)
    }

    pub fn path(n: usize) -> Result<Self> {
        ArchGraph::grid(1, n)
    }

    pub fn tokyo() -> Self {
        ArchGraph::parse(TOKYO).expect("bundled tokyo.edges is valid")
    }

    pub fn rochester() -> Self {
        ArchGraph::parse(ROCHESTER).expect("bundled rochester.edges is valid")
    }

    pub fn sycamore() -> Self {
        ArchGraph::parse(SYCAMORE).expect("bundled sycamore.edges is valid")
    }

    pub fn num_nodes(&self) -> usize {
        self.num_nodes
    }

    pub fn edges(&self) -> &[(u32, u32)] {
        &self.edges
    }

    pub fn edge(&self, id: u32) -> (u32, u32) {
        self.edges[id as usize]
    }

    pub fn edge_id(&self, u: u32, v: u32) -> Option<u32> {
        let id = self.edge_ids[u as usize * self.num_nodes + v as usize];
        (id != NO_EDGE).then_some(id)
    }

    pub fn is_edge(&self, u: u32, v: u32) -> bool {
        self.edge_id(u, v).is_some()
    }

    /// Neighbours of `v` with the connecting edge id, ascending by neighbour.
    pub fn neighbors(&self, v: u32) -> &[(u32, u32)] {
        &self.adj[v as usize]
    }

    pub fn degree(&self, v: u32) -> usize {
        self.adj[v as usize].len()
    }

    #[inline]
    pub fn dist(&self, u: u32, v: u32) -> u32 {
        self.dist[u as usize * self.num_nodes + v as usize] as u32
    }

    pub fn diameter(&self) -> u32 {
        self.diameter
    }

    pub fn max_degree(&self) -> usize {
        self.max_degree
    }
}

fn bfs_all_pairs(n: usize, adj: &[Vec<(u32, u32)>]) -> Vec<u16> {
    let mut dist = vec![u16::MAX; n * n];
    let mut queue = VecDeque::new();
    for s in 0..n {
        let row = &mut dist[s * n..(s + 1) * n];
        row[s] = 0;
        queue.push_back(s as u32);
        while let Some(u) = queue.pop_front() {
            let d = row[u as usize];
            for &(w, _) in &adj[u as usize] {
                if row[w as usize] == u16::MAX {
                    row[w as usize] = d + 1;
                    queue.push_back(w);
                }
            }
        }
    }
    dist
}
