//! Initial placements: circuit interaction graphs, subgraph monomorphism
//! search, and the topgraph / wgtgraph / naive / empty mappings.

use std::collections::{BTreeMap, BTreeSet, HashSet};

use crate::arch::ArchGraph;
use crate::circuit::{Circuit, Frontier};
use crate::error::{Error, Result};
use crate::mapping::QubitMapping;

/// Undirected interaction graph of a circuit, weighted by gate multiplicity.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct CircuitGraph {
    pub num_qubits: usize,
    weights: BTreeMap<(u32, u32), u32>,
}

impl CircuitGraph {
    pub fn new(circuit: &Circuit) -> Self {
        let mut weights = BTreeMap::new();
        for g in &circuit.gates {
            *weights.entry(g.pair()).or_insert(0) += 1;
        }
        CircuitGraph {
            num_qubits: circuit.num_qubits,
            weights,
        }
    }

    /// Edges as `(min, max)` pairs in lexicographic order.
    pub fn edges(&self) -> Vec<(u32, u32)> {
        self.weights.keys().copied().collect()
    }

    pub fn weight(&self, a: u32, b: u32) -> u32 {
        self.weights.get(&(a.min(b), a.max(b))).copied().unwrap_or(0)
    }

    pub fn total_weight(&self) -> u32 {
        self.weights.values().sum()
    }

    /// Edges sorted by weight descending, ties lexicographic.
    pub fn edges_by_weight(&self) -> Vec<((u32, u32), u32)> {
        let mut v: Vec<_> = self.weights.iter().map(|(&e, &w)| (e, w)).collect();
        v.sort_by(|a, b| b.1.cmp(&a.1).then(a.0.cmp(&b.0)));
        v
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct EmbedBudget {
    pub max_backtrack_nodes: u64,
}

impl Default for EmbedBudget {
    fn default() -> Self {
        EmbedBudget {
            max_backtrack_nodes: 10_000_000,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum Embedding {
    /// `(pattern node, host node)` pairs, ascending by pattern node.
    Found(Vec<(u32, u32)>),
    NotFound,
    /// The search budget ran out before an answer was reached.
    Inconclusive,
}

impl Embedding {
    pub fn found(self) -> Option<Vec<(u32, u32)>> {
        match self {
            Embedding::Found(m) => Some(m),
            _ => None,
        }
    }
}

struct Pattern {
    ids: Vec<u32>,
    adj: Vec<Vec<usize>>,
}

impl Pattern {
    fn new(edges: &[(u32, u32)]) -> Self {
        let ids: Vec<u32> = edges
            .iter()
            .flat_map(|&(a, b)| [a, b])
            .collect::<BTreeSet<_>>()
            .into_iter()
            .collect();
        let local = |q: u32| ids.binary_search(&q).unwrap();
        let mut adj = vec![Vec::new(); ids.len()];
        for &(a, b) in edges {
            let (i, j) = (local(a), local(b));
            if i != j && !adj[i].contains(&j) {
                adj[i].push(j);
                adj[j].push(i);
            }
        }
        Pattern { ids, adj }
    }

    fn is_bipartite(&self) -> bool {
        two_colourable(self.adj.len(), |v| self.adj[v].iter().copied())
    }

    /// Max degree first, then greedily the node with most already-ordered
    /// neighbours (ties: higher degree, then lower id).
    fn match_order(&self) -> Vec<usize> {
        let n = self.ids.len();
        let mut placed = vec![false; n];
        let mut links = vec![0usize; n];
        let mut order = Vec::with_capacity(n);
        for _ in 0..n {
            let next = (0..n)
                .filter(|&v| !placed[v])
                .max_by(|&a, &b| {
                    (links[a], self.adj[a].len())
                        .cmp(&(links[b], self.adj[b].len()))
                        .then(b.cmp(&a))
                })
                .unwrap();
            placed[next] = true;
            order.push(next);
            for &w in &self.adj[next] {
                links[w] += 1;
            }
        }
        order
    }
}

fn two_colourable<I: Iterator<Item = usize>>(n: usize, neighbours: impl Fn(usize) -> I) -> bool {
    let mut colour = vec![u8::MAX; n];
    let mut stack = Vec::new();
    for s in 0..n {
        if colour[s] != u8::MAX {
            continue;
        }
        colour[s] = 0;
        stack.push(s);
        while let Some(v) = stack.pop() {
            for w in neighbours(v) {
                if colour[w] == u8::MAX {
                    colour[w] = 1 - colour[v];
                    stack.push(w);
                } else if colour[w] == colour[v] {
                    return false;
                }
            }
        }
    }
    true
}

struct Search<'a> {
    ag: &'a ArchGraph,
    pdeg: Vec<usize>,
    parent: Vec<Option<usize>>,
    back: Vec<Vec<usize>>,
    ahead: Vec<usize>,
    host: Vec<u32>,
    used: Vec<bool>,
    visited: u64,
    budget: u64,
}

enum Step {
    Done,
    Dead,
    OutOfBudget,
}

impl Search<'_> {
    fn run(&mut self, depth: usize) -> Step {
        if depth == self.host.len() {
            return Step::Done;
        }
        let candidates: Vec<u32> = match self.parent[depth] {
            Some(p) => self.ag.neighbors(self.host[p]).iter().map(|&(w, _)| w).collect(),
            None => (0..self.ag.num_nodes() as u32).collect(),
        };
        for h in candidates {
            if self.used[h as usize] || self.ag.degree(h) < self.pdeg[depth] {
                continue;
            }
            if !self.back[depth].iter().all(|&j| self.ag.is_edge(h, self.host[j])) {
                continue;
            }
            let spare = self
                .ag
                .neighbors(h)
                .iter()
                .filter(|&&(w, _)| !self.used[w as usize])
                .count();
            if spare < self.ahead[depth] {
                continue;
            }
            self.visited += 1;
            if self.visited > self.budget {
                return Step::OutOfBudget;
            }
            self.host[depth] = h;
            self.used[h as usize] = true;
            match self.run(depth + 1) {
                Step::Dead => {}
                other => return other,
            }
            self.used[h as usize] = false;
        }
        Step::Dead
    }
}

/// Finds an injective map of the pattern's nodes into `ag` sending every
/// pattern edge onto an `ag` edge. Non-edges are unconstrained.
pub fn subgraph_embed(edges: &[(u32, u32)], ag: &ArchGraph, budget: EmbedBudget) -> Embedding {
    let pattern = Pattern::new(edges);
    let n = pattern.ids.len();
    if n == 0 {
        return Embedding::Found(Vec::new());
    }
    let pattern_edges = pattern.adj.iter().map(Vec::len).sum::<usize>() / 2;
    let max_pdeg = pattern.adj.iter().map(Vec::len).max().unwrap_or(0);
    if n > ag.num_nodes() || pattern_edges > ag.edges().len() || max_pdeg > ag.max_degree() {
        return Embedding::NotFound;
    }
    let host_bipartite = two_colourable(ag.num_nodes(), |v| {
        ag.neighbors(v as u32).iter().map(|&(w, _)| w as usize)
    });
    if host_bipartite && !pattern.is_bipartite() {
        return Embedding::NotFound;
    }

    let order = pattern.match_order();
    let mut pos = vec![0usize; n];
    for (i, &v) in order.iter().enumerate() {
        pos[v] = i;
    }
    let mut back = vec![Vec::new(); n];
    let mut ahead = vec![0usize; n];
    let mut parent = vec![None; n];
    for (i, &v) in order.iter().enumerate() {
        let mut earlier: Vec<usize> = pattern.adj[v].iter().map(|&w| pos[w]).filter(|&j| j < i).collect();
        earlier.sort_unstable();
        parent[i] = earlier.first().copied();
        ahead[i] = pattern.adj[v].len() - earlier.len();
        back[i] = earlier;
    }
    let mut search = Search {
        ag,
        pdeg: order.iter().map(|&v| pattern.adj[v].len()).collect(),
        parent,
        back,
        ahead,
        host: vec![0; n],
        used: vec![false; ag.num_nodes()],
        visited: 0,
        budget: budget.max_backtrack_nodes,
    };
    match search.run(0) {
        Step::Done => {
            let mut out: Vec<(u32, u32)> = order
                .iter()
                .enumerate()
                .map(|(i, &v)| (pattern.ids[v], search.host[i]))
                .collect();
            out.sort_unstable();
            debug_assert!(is_embedding(edges, &out, ag));
            Embedding::Found(out)
        }
        Step::Dead => Embedding::NotFound,
        Step::OutOfBudget => Embedding::Inconclusive,
    }
}

/// Checks that `map` is injective and sends every edge onto an `ag` edge.
pub fn is_embedding(edges: &[(u32, u32)], map: &[(u32, u32)], ag: &ArchGraph) -> bool {
    let lookup: BTreeMap<u32, u32> = map.iter().copied().collect();
    let images: HashSet<u32> = lookup.values().copied().collect();
    if images.len() != lookup.len() {
        return false;
    }
    edges.iter().all(|&(a, b)| match (lookup.get(&a), lookup.get(&b)) {
        (Some(&x), Some(&y)) => ag.dist(x, y) == 1,
        _ => false,
    })
}

/// An initial mapping plus a record of how it was built.
#[derive(Clone, Debug)]
pub struct InitialMapping {
    pub mapping: QubitMapping,
    /// Gates (topgraph) whose interaction graph the mapping embeds.
    pub top_gates: Vec<usize>,
    /// Edges (wgtgraph) whose graph the mapping embeds.
    pub kept_edges: Vec<(u32, u32)>,
    /// Embedding calls that hit the budget and were counted as failures.
    pub inconclusive: usize,
}

/// Grows the largest front section of the circuit, one front-layer gate at a
/// time in index order, whose interaction graph still embeds in `ag`, and
/// returns an embedding of it.
pub fn topgraph_mapping(circuit: &Circuit, ag: &ArchGraph, budget: EmbedBudget) -> InitialMapping {
    let mut frontier = Frontier::from_circuit(circuit);
    let mut edges: BTreeSet<(u32, u32)> = BTreeSet::new();
    let mut current: Vec<(u32, u32)> = Vec::new();
    let mut top = Vec::new();
    // Embeddability only gets harder as the section grows, so a gate that
    // fails once is never retried.
    let mut failed: HashSet<usize> = HashSet::new();
    let mut inconclusive = 0;
    loop {
        let mut grew = false;
        let front: Vec<usize> = frontier.front().collect();
        for g in front {
            if failed.contains(&g) {
                continue;
            }
            let e = frontier.gate(g).pair();
            if !edges.contains(&e) {
                let mut trial: Vec<(u32, u32)> = edges.iter().copied().collect();
                trial.push(e);
                match subgraph_embed(&trial, ag, budget) {
                    Embedding::Found(m) => current = m,
                    Embedding::NotFound => {
                        failed.insert(g);
                        continue;
                    }
                    Embedding::Inconclusive => {
                        inconclusive += 1;
                        failed.insert(g);
                        continue;
                    }
                }
                edges.insert(e);
            }
            frontier.remove(g);
            top.push(g);
            grew = true;
            break;
        }
        if !grew {
            break;
        }
    }
    let mapping = QubitMapping::from_pairs(circuit.num_qubits, ag.num_nodes(), &current)
        .expect("embedding is injective");
    InitialMapping {
        mapping,
        top_gates: top,
        kept_edges: edges.into_iter().collect(),
        inconclusive,
    }
}

/// Adds circuit-graph edges heaviest first, keeping each one that leaves the
/// accumulated graph embeddable, and returns an embedding of the result.
pub fn wgtgraph_mapping(circuit: &Circuit, ag: &ArchGraph, budget: EmbedBudget) -> InitialMapping {
    let graph = CircuitGraph::new(circuit);
    let mut kept: Vec<(u32, u32)> = Vec::new();
    let mut current = Vec::new();
    let mut inconclusive = 0;
    for (e, _) in graph.edges_by_weight() {
        kept.push(e);
        match subgraph_embed(&kept, ag, budget) {
            Embedding::Found(m) => current = m,
            outcome => {
                if outcome == Embedding::Inconclusive {
                    inconclusive += 1;
                }
                kept.pop();
            }
        }
    }
    let mapping = QubitMapping::from_pairs(circuit.num_qubits, ag.num_nodes(), &current)
        .expect("embedding is injective");
    InitialMapping {
        mapping,
        top_gates: Vec::new(),
        kept_edges: kept,
        inconclusive,
    }
}

/// `q_i -> v_i` for every logical qubit.
pub fn naive_mapping(circuit: &Circuit, ag: &ArchGraph) -> Result<QubitMapping> {
    if circuit.num_qubits > ag.num_nodes() {
        return Err(Error::Capacity(format!(
            "{} logical qubits on {} physical qubits",
            circuit.num_qubits,
            ag.num_nodes()
        )));
    }
    let pairs: Vec<(u32, u32)> = (0..circuit.num_qubits as u32).map(|q| (q, q)).collect();
    QubitMapping::from_pairs(circuit.num_qubits, ag.num_nodes(), &pairs)
}

pub fn empty_mapping(circuit: &Circuit, ag: &ArchGraph) -> QubitMapping {
    QubitMapping::new(circuit.num_qubits, ag.num_nodes())
}
