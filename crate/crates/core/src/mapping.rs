//! Partial logical-to-physical qubit mappings and the operations the router
//! performs on them: SWAPs, physical distance, the executable-gate cascade
//! and lazy allocation of front-layer qubits.

use std::cmp::Reverse;
use std::collections::BinaryHeap;

use crate::arch::ArchGraph;
use crate::circuit::{Frontier, Gate};
use crate::error::{Error, Result};

/// Partial injective map from logical qubits to physical qubits.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct QubitMapping {
    forward: Vec<Option<u32>>,
    inverse: Vec<Option<u32>>,
    mapped: usize,
}

impl QubitMapping {
    /// The empty mapping.
    pub fn new(num_logical: usize, num_physical: usize) -> Self {
        QubitMapping {
            forward: vec![None; num_logical],
            inverse: vec![None; num_physical],
            mapped: 0,
        }
    }

    pub fn from_pairs(num_logical: usize, num_physical: usize, pairs: &[(u32, u32)]) -> Result<Self> {
        let mut m = QubitMapping::new(num_logical, num_physical);
        for &(q, v) in pairs {
            m.assign(q, v)?;
        }
        Ok(m)
    }

    pub fn num_logical(&self) -> usize {
        self.forward.len()
    }

    pub fn num_physical(&self) -> usize {
        self.inverse.len()
    }

    pub fn num_mapped(&self) -> usize {
        self.mapped
    }

    pub fn num_free(&self) -> usize {
        self.inverse.len() - self.mapped
    }

    #[inline]
    pub fn get(&self, q: u32) -> Option<u32> {
        self.forward[q as usize]
    }

    #[inline]
    pub fn logical_at(&self, v: u32) -> Option<u32> {
        self.inverse[v as usize]
    }

    #[inline]
    pub fn is_free(&self, v: u32) -> bool {
        self.inverse[v as usize].is_none()
    }

    /// `(logical, physical)` pairs in logical order.
    pub fn pairs(&self) -> impl Iterator<Item = (u32, u32)> + '_ {
        self.forward
            .iter()
            .enumerate()
            .filter_map(|(q, v)| v.map(|v| (q as u32, v)))
    }

    pub fn free_qubits(&self) -> impl Iterator<Item = u32> + '_ {
        self.inverse
            .iter()
            .enumerate()
            .filter(|(_, q)| q.is_none())
            .map(|(v, _)| v as u32)
    }

    pub fn occupied_qubits(&self) -> impl Iterator<Item = u32> + '_ {
        self.inverse
            .iter()
            .enumerate()
            .filter(|(_, q)| q.is_some())
            .map(|(v, _)| v as u32)
    }

    /// Places an unmapped logical qubit on a free physical qubit.
    pub fn assign(&mut self, q: u32, v: u32) -> Result<()> {
        if q as usize >= self.forward.len() || v as usize >= self.inverse.len() {
            return Err(Error::Mapping(format!("q{q} -> v{v} is out of range")));
        }
        if let Some(old) = self.forward[q as usize] {
            return Err(Error::Mapping(format!("q{q} is already on v{old}")));
        }
        if let Some(other) = self.inverse[v as usize] {
            return Err(Error::Mapping(format!("v{v} is already occupied by q{other}")));
        }
        self.forward[q as usize] = Some(v);
        self.inverse[v as usize] = Some(q);
        self.mapped += 1;
        Ok(())
    }

    /// Exchanges whatever sits on `u` and `v`; two free qubits are a no-op.
    #[inline]
    pub fn swap_in_place(&mut self, u: u32, v: u32) {
        let a = self.inverse[u as usize];
        let b = self.inverse[v as usize];
        self.inverse[u as usize] = b;
        self.inverse[v as usize] = a;
        if let Some(q) = a {
            self.forward[q as usize] = Some(v);
        }
        if let Some(q) = b {
            self.forward[q as usize] = Some(u);
        }
    }

    /// The mapping after a SWAP on edge `{u, v}`.
    pub fn apply_swap(&self, ag: &ArchGraph, u: u32, v: u32) -> Result<Self> {
        if !ag.is_edge(u, v) {
            return Err(Error::NotAnEdge(u, v));
        }
        let mut next = self.clone();
        next.swap_in_place(u, v);
        Ok(next)
    }

    /// Both endpoints mapped and adjacent.
    #[inline]
    pub fn satisfies(&self, ag: &ArchGraph, g: Gate) -> bool {
        match (self.get(g.control), self.get(g.target)) {
            (Some(a), Some(b)) => ag.is_edge(a, b),
            _ => false,
        }
    }

    /// Physical distance of a gate's qubits. When an endpoint is unmapped it
    /// is measured to the nearest free physical qubit instead.
    pub fn phys_dist(&self, ag: &ArchGraph, g: Gate) -> Result<u32> {
        match (self.get(g.control), self.get(g.target)) {
            (Some(a), Some(b)) => Ok(ag.dist(a, b)),
            (Some(a), None) | (None, Some(a)) => self
                .nearest_free(ag, a)
                .map(|(_, d)| d)
                .ok_or_else(|| Error::Capacity("no free physical qubit".into())),
            (None, None) => self
                .closest_free_distance(ag)
                .ok_or_else(|| Error::Capacity("fewer than two free physical qubits".into())),
        }
    }

    /// Nearest free physical qubit to `v` and its distance; ties go to the smallest id.
    pub fn nearest_free(&self, ag: &ArchGraph, v: u32) -> Option<(u32, u32)> {
        let mut best: Option<(u32, u32)> = None;
        for f in self.free_qubits() {
            let d = ag.dist(v, f);
            if best.is_none_or(|(_, bd)| d < bd) {
                best = Some((f, d));
                if d == 1 {
                    break;
                }
            }
        }
        best
    }

    fn closest_free_distance(&self, ag: &ArchGraph) -> Option<u32> {
        if self.num_free() < 2 {
            return None;
        }
        if ag.edges().iter().any(|&(a, b)| self.is_free(a) && self.is_free(b)) {
            return Some(1);
        }
        let free: Vec<u32> = self.free_qubits().collect();
        let mut best = u32::MAX;
        for (i, &a) in free.iter().enumerate() {
            for &b in &free[i + 1..] {
                best = best.min(ag.dist(a, b));
            }
        }
        Some(best)
    }

    /// Closest pair of distinct free qubits. Ties prefer the pair nearest to
    /// the occupied region (smallest summed distance), then lexicographic order.
    fn closest_free_pair(&self, ag: &ArchGraph) -> Option<(u32, u32)> {
        let free: Vec<u32> = self.free_qubits().collect();
        let occupied: Vec<u32> = self.occupied_qubits().collect();
        let pull = |v: u32| occupied.iter().map(|&o| ag.dist(v, o) as u64).sum::<u64>();
        let pulls: Vec<u64> = free.iter().map(|&v| pull(v)).collect();
        let mut best: Option<((u32, u64, u32, u32), (u32, u32))> = None;
        for i in 0..free.len() {
            for j in i + 1..free.len() {
                let (a, b) = (free[i], free[j]);
                let key = (ag.dist(a, b), pulls[i] + pulls[j], a, b);
                if best.is_none_or(|(bk, _)| key < bk) {
                    best = Some((key, (a, b)));
                }
            }
        }
        best.map(|(_, p)| p)
    }

    pub(crate) fn check_invariants(&self) {
        let mut count = 0;
        for (q, v) in self.forward.iter().enumerate() {
            if let Some(v) = v {
                assert_eq!(self.inverse[*v as usize], Some(q as u32), "mapping lost injectivity");
                count += 1;
            }
        }
        for (v, q) in self.inverse.iter().enumerate() {
            if let Some(q) = q {
                assert_eq!(self.forward[*q as usize], Some(v as u32), "mapping lost injectivity");
            }
        }
        assert_eq!(count, self.mapped);
    }
}

/// Gates the mapping can execute right now, in removal order, without
/// touching the frontier. A gate counts once it and all of its remaining
/// ancestors are satisfied.
pub fn executable_gates(tau: &QubitMapping, ag: &ArchGraph, frontier: &Frontier) -> Vec<usize> {
    let mut out = Vec::new();
    cascade(tau, ag, frontier, frontier.front(), &mut Cascade::default(), |g| out.push(g));
    out
}

pub fn executable_count(tau: &QubitMapping, ag: &ArchGraph, frontier: &Frontier) -> usize {
    let mut n = 0;
    cascade(tau, ag, frontier, frontier.front(), &mut Cascade::default(), |_| n += 1);
    n
}

/// Buffers reused across cascade runs.
#[derive(Default)]
pub(crate) struct Cascade {
    heap: BinaryHeap<Reverse<usize>>,
    // Children reached so far and how many of their parents have gone.
    hits: Vec<(usize, u32)>,
}

/// Same as [`executable_count`] with the front layer supplied by the caller.
pub(crate) fn executable_count_with(
    tau: &QubitMapping,
    ag: &ArchGraph,
    frontier: &Frontier,
    front: &[usize],
    buf: &mut Cascade,
) -> usize {
    let mut n = 0;
    cascade(tau, ag, frontier, front.iter().copied(), buf, |_| n += 1);
    n
}

fn cascade(
    tau: &QubitMapping,
    ag: &ArchGraph,
    frontier: &Frontier,
    front: impl Iterator<Item = usize>,
    buf: &mut Cascade,
    mut visit: impl FnMut(usize),
) {
    let dag = frontier.dag();
    let Cascade { heap, hits } = buf;
    heap.clear();
    hits.clear();
    heap.extend(front.filter(|&g| tau.satisfies(ag, dag.gate(g))).map(Reverse));
    while let Some(Reverse(g)) = heap.pop() {
        visit(g);
        for c in dag.children(g) {
            let h = match hits.iter_mut().find(|(id, _)| *id == c) {
                Some((_, h)) => {
                    *h += 1;
                    *h
                }
                None => {
                    hits.push((c, 1));
                    1
                }
            };
            if h == frontier.live_indegree(c) && tau.satisfies(ag, dag.gate(c)) {
                heap.push(Reverse(c));
            }
        }
    }
}

/// Executes every executable gate on the frontier and returns them in the
/// order they were removed (smallest ready index first).
pub fn commit_executable(tau: &QubitMapping, ag: &ArchGraph, frontier: &mut Frontier) -> Vec<usize> {
    let mut heap: BinaryHeap<Reverse<usize>> = frontier
        .front()
        .filter(|&g| tau.satisfies(ag, frontier.gate(g)))
        .map(Reverse)
        .collect();
    let mut out = Vec::new();
    while let Some(Reverse(g)) = heap.pop() {
        frontier.remove(g);
        out.push(g);
        let children: Vec<usize> = frontier.dag().children(g).collect();
        for c in children {
            if frontier.in_front(c) && tau.satisfies(ag, frontier.gate(c)) {
                heap.push(Reverse(c));
            }
        }
    }
    out
}

/// Allocates the unmapped qubits of front-layer gates, visiting gates in
/// index order. Returns the new `(logical, physical)` assignments.
pub fn extend_for_front(
    tau: &mut QubitMapping,
    ag: &ArchGraph,
    frontier: &Frontier,
) -> Result<Vec<(u32, u32)>> {
    let mut added = Vec::new();
    for g in frontier.front() {
        let gate = frontier.gate(g);
        match (tau.get(gate.control), tau.get(gate.target)) {
            (Some(_), Some(_)) => {}
            (Some(a), None) | (None, Some(a)) => {
                let q = if tau.get(gate.control).is_none() { gate.control } else { gate.target };
                let (f, _) = tau
                    .nearest_free(ag, a)
                    .ok_or_else(|| Error::Capacity(format!("no free physical qubit for q{q}")))?;
                tau.assign(q, f)?;
                added.push((q, f));
            }
            (None, None) => {
                let (a, b) = tau.closest_free_pair(ag).ok_or_else(|| {
                    Error::Capacity(format!("no free pair for q{} and q{}", gate.control, gate.target))
                })?;
                tau.assign(gate.control, a)?;
                tau.assign(gate.target, b)?;
                added.push((gate.control, a));
                added.push((gate.target, b));
            }
        }
    }
    if cfg!(debug_assertions) {
        tau.check_invariants();
    }
    Ok(added)
}
