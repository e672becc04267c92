//! Filtered depth-limited SWAP search and the routing loop.

use std::cmp::Ordering;
use std::time::{Duration, Instant};

use num_rational::Ratio;
#[cfg(feature = "parallel")]
use rayon::prelude::*;

use crate::arch::ArchGraph;
use crate::circuit::{Circuit, Frontier, Gate};
use crate::error::{Error, Result};
use crate::mapping::{commit_executable, executable_count, executable_count_with, extend_for_front, Cascade, QubitMapping};

/// A sequence of SWAPs, each an architecture edge `(u, v)` with `u < v`.
#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Action {
    pub swaps: Vec<(u32, u32)>,
}

impl Action {
    pub fn new(swaps: Vec<(u32, u32)>) -> Self {
        let swaps = swaps.into_iter().map(|(a, b)| (a.min(b), a.max(b))).collect();
        Action { swaps }
    }

    pub fn len(&self) -> usize {
        self.swaps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.swaps.is_empty()
    }

    fn apply(&self, tau: &mut QubitMapping) {
        for &(u, v) in &self.swaps {
            tau.swap_in_place(u, v);
        }
    }

}

/// Which logical qubits each SWAP of an action must touch.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum QFilter {
    /// Any edge with at least one occupied endpoint.
    None,
    /// Every SWAP touches a front-layer qubit.
    Q0,
    /// First SWAP touches a front-layer qubit, later ones a layer-1 qubit.
    Q01,
    /// First SWAP touches a front-layer qubit, later ones a layer-0 or layer-1 qubit.
    Q01x,
}

/// Rejects actions in which some SWAP makes the discounted distance to the
/// first `s + 1` layers strictly worse.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct DFilter {
    pub s: usize,
    pub gamma: f64,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum ValueFn {
    /// Gates executed per inserted CNOT.
    Gates,
    /// Discounted distance reduction per inserted CNOT.
    Distance { s: usize, gamma: f64 },
}

#[derive(Clone, Debug, PartialEq)]
pub struct SearchConfig {
    pub k: usize,
    pub q_filter: QFilter,
    pub d_filter: Option<DFilter>,
    pub value_fn: ValueFn,
    /// Maximum fallback SWAPs; `None` means `|V| * diameter * m`.
    pub fallback_cap: Option<u64>,
    /// Evaluate candidate actions on the rayon pool (needs the `parallel` feature).
    pub parallel: bool,
    pub timeout: Option<Duration>,
}

impl Default for SearchConfig {
    fn default() -> Self {
        SearchConfig {
            k: 3,
            q_filter: QFilter::Q01,
            d_filter: Some(DFilter { s: 0, gamma: 1.0 }),
            value_fn: ValueFn::Gates,
            fallback_cap: None,
            parallel: true,
            timeout: None,
        }
    }
}

impl SearchConfig {
    pub fn validate(&self) -> Result<()> {
        if self.k == 0 {
            return Err(Error::Config("k must be at least 1".into()));
        }
        let gammas = [
            self.d_filter.map(|d| d.gamma),
            match self.value_fn {
                ValueFn::Distance { gamma, .. } => Some(gamma),
                ValueFn::Gates => None,
            },
        ];
        for g in gammas.into_iter().flatten() {
            if !(0.0..=1.0).contains(&g) {
                return Err(Error::Config(format!("discount {g} is outside [0, 1]")));
            }
        }
        Ok(())
    }

    fn levels_needed(&self) -> usize {
        let q = match self.q_filter {
            QFilter::None => 0,
            QFilter::Q0 => 1,
            QFilter::Q01 | QFilter::Q01x => 2,
        };
        let d = self.d_filter.map_or(0, |d| d.s + 1);
        let v = match self.value_fn {
            ValueFn::Gates => 0,
            ValueFn::Distance { s, .. } => s + 1,
        };
        q.max(d).max(v).max(1)
    }
}

/// The value of an action under the configured value function.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Value {
    Gates(Ratio<u64>),
    Distance(f64),
}

impl Value {
    fn positive(&self) -> bool {
        match *self {
            Value::Gates(r) => *r.numer() > 0,
            Value::Distance(d) => d > 0.0,
        }
    }

    fn cmp_same(&self, other: &Value) -> Ordering {
        match (self, other) {
            (Value::Gates(a), Value::Gates(b)) => a.cmp(b),
            (Value::Distance(a), Value::Distance(b)) => a.total_cmp(b),
            _ => unreachable!("values from one value function"),
        }
    }
}

/// Per-step view of the remaining circuit shared by enumeration and scoring.
pub struct StepView<'a> {
    ag: &'a ArchGraph,
    frontier: &'a Frontier,
    front: Vec<usize>,
    layers: Vec<Vec<Gate>>,
    in_q0: Vec<bool>,
    in_q1: Vec<bool>,
}

impl<'a> StepView<'a> {
    pub fn new(ag: &'a ArchGraph, frontier: &'a Frontier, num_qubits: usize, levels: usize) -> Self {
        let layers: Vec<Vec<Gate>> = frontier
            .layers(levels.max(2))
            .into_iter()
            .map(|l| l.into_iter().map(|g| frontier.gate(g)).collect())
            .collect();
        let mark = |layer: Option<&Vec<Gate>>| {
            let mut v = vec![false; num_qubits];
            for g in layer.into_iter().flatten() {
                v[g.control as usize] = true;
                v[g.target as usize] = true;
            }
            v
        };
        StepView {
            ag,
            frontier,
            front: frontier.front().collect(),
            in_q0: mark(layers.first()),
            in_q1: mark(layers.get(1)),
            layers,
        }
    }

    /// Sum of physical distances of each of layers `0..=s`.
    fn level_sums(&self, tau: &QubitMapping, s: usize) -> Vec<u64> {
        self.layers
            .iter()
            .take(s + 1)
            .map(|layer| {
                layer
                    .iter()
                    .map(|&g| tau.phys_dist(self.ag, g).expect("capacity is checked before routing") as u64)
                    .sum()
            })
            .collect()
    }
}

/// Gates of the first few layers, indexed so a SWAP only revisits the gates
/// it can change. A gate with an unmapped qubit is measured against the free
/// set, so it also changes whenever a SWAP moves a free qubit.
struct SumIndex {
    levels: usize,
    /// Per logical qubit: (level, gate, has an unmapped qubit).
    by_qubit: Vec<Vec<(usize, Gate, bool)>>,
    volatile: Vec<(usize, Gate)>,
}

impl SumIndex {
    fn new(view: &StepView, tau: &QubitMapping, levels: usize) -> Self {
        let mut by_qubit = vec![Vec::new(); tau.num_logical()];
        let mut volatile = Vec::new();
        for (l, layer) in view.layers.iter().take(levels).enumerate() {
            for &g in layer {
                let unmapped = tau.get(g.control).is_none() || tau.get(g.target).is_none();
                for q in [g.control, g.target] {
                    if tau.get(q).is_some() {
                        by_qubit[q as usize].push((l, g, unmapped));
                    }
                }
                if unmapped {
                    volatile.push((l, g));
                }
            }
        }
        SumIndex { levels: levels.min(view.layers.len()), by_qubit, volatile }
    }

    /// Adds the distance of every gate a SWAP of `qa` and `qb` can affect.
    fn affected(&self, ag: &ArchGraph, tau: &QubitMapping, qa: Option<u32>, qb: Option<u32>, acc: &mut [u64]) {
        let dist = |g: Gate| tau.phys_dist(ag, g).expect("capacity is checked before routing") as u64;
        let free_moved = qa.is_none() || qb.is_none();
        for (q, other) in [(qa, None), (qb, qa)] {
            let Some(q) = q else { continue };
            for &(l, g, unmapped) in &self.by_qubit[q as usize] {
                let counted = other.is_some_and(|o| g.control == o || g.target == o);
                if !counted && !(free_moved && unmapped) {
                    acc[l] += dist(g);
                }
            }
        }
        if free_moved {
            for &(l, g) in &self.volatile {
                acc[l] += dist(g);
            }
        }
    }
}

fn head(v: &[u64], s: usize) -> &[u64] {
    &v[..(s + 1).min(v.len())]
}

/// `sum_l gamma^l * (a_l - b_l)`; exactly zero when every level agrees.
fn weighted_diff(a: &[u64], b: &[u64], gamma: f64) -> f64 {
    let mut total = 0.0;
    let mut w = 1.0;
    for (x, y) in a.iter().zip(b) {
        let d = *x as i64 - *y as i64;
        if d != 0 {
            total += w * d as f64;
        }
        w *= gamma;
    }
    total
}

/// Discounted distance from `tau` to the first `s + 1` layers.
pub fn rhat(tau: &QubitMapping, frontier: &Frontier, ag: &ArchGraph, s: usize, gamma: f64) -> Result<f64> {
    let mut total = 0.0;
    let mut w = 1.0;
    for layer in frontier.layers(s + 1) {
        let mut sum = 0u64;
        for g in layer {
            sum += tau.phys_dist(ag, frontier.gate(g))? as u64;
        }
        total += w * sum as f64;
        w *= gamma;
    }
    Ok(total)
}

/// Gates executable after the action, over the number of CNOTs it costs.
pub fn gval(tau: &QubitMapping, action: &Action, frontier: &Frontier, ag: &ArchGraph) -> Ratio<u64> {
    let mut t = tau.clone();
    action.apply(&mut t);
    Ratio::new(executable_count(&t, ag, frontier) as u64, 3 * action.len() as u64)
}

/// Reduction of the discounted distance over the number of CNOTs the action costs.
pub fn dval(
    tau: &QubitMapping,
    action: &Action,
    frontier: &Frontier,
    ag: &ArchGraph,
    s: usize,
    gamma: f64,
) -> Result<f64> {
    let view = StepView::new(ag, frontier, tau.num_logical(), s + 1);
    let before = view.level_sums(tau, s);
    let mut t = tau.clone();
    action.apply(&mut t);
    let after = view.level_sums(&t, s);
    Ok(weighted_diff(&before, &after, gamma) / (3 * action.len()) as f64)
}

/// All filtered actions of length `1..=k`, shortest first and then in
/// lexicographic edge order.
pub fn enumerate_actions(tau: &QubitMapping, frontier: &Frontier, ag: &ArchGraph, config: &SearchConfig) -> Vec<Action> {
    let view = StepView::new(ag, frontier, tau.num_logical(), config.levels_needed());
    let mut buckets: Vec<Vec<Action>> = vec![Vec::new(); config.k];
    let mut walker = Walker::new(&view, config, tau);
    for e in walker.top_edges() {
        walker.subtree(e, &mut |edges, _, _| {
            buckets[edges.len() - 1].push(Action {
                swaps: edges.iter().map(|&id| ag.edge(id)).collect(),
            })
        });
    }
    buckets.into_iter().flatten().collect()
}

fn allowed(view: &StepView, filter: QFilter, depth: usize, q: u32) -> bool {
    let q = q as usize;
    match (filter, depth) {
        (QFilter::None, _) => true,
        (QFilter::Q0, _) | (QFilter::Q01 | QFilter::Q01x, 0) => view.in_q0[q],
        (QFilter::Q01, _) => view.in_q1[q],
        (QFilter::Q01x, _) => view.in_q0[q] || view.in_q1[q],
    }
}

/// Depth-first walk over the filtered actions, applying SWAPs to one
/// mapping in place. Buffers are indexed by depth.
struct Walker<'a> {
    view: &'a StepView<'a>,
    config: &'a SearchConfig,
    tau: QubitMapping,
    prefix: Vec<u32>,
    cands: Vec<Vec<u32>>,
    marks: Vec<bool>,
    /// Level sums before the SWAP at each depth, plus one row for the leaf,
    /// `levels` entries per row.
    sums: Vec<u64>,
    levels: usize,
    index: Option<SumIndex>,
    old: Vec<u64>,
    new: Vec<u64>,
}

impl<'a> Walker<'a> {
    fn new(view: &'a StepView<'a>, config: &'a SearchConfig, tau: &QubitMapping) -> Self {
        let k = config.k;
        let filter_levels = config.d_filter.map_or(0, |d| d.s + 1);
        let value_levels = match config.value_fn {
            ValueFn::Distance { s, .. } => s + 1,
            ValueFn::Gates => 0,
        };
        let wanted = filter_levels.max(value_levels);
        let index = (wanted > 0).then(|| SumIndex::new(view, tau, wanted));
        let levels = index.as_ref().map_or(0, |i| i.levels);
        let mut sums = vec![0; (k + 1) * levels];
        if levels > 0 {
            sums[..levels].copy_from_slice(&view.level_sums(tau, levels - 1));
        }
        Walker {
            view,
            config,
            tau: tau.clone(),
            prefix: Vec::with_capacity(k),
            cands: vec![Vec::new(); k],
            marks: vec![false; view.ag.edges().len()],
            sums,
            levels,
            index,
            old: vec![0; levels],
            new: vec![0; levels],
        }
    }

    fn row(&self, depth: usize) -> &[u64] {
        &self.sums[depth * self.levels..(depth + 1) * self.levels]
    }

    /// Edge ids touching an allowed qubit, ascending.
    fn candidates(&mut self, depth: usize) {
        let mut edges = std::mem::take(&mut self.cands[depth]);
        edges.clear();
        let (mut lo, mut hi) = (u32::MAX, 0);
        for (q, v) in self.tau.pairs() {
            if allowed(self.view, self.config.q_filter, depth, q) {
                for &(_, e) in self.view.ag.neighbors(v) {
                    self.marks[e as usize] = true;
                    lo = lo.min(e);
                    hi = hi.max(e);
                }
            }
        }
        if lo <= hi {
            for e in lo..=hi {
                if std::mem::take(&mut self.marks[e as usize]) {
                    edges.push(e);
                }
            }
        }
        self.cands[depth] = edges;
    }

    fn top_edges(&mut self) -> Vec<u32> {
        self.candidates(0);
        self.cands[0].clone()
    }

    /// Visits every action starting with edge `e`, in enumeration order,
    /// along with its level sums (empty when no D filter or D value is set).
    fn subtree(&mut self, e: u32, visit: &mut impl FnMut(&[u32], &QubitMapping, &[u64])) {
        self.step(e, visit);
    }

    fn swap(&mut self, depth: usize, u: u32, v: u32) {
        let Some(index) = &self.index else {
            self.tau.swap_in_place(u, v);
            return;
        };
        let ag = self.view.ag;
        let (qa, qb) = (self.tau.logical_at(u), self.tau.logical_at(v));
        self.old.fill(0);
        self.new.fill(0);
        index.affected(ag, &self.tau, qa, qb, &mut self.old);
        self.tau.swap_in_place(u, v);
        index.affected(ag, &self.tau, qa, qb, &mut self.new);
        let n = self.levels;
        let (before, after) = self.sums.split_at_mut((depth + 1) * n);
        let before = &before[depth * n..];
        for l in 0..n {
            after[l] = before[l] + self.new[l] - self.old[l];
        }
    }

    fn step(&mut self, e: u32, visit: &mut impl FnMut(&[u32], &QubitMapping, &[u64])) {
        let depth = self.prefix.len();
        if self.prefix.last() == Some(&e) {
            return;
        }
        let (u, v) = self.view.ag.edge(e);
        self.swap(depth, u, v);
        if let Some(d) = self.config.d_filter {
            if weighted_diff(head(self.row(depth + 1), d.s), head(self.row(depth), d.s), d.gamma) > 0.0 {
                self.tau.swap_in_place(u, v);
                return;
            }
        }
        self.prefix.push(e);
        let n = self.levels;
        visit(&self.prefix, &self.tau, &self.sums[(depth + 1) * n..(depth + 2) * n]);
        if depth + 1 < self.config.k {
            self.candidates(depth + 1);
            let cands = std::mem::take(&mut self.cands[depth + 1]);
            for &next in &cands {
                self.step(next, visit);
            }
            self.cands[depth + 1] = cands;
        }
        self.prefix.pop();
        self.tau.swap_in_place(u, v);
    }
}

/// Enumeration position: length, rank of the first edge, then order of
/// discovery within that first edge's subtree.
type Key = (usize, usize, usize);

#[derive(Clone)]
struct Best {
    value: Value,
    key: Key,
    edges: Vec<u32>,
}

fn better(a: Option<Best>, b: Option<Best>) -> Option<Best> {
    match (a, b) {
        (Some(a), Some(b)) => {
            let ord = a.value.cmp_same(&b.value).then(b.key.cmp(&a.key));
            Some(if ord == Ordering::Less { b } else { a })
        }
        (a, None) => a,
        (None, b) => b,
    }
}

/// Best action in the subtree of the `rank`-th top-level edge.
fn best_in_subtree(walker: &mut Walker, rank: usize, e: u32, cascade: &mut Cascade) -> Option<Best> {
    let view = walker.view;
    let value_fn = walker.config.value_fn;
    let base = walker.row(0).to_vec();
    let mut seen = vec![0usize; walker.config.k];
    let mut best: Option<Best> = None;
    walker.subtree(e, &mut |edges, tau, sums| {
        let len = edges.len();
        let cost = 3 * len as u64;
        let value = match value_fn {
            ValueFn::Gates => Value::Gates(Ratio::new(
                executable_count_with(tau, view.ag, view.frontier, &view.front, cascade) as u64,
                cost,
            )),
            ValueFn::Distance { s, gamma } => {
                Value::Distance(weighted_diff(head(&base, s), head(sums, s), gamma) / cost as f64)
            }
        };
        let key = (len, rank, seen[len - 1]);
        seen[len - 1] += 1;
        let wins = match &best {
            None => true,
            Some(b) => value.cmp_same(&b.value).then(b.key.cmp(&key)) == Ordering::Greater,
        };
        if wins {
            best = Some(Best { value, key, edges: edges.to_vec() });
        }
    });
    best
}

/// The best action with a positive value, ties going to the earliest in
/// enumeration order. `None` means the caller should fall back.
pub fn select_action(
    tau: &QubitMapping,
    frontier: &Frontier,
    ag: &ArchGraph,
    config: &SearchConfig,
) -> Option<(Action, Value)> {
    let view = StepView::new(ag, frontier, tau.num_logical(), config.levels_needed());
    select_in(&view, tau, config)
}

fn select_in(view: &StepView, tau: &QubitMapping, config: &SearchConfig) -> Option<(Action, Value)> {
    let top = Walker::new(view, config, tau).top_edges();
    let best = if config.parallel && cfg!(feature = "parallel") {
        best_parallel(view, config, tau, &top)
    } else {
        let mut walker = Walker::new(view, config, tau);
        let mut cascade = Cascade::default();
        top.iter()
            .enumerate()
            .map(|(rank, &e)| best_in_subtree(&mut walker, rank, e, &mut cascade))
            .fold(None, better)
    }?;
    if !best.value.positive() {
        return None;
    }
    let swaps = best.edges.iter().map(|&e| view.ag.edge(e)).collect();
    Some((Action { swaps }, best.value))
}

#[cfg(feature = "parallel")]
fn best_parallel(view: &StepView, config: &SearchConfig, tau: &QubitMapping, top: &[u32]) -> Option<Best> {
    top.par_iter()
        .enumerate()
        .map_init(
            || (Walker::new(view, config, tau), Cascade::default()),
            |(walker, cascade), (rank, &e)| best_in_subtree(walker, rank, e, cascade),
        )
        .reduce(|| None, better)
}

#[cfg(not(feature = "parallel"))]
fn best_parallel(view: &StepView, config: &SearchConfig, tau: &QubitMapping, top: &[u32]) -> Option<Best> {
    let mut walker = Walker::new(view, config, tau);
    let mut cascade = Cascade::default();
    top.iter()
        .enumerate()
        .map(|(rank, &e)| best_in_subtree(&mut walker, rank, e, &mut cascade))
        .fold(None, better)
}

/// Smallest distance between the images of a front-layer gate, and the
/// earliest gate attaining it. Gates with an unmapped qubit are ignored.
pub fn front_min_distance(tau: &QubitMapping, frontier: &Frontier, ag: &ArchGraph) -> Option<(u32, usize)> {
    let mut best: Option<(u32, usize)> = None;
    for g in frontier.front() {
        let gate = frontier.gate(g);
        if let (Some(a), Some(b)) = (tau.get(gate.control), tau.get(gate.target)) {
            let d = ag.dist(a, b);
            if best.is_none_or(|(bd, _)| d < bd) {
                best = Some((d, g));
            }
        }
    }
    best
}

/// The lexicographically smallest edge at either end of the closest front
/// gate that lies on a shortest path between its images.
pub fn fallback_swap(tau: &QubitMapping, frontier: &Frontier, ag: &ArchGraph) -> Option<(u32, u32)> {
    let (d, g) = front_min_distance(tau, frontier, ag)?;
    if d <= 1 {
        return None;
    }
    let gate = frontier.gate(g);
    let (a, b) = (tau.get(gate.control)?, tau.get(gate.target)?);
    let mut best: Option<u32> = None;
    for (from, to) in [(a, b), (b, a)] {
        for &(w, e) in ag.neighbors(from) {
            if ag.dist(w, to) + 1 == d && best.is_none_or(|x| e < x) {
                best = Some(e);
            }
        }
    }
    best.map(|e| ag.edge(e))
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Allocation {
    /// Number of physical gates emitted before the allocation.
    pub t: usize,
    pub q: u32,
    pub v: u32,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct SwapEvent {
    /// Index of the first of the three CNOTs in the physical circuit.
    pub t: usize,
    pub u: u32,
    pub v: u32,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct FallbackEvent {
    pub t: usize,
    pub before: u32,
    pub after: u32,
}

#[derive(Clone, Debug)]
pub struct TransformResult {
    pub physical: Circuit,
    pub initial_map: QubitMapping,
    pub final_map: QubitMapping,
    pub allocations: Vec<Allocation>,
    pub swaps: Vec<SwapEvent>,
    pub fallbacks: Vec<FallbackEvent>,
    pub added_cnots: usize,
    pub runtime: Duration,
}

impl TransformResult {
    /// Output CNOTs over input CNOTs; `None` for an empty input.
    pub fn r_cnot(&self) -> Option<Ratio<u64>> {
        let input = (self.physical.len() - self.added_cnots) as u64;
        (input > 0).then(|| Ratio::new(self.physical.len() as u64, input))
    }
}

fn emit_swap(gates: &mut Vec<Gate>, swaps: &mut Vec<SwapEvent>, u: u32, v: u32) {
    let (u, v) = (u.min(v), u.max(v));
    swaps.push(SwapEvent { t: gates.len(), u, v });
    gates.push(Gate::new(u, v));
    gates.push(Gate::new(v, u));
    gates.push(Gate::new(u, v));
}

/// Routes `circuit` onto `ag` starting from `initial`, which may be partial.
pub fn transform(
    circuit: &Circuit,
    ag: &ArchGraph,
    initial: &QubitMapping,
    config: &SearchConfig,
) -> Result<TransformResult> {
    let start = Instant::now();
    config.validate()?;
    if initial.num_logical() != circuit.num_qubits || initial.num_physical() != ag.num_nodes() {
        return Err(Error::Mapping(format!(
            "initial mapping is {}x{} but the problem is {}x{}",
            initial.num_logical(),
            initial.num_physical(),
            circuit.num_qubits,
            ag.num_nodes()
        )));
    }
    let mut needed = circuit.active_qubits();
    needed.extend(initial.pairs().map(|(q, _)| q));
    if needed.len() > ag.num_nodes() {
        return Err(Error::Capacity(format!(
            "{} logical qubits need placing on {} physical qubits",
            needed.len(),
            ag.num_nodes()
        )));
    }
    let deadline = config.timeout.map(|t| start + t);
    let m = circuit.len();
    let cap = config
        .fallback_cap
        .unwrap_or((ag.num_nodes() as u64 * ag.diameter() as u64 * m as u64).max(1));

    let mut frontier = Frontier::from_circuit(circuit);
    let mut tau = initial.clone();
    let mut gates = Vec::with_capacity(m * 2);
    let mut allocations = Vec::new();
    let mut swaps = Vec::new();
    let mut fallbacks = Vec::new();
    let levels = config.levels_needed();
    loop {
        if deadline.is_some_and(|d| Instant::now() > d) {
            return Err(Error::Timeout {
                routed: m - frontier.remaining(),
                total: m,
            });
        }
        for (q, v) in extend_for_front(&mut tau, ag, &frontier)? {
            allocations.push(Allocation { t: gates.len(), q, v });
        }
        let done = commit_executable(&tau, ag, &mut frontier);
        for &g in &done {
            let gate = frontier.gate(g);
            gates.push(Gate::new(tau.get(gate.control).unwrap(), tau.get(gate.target).unwrap()));
        }
        if frontier.is_empty() {
            break;
        }
        if !done.is_empty() {
            // New front gates may need allocating before the search.
            continue;
        }
        let view = StepView::new(ag, &frontier, circuit.num_qubits, levels);
        if let Some((action, _)) = select_in(&view, &tau, config) {
            for &(u, v) in &action.swaps {
                emit_swap(&mut gates, &mut swaps, u, v);
                tau.swap_in_place(u, v);
            }
            continue;
        }
        if fallbacks.len() as u64 >= cap {
            return Err(Error::NonTermination {
                uses: fallbacks.len() as u64,
                cap,
                state: format!(
                    "{} of {m} gates left, front layer {:?}, mapping {:?}",
                    frontier.remaining(),
                    frontier.front().collect::<Vec<_>>(),
                    tau.pairs().collect::<Vec<_>>()
                ),
            });
        }
        let before = front_min_distance(&tau, &frontier, ag).map_or(0, |(d, _)| d);
        let (u, v) = fallback_swap(&tau, &frontier, ag)
            .expect("front layer is mapped and has no executable gate");
        let t = gates.len();
        emit_swap(&mut gates, &mut swaps, u, v);
        tau.swap_in_place(u, v);
        let after = front_min_distance(&tau, &frontier, ag).map_or(0, |(d, _)| d);
        fallbacks.push(FallbackEvent { t, before, after });
    }

    let physical = Circuit::new(ag.num_nodes(), gates)?;
    debug_assert!(physical.gates.iter().all(|g| ag.is_edge(g.control, g.target)));
    Ok(TransformResult {
        added_cnots: 3 * swaps.len(),
        physical,
        initial_map: initial.clone(),
        final_map: tau,
        allocations,
        swaps,
        fallbacks,
        runtime: start.elapsed(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::circuit::parse_circuit;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn fig3() -> Circuit {
        parse_circuit(include_str!("../../../data/circuits/fig3.qasm")).unwrap()
    }

    fn tau1() -> QubitMapping {
        QubitMapping::from_pairs(4, 20, &[(0, 2), (1, 0), (2, 10), (3, 6)]).unwrap()
    }

    fn unfiltered(k: usize) -> SearchConfig {
        SearchConfig {
            k,
            q_filter: QFilter::None,
            d_filter: None,
            ..SearchConfig::default()
        }
    }

    #[test]
    fn worked_example_unfiltered() {
        let ag = ArchGraph::tokyo();
        let f = Frontier::from_circuit(&fig3());
        let cfg = unfiltered(3);
        let actions = enumerate_actions(&tau1(), &f, &ag, &cfg);
        let a1 = Action::new(vec![(1, 6), (6, 10)]);
        let a2 = Action::new(vec![(5, 6), (2, 6)]);
        assert!(actions.contains(&a1) && actions.contains(&a2));
        assert_eq!(gval(&tau1(), &a1, &f, &ag), Ratio::new(7, 6));
        assert_eq!(gval(&tau1(), &a2, &f, &ag), Ratio::new(7, 6));
        let (best, value) = select_action(&tau1(), &f, &ag, &cfg).unwrap();
        assert_eq!(best, a1);
        assert_eq!(value, Value::Gates(Ratio::new(7, 6)));
    }

    #[test]
    fn worked_example_three_swap_action() {
        let ag = ArchGraph::tokyo();
        let f = Frontier::from_circuit(&fig3());
        let a5 = Action::new(vec![(2, 7), (1, 6), (6, 10)]);
        assert_eq!(gval(&tau1(), &a5, &f, &ag), Ratio::new(7, 9));
    }

    #[test]
    fn q0_filter_follows_the_definition() {
        // Under the literal rule the second SWAP of (2,7),(1,6),(6,10) moves
        // only q3 and v1, neither of which is a front-layer qubit.
        let ag = ArchGraph::tokyo();
        let f = Frontier::from_circuit(&fig3());
        let cfg = SearchConfig { q_filter: QFilter::Q0, d_filter: None, ..SearchConfig::default() };
        let actions = enumerate_actions(&tau1(), &f, &ag, &cfg);
        for a in ["a1", "a2", "a3", "a4", "a5"].iter().zip([
            vec![(1, 6), (6, 10)],
            vec![(5, 6), (2, 6)],
            vec![(6, 7), (6, 10)],
            vec![(6, 11), (2, 6)],
            vec![(2, 7), (1, 6), (6, 10)],
        ]) {
            assert!(!actions.contains(&Action::new(a.1)), "{} should be filtered", a.0);
        }
        let (best, value) = select_action(&tau1(), &f, &ag, &cfg).unwrap();
        assert_eq!(value, Value::Gates(Ratio::new(7, 9)));
        assert_eq!(best.len(), 3);
        let mut t = tau1();
        best.apply(&mut t);
        assert_eq!(executable_count(&t, &ag, &f), 7);
    }

    #[test]
    fn enumeration_order_and_pruning() {
        let ag = ArchGraph::tokyo();
        let f = Frontier::from_circuit(&fig3());
        let actions = enumerate_actions(&tau1(), &f, &ag, &unfiltered(3));
        for w in actions.windows(2) {
            let key = |a: &Action| {
                (a.len(), a.swaps.iter().map(|&(u, v)| ag.edge_id(u, v).unwrap()).collect::<Vec<_>>())
            };
            assert!(key(&w[0]) < key(&w[1]));
        }
        for a in &actions {
            assert!(a.swaps.windows(2).all(|p| p[0] != p[1]));
        }
    }

    #[test]
    fn single_swaps_touch_the_occupied_qubit() {
        let ag = ArchGraph::path(5).unwrap();
        let c = Circuit::from_pairs(&[(0, 1)]).unwrap();
        let f = Frontier::from_circuit(&c);
        let t = QubitMapping::from_pairs(2, 5, &[(0, 2)]).unwrap();
        let actions = enumerate_actions(&t, &f, &ag, &unfiltered(1));
        assert_eq!(actions, vec![Action::new(vec![(1, 2)]), Action::new(vec![(2, 3)])]);
    }

    #[test]
    fn zero_gain_action_has_zero_value() {
        let ag = ArchGraph::path(5).unwrap();
        let c = Circuit::from_pairs(&[(0, 1)]).unwrap();
        let f = Frontier::from_circuit(&c);
        let t = QubitMapping::from_pairs(2, 5, &[(0, 0), (1, 4)]).unwrap();
        assert_eq!(gval(&t, &Action::new(vec![(0, 1)]), &f, &ag), Ratio::new(0, 3));
    }

    #[test]
    fn rhat_and_dval_basics() {
        let ag = ArchGraph::path(4).unwrap();
        let c = Circuit::from_pairs(&[(0, 1)]).unwrap();
        let f = Frontier::from_circuit(&c);
        let t = QubitMapping::from_pairs(2, 4, &[(0, 0), (1, 2)]).unwrap();
        assert_eq!(rhat(&t, &f, &ag, 0, 0.3).unwrap(), 2.0);
        let closer = Action::new(vec![(0, 1)]);
        assert_eq!(dval(&t, &closer, &f, &ag, 0, 0.8).unwrap(), 1.0 / 3.0);
        let idle = Action::new(vec![(2, 3)]);
        assert!(dval(&t, &idle, &f, &ag, 0, 0.8).unwrap() < 0.0);
        let other = QubitMapping::from_pairs(2, 4, &[(0, 0), (1, 1)]).unwrap();
        let far = Action::new(vec![(2, 3)]);
        assert_eq!(dval(&other, &far, &f, &ag, 0, 0.8).unwrap(), 0.0);
    }

    #[test]
    fn rhat_of_a_satisfying_mapping_counts_gates() {
        let ag = ArchGraph::tokyo();
        let t3 = QubitMapping::from_pairs(4, 20, &[(0, 2), (1, 0), (2, 6), (3, 1)]).unwrap();
        let f = Frontier::from_circuit(&fig3());
        let layers = f.layers(3);
        let expect: f64 = layers.iter().enumerate().map(|(l, gs)| 0.8f64.powi(l as i32) * gs.len() as f64).sum();
        assert!((rhat(&t3, &f, &ag, 2, 0.8).unwrap() - expect).abs() < 1e-12);
    }

    /// Straight-line evaluation of the discounted distance: brute-force
    /// layers by longest path and distances by direct case analysis.
    fn rhat_oracle(c: &Circuit, tau: &QubitMapping, ag: &ArchGraph, s: usize, gamma: f64) -> f64 {
        let m = c.gates.len();
        let mut depth = vec![0usize; m];
        for j in 0..m {
            for i in 0..j {
                let (a, b) = (c.gates[i], c.gates[j]);
                let shares = a.qubits().iter().any(|q| b.qubits().contains(q));
                if shares {
                    depth[j] = depth[j].max(depth[i] + 1);
                }
            }
        }
        let free: Vec<u32> = (0..ag.num_nodes() as u32).filter(|&v| tau.is_free(v)).collect();
        let mut total = 0.0;
        for (j, g) in c.gates.iter().enumerate() {
            if depth[j] > s {
                continue;
            }
            let d = match (tau.get(g.control), tau.get(g.target)) {
                (Some(a), Some(b)) => ag.dist(a, b),
                (Some(a), None) | (None, Some(a)) => free.iter().map(|&f| ag.dist(a, f)).min().unwrap(),
                (None, None) => {
                    let mut best = u32::MAX;
                    for &x in &free {
                        for &y in &free {
                            if x != y {
                                best = best.min(ag.dist(x, y));
                            }
                        }
                    }
                    best
                }
            };
            total += gamma.powi(depth[j] as i32) * d as f64;
        }
        total
    }

    #[test]
    fn dval_on_worked_example_matches_oracle() {
        let ag = ArchGraph::tokyo();
        let c = fig3();
        let f = Frontier::from_circuit(&c);
        let a1 = Action::new(vec![(1, 6), (6, 10)]);
        let mut after = tau1();
        a1.apply(&mut after);
        let expect = (rhat_oracle(&c, &tau1(), &ag, 2, 0.8) - rhat_oracle(&c, &after, &ag, 2, 0.8)) / 6.0;
        assert!((dval(&tau1(), &a1, &f, &ag, 2, 0.8).unwrap() - expect).abs() < 1e-12);
    }

    #[test]
    fn rhat_matches_oracle_on_random_instances() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let ag = ArchGraph::grid(3, 3).unwrap();
        for _ in 0..200 {
            let pairs: Vec<(u32, u32)> = (0..rng.gen_range(1..15))
                .map(|_| {
                    let a = rng.gen_range(0..5);
                    (a, (a + rng.gen_range(1..5)) % 5)
                })
                .collect();
            let c = Circuit::from_pairs(&pairs).unwrap();
            let mut t = QubitMapping::new(5, 9);
            for q in 0..5 {
                if rng.gen_bool(0.6) {
                    let _ = t.assign(q, rng.gen_range(0..9));
                }
            }
            let f = Frontier::from_circuit(&c);
            let got = rhat(&t, &f, &ag, 2, 0.8).unwrap();
            assert!((got - rhat_oracle(&c, &t, &ag, 2, 0.8)).abs() < 1e-9);
        }
    }

    #[test]
    fn fallback_on_a_path() {
        let ag = ArchGraph::path(4).unwrap();
        let c = Circuit::from_pairs(&[(0, 1)]).unwrap();
        let f = Frontier::from_circuit(&c);
        let t = QubitMapping::from_pairs(2, 4, &[(0, 0), (1, 3)]).unwrap();
        assert_eq!(fallback_swap(&t, &f, &ag), Some((0, 1)));
        let t2 = t.apply_swap(&ag, 0, 1).unwrap();
        assert_eq!(front_min_distance(&t2, &f, &ag).unwrap().0, 2);
    }

    #[test]
    fn fallback_shrinks_distance_on_random_grids() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let ag = ArchGraph::grid(4, 5).unwrap();
        for _ in 0..300 {
            let nq = rng.gen_range(2..10);
            let pairs: Vec<(u32, u32)> = (0..rng.gen_range(1..6))
                .map(|_| {
                    let a = rng.gen_range(0..nq);
                    (a, (a + rng.gen_range(1..nq)) % nq)
                })
                .collect();
            let c = Circuit::new(nq as usize, pairs.iter().map(|&(a, b)| Gate::new(a, b)).collect()).unwrap();
            let mut t = QubitMapping::new(nq as usize, 20);
            let mut spots: Vec<u32> = (0..20).collect();
            for q in 0..nq {
                let i = rng.gen_range(0..spots.len());
                t.assign(q, spots.swap_remove(i)).unwrap();
            }
            let f = Frontier::from_circuit(&c);
            let (fb, _) = front_min_distance(&t, &f, &ag).unwrap();
            match fallback_swap(&t, &f, &ag) {
                Some((u, v)) => {
                    let after = t.apply_swap(&ag, u, v).unwrap();
                    assert_eq!(front_min_distance(&after, &f, &ag).unwrap().0, fb - 1);
                }
                None => assert_eq!(fb, 1),
            }
        }
    }

    #[test]
    fn worked_example_routes_with_two_swaps() {
        let ag = ArchGraph::tokyo();
        let out = transform(&fig3(), &ag, &tau1(), &unfiltered(3)).unwrap();
        assert_eq!(out.swaps.len(), 2);
        assert_eq!(out.added_cnots, 6);
        assert_eq!(out.physical.len(), 13);
        assert!(out.physical.gates.iter().all(|g| ag.is_edge(g.control, g.target)));
    }

    #[test]
    fn relabelled_circuit_needs_no_swaps() {
        let ag = ArchGraph::path(4).unwrap();
        let c = Circuit::from_pairs(&[(0, 1), (2, 1), (3, 2), (1, 0)]).unwrap();
        let init = QubitMapping::from_pairs(4, 4, &[(0, 0), (1, 1), (2, 2), (3, 3)]).unwrap();
        let out = transform(&c, &ag, &init, &SearchConfig::default()).unwrap();
        assert_eq!(out.added_cnots, 0);
        assert_eq!(out.physical.gates, c.gates);
        assert_eq!(out.r_cnot(), Some(Ratio::from_integer(1)));
    }

    #[test]
    fn far_pair_uses_fallback_and_terminates() {
        let ag = ArchGraph::path(12).unwrap();
        let c = Circuit::from_pairs(&[(0, 1), (1, 0)]).unwrap();
        let init = QubitMapping::from_pairs(2, 12, &[(0, 0), (1, 11)]).unwrap();
        let cfg = SearchConfig { k: 1, q_filter: QFilter::Q0, ..SearchConfig::default() };
        let out = transform(&c, &ag, &init, &cfg).unwrap();
        assert_eq!(out.swaps.len(), 10);
        assert!(!out.fallbacks.is_empty());
        for fb in &out.fallbacks {
            assert_eq!(fb.after + 1, fb.before);
        }
    }

    #[test]
    fn tiny_fallback_cap_reports_non_termination() {
        let ag = ArchGraph::path(12).unwrap();
        let c = Circuit::from_pairs(&[(0, 1)]).unwrap();
        let init = QubitMapping::from_pairs(2, 12, &[(0, 0), (1, 11)]).unwrap();
        let cfg = SearchConfig { k: 1, q_filter: QFilter::Q0, fallback_cap: Some(2), ..SearchConfig::default() };
        assert!(matches!(transform(&c, &ag, &init, &cfg), Err(Error::NonTermination { .. })));
    }

    #[test]
    fn rejects_bad_configs_and_mappings() {
        let ag = ArchGraph::path(3).unwrap();
        let c = Circuit::from_pairs(&[(0, 1)]).unwrap();
        let init = QubitMapping::new(2, 3);
        let bad_k = SearchConfig { k: 0, ..SearchConfig::default() };
        assert!(matches!(transform(&c, &ag, &init, &bad_k), Err(Error::Config(_))));
        let bad_gamma = SearchConfig { d_filter: Some(DFilter { s: 1, gamma: 1.5 }), ..SearchConfig::default() };
        assert!(matches!(transform(&c, &ag, &init, &bad_gamma), Err(Error::Config(_))));
        assert!(matches!(
            transform(&c, &ag, &QubitMapping::new(2, 4), &SearchConfig::default()),
            Err(Error::Mapping(_))
        ));
        let wide = Circuit::from_pairs(&[(0, 1), (2, 3)]).unwrap();
        assert!(matches!(
            transform(&wide, &ag, &QubitMapping::new(4, 3), &SearchConfig::default()),
            Err(Error::Capacity(_))
        ));
    }

    /// Every sequence of up to `k` SWAPs over all edges, no filtering.
    fn best_by_brute_force(tau: &QubitMapping, f: &Frontier, ag: &ArchGraph, k: usize) -> Ratio<u64> {
        let mut best = Ratio::new(0, 1);
        let mut stack: Vec<Vec<(u32, u32)>> = ag.edges().iter().map(|&e| vec![e]).collect();
        while let Some(seq) = stack.pop() {
            best = best.max(gval(tau, &Action::new(seq.clone()), f, ag));
            if seq.len() < k {
                for &e in ag.edges() {
                    let mut next = seq.clone();
                    next.push(e);
                    stack.push(next);
                }
            }
        }
        best
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(40))]

        #[test]
        fn unfiltered_selection_is_optimal(
            pairs in prop::collection::vec((0u32..5, 1u32..5), 1..12),
            rows in 2usize..4,
            spots in Just((0u32..9).collect::<Vec<_>>()).prop_shuffle(),
        ) {
            let ag = ArchGraph::grid(rows, 3).unwrap();
            let pairs: Vec<(u32, u32)> = pairs.into_iter().map(|(a, d)| (a, (a + d) % 5)).collect();
            let c = Circuit::from_pairs(&pairs).unwrap();
            let mut f = Frontier::from_circuit(&c);
            let n = ag.num_nodes();
            let place: Vec<(u32, u32)> = (0..c.num_qubits as u32)
                .zip(spots.into_iter().filter(|&v| (v as usize) < n))
                .collect();
            prop_assume!(place.len() == c.num_qubits);
            let tau = QubitMapping::from_pairs(c.num_qubits, n, &place).unwrap();
            commit_executable(&tau, &ag, &mut f);
            prop_assume!(!f.is_empty());
            let cfg = unfiltered(3);
            let brute = best_by_brute_force(&tau, &f, &ag, 3);
            match select_action(&tau, &f, &ag, &cfg) {
                Some((_, Value::Gates(v))) => prop_assert_eq!(v, brute),
                Some(_) => unreachable!(),
                None => prop_assert_eq!(brute, Ratio::new(0, 1)),
            }
        }

        #[test]
        fn distance_mode_matches_brute_force(
            pairs in prop::collection::vec((0u32..5, 1u32..5), 1..12),
            spots in prop::collection::vec(prop::option::of(0u32..9), 5),
            k in 1usize..4,
        ) {
            // gamma = 1/2 keeps every weighted sum exact in binary.
            let ag = ArchGraph::grid(3, 3).unwrap();
            let pairs: Vec<(u32, u32)> = pairs.into_iter().map(|(a, d)| (a, (a + d) % 5)).collect();
            let c = Circuit::from_pairs(&pairs).unwrap();
            let mut tau = QubitMapping::new(c.num_qubits, 9);
            for (q, v) in spots.iter().enumerate().take(c.num_qubits) {
                if let Some(v) = v {
                    let _ = tau.assign(q as u32, *v);
                }
            }
            prop_assume!(tau.num_mapped() > 0 && tau.num_free() >= 2);
            let f = Frontier::from_circuit(&c);
            let cfg = SearchConfig {
                k,
                q_filter: QFilter::None,
                d_filter: Some(DFilter { s: 1, gamma: 0.5 }),
                value_fn: ValueFn::Distance { s: 2, gamma: 0.5 },
                ..SearchConfig::default()
            };

            let mut expect: Vec<Vec<Vec<u32>>> = vec![Vec::new(); k];
            let mut stack = vec![(Vec::<u32>::new(), tau.clone())];
            while let Some((seq, t)) = stack.pop() {
                let mut children = Vec::new();
                for (id, &(u, v)) in ag.edges().iter().enumerate() {
                    let id = id as u32;
                    if seq.last() == Some(&id) || (t.is_free(u) && t.is_free(v)) {
                        continue;
                    }
                    let mut next = t.clone();
                    next.swap_in_place(u, v);
                    if rhat_oracle(&c, &next, &ag, 1, 0.5) > rhat_oracle(&c, &t, &ag, 1, 0.5) {
                        continue;
                    }
                    let mut s2 = seq.clone();
                    s2.push(id);
                    expect[s2.len() - 1].push(s2.clone());
                    if s2.len() < k {
                        children.push((s2, next));
                    }
                }
                stack.extend(children.into_iter().rev());
            }
            for bucket in &mut expect {
                bucket.sort();
            }
            let expect: Vec<Action> = expect
                .into_iter()
                .flatten()
                .map(|seq| Action::new(seq.iter().map(|&e| ag.edge(e)).collect()))
                .collect();
            let got = enumerate_actions(&tau, &f, &ag, &cfg);
            prop_assert_eq!(&got, &expect);

            let base = rhat_oracle(&c, &tau, &ag, 2, 0.5);
            let mut best: Option<(f64, &Action)> = None;
            for a in &expect {
                let mut t = tau.clone();
                a.apply(&mut t);
                let v = (base - rhat_oracle(&c, &t, &ag, 2, 0.5)) / (3 * a.len()) as f64;
                if best.is_none_or(|(b, _)| v > b) {
                    best = Some((v, a));
                }
            }
            match (select_action(&tau, &f, &ag, &cfg), best) {
                (Some((a, Value::Distance(v))), Some((bv, ba))) => {
                    prop_assert_eq!(v, bv);
                    prop_assert_eq!(&a, ba);
                }
                (None, b) => prop_assert!(b.is_none_or(|(bv, _)| bv <= 0.0)),
                (got, b) => prop_assert!(false, "{:?} vs {:?}", got, b),
            }
        }

        #[test]
        fn parallel_and_sequential_agree(
            pairs in prop::collection::vec((0u32..8, 1u32..8), 1..40),
            q in prop::sample::select(vec![QFilter::None, QFilter::Q0, QFilter::Q01, QFilter::Q01x]),
            d_mode in any::<bool>(),
        ) {
            let ag = ArchGraph::tokyo();
            let pairs: Vec<(u32, u32)> = pairs.into_iter().map(|(a, d)| (a, (a + d) % 8)).collect();
            let c = Circuit::from_pairs(&pairs).unwrap();
            let init = QubitMapping::new(c.num_qubits, 20);
            let value_fn = if d_mode { ValueFn::Distance { s: 2, gamma: 0.8 } } else { ValueFn::Gates };
            let base = SearchConfig { q_filter: q, value_fn, ..SearchConfig::default() };
            let seq = SearchConfig { parallel: false, ..base.clone() };
            let a = transform(&c, &ag, &init, &base).unwrap();
            let b = transform(&c, &ag, &init, &seq).unwrap();
            prop_assert_eq!(a.physical.gates, b.physical.gates);
            prop_assert_eq!(a.swaps, b.swaps);
        }
    }
}
