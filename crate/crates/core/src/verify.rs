//! Independent checks on routed circuits: GF(2) simulation of the CNOT
//! layer, adjacency of every physical gate, and the CNOT-count metrics.

use std::fmt;

use num_rational::Ratio;

use crate::arch::ArchGraph;
use crate::circuit::Circuit;
use crate::search::TransformResult;

/// An invertible `n x n` matrix over GF(2), rows packed into `u64` words.
/// Column `j` is the image of the basis state with only wire `j` set.
#[derive(Clone, PartialEq, Eq)]
pub struct Gf2Map {
    n: usize,
    words: usize,
    rows: Vec<u64>,
}

impl fmt::Debug for Gf2Map {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for i in 0..self.n {
            let row: String = (0..self.n).map(|j| if self.get(i, j) { '1' } else { '0' }).collect();
            writeln!(f, "{row}")?;
        }
        Ok(())
    }
}

impl Gf2Map {
    pub fn identity(n: usize) -> Self {
        let words = n.div_ceil(64).max(1);
        let mut rows = vec![0u64; n * words];
        for i in 0..n {
            rows[i * words + i / 64] |= 1 << (i % 64);
        }
        Gf2Map { n, words, rows }
    }

    pub fn size(&self) -> usize {
        self.n
    }

    pub fn get(&self, row: usize, col: usize) -> bool {
        self.rows[row * self.words + col / 64] >> (col % 64) & 1 == 1
    }

    /// `x_target ^= x_control`.
    pub fn add_row(&mut self, control: usize, target: usize) {
        let (c, t) = (control * self.words, target * self.words);
        for w in 0..self.words {
            let bits = self.rows[c + w];
            self.rows[t + w] ^= bits;
        }
    }

    /// Rows with a 1 in column `col`.
    pub fn column_support(&self, col: usize) -> Vec<usize> {
        (0..self.n).filter(|&i| self.get(i, col)).collect()
    }

    /// `self * other`: apply `other` first.
    pub fn compose(&self, other: &Gf2Map) -> Gf2Map {
        assert_eq!(self.n, other.n);
        let mut out = Gf2Map {
            n: self.n,
            words: self.words,
            rows: vec![0; self.rows.len()],
        };
        for i in 0..self.n {
            for k in 0..self.n {
                if self.get(i, k) {
                    for w in 0..self.words {
                        out.rows[i * self.words + w] ^= other.rows[k * self.words + w];
                    }
                }
            }
        }
        out
    }
}

pub fn gf2_of_circuit(circuit: &Circuit, n: usize) -> Gf2Map {
    let mut m = Gf2Map::identity(n);
    for g in &circuit.gates {
        m.add_row(g.control as usize, g.target as usize);
    }
    m
}

/// Why a check failed.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Mismatch {
    pub qubit: Option<u32>,
    pub wire: u32,
    pub detail: String,
}

impl fmt::Display for Mismatch {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.qubit {
            Some(q) => write!(f, "q{q} / wire {}: {}", self.wire, self.detail),
            None => write!(f, "wire {}: {}", self.wire, self.detail),
        }
    }
}

pub type Verdict = std::result::Result<(), Mismatch>;

/// Wire each logical qubit effectively starts on. Lazily allocated qubits
/// are traced back through the SWAPs emitted before their allocation; free
/// wires are only ever moved by whole SWAPs, so this is exact.
pub fn start_wires(result: &TransformResult) -> Vec<Option<u32>> {
    let mut start: Vec<Option<u32>> = (0..result.final_map.num_logical() as u32)
        .map(|q| result.initial_map.get(q))
        .collect();
    for a in &result.allocations {
        let mut wire = a.v;
        for s in result.swaps.iter().rev().filter(|s| s.t < a.t) {
            if wire == s.u {
                wire = s.v;
            } else if wire == s.v {
                wire = s.u;
            }
        }
        start[a.q as usize] = Some(wire);
    }
    start
}

/// The physical circuit computes the logical CNOT layer: starting wire of
/// each logical qubit feeds exactly the final wires of the logical outputs
/// it feeds, and every other wire is only permuted.
pub fn check_equivalence(logical: &Circuit, result: &TransformResult) -> Verdict {
    let n = result.physical.num_qubits;
    let a = gf2_of_circuit(logical, logical.num_qubits);
    let b = gf2_of_circuit(&result.physical, n);
    let start = start_wires(result);
    let mut is_start = vec![false; n];
    for (q, w) in start.iter().enumerate() {
        let Some(w) = *w else { continue };
        if is_start[w as usize] {
            return Err(Mismatch {
                qubit: Some(q as u32),
                wire: w,
                detail: "two logical qubits start on the same wire".into(),
            });
        }
        is_start[w as usize] = true;
    }
    for q in 0..logical.num_qubits as u32 {
        if result.final_map.get(q).is_none() {
            continue;
        }
        let Some(w) = start[q as usize] else {
            return Err(Mismatch {
                qubit: Some(q),
                wire: result.final_map.get(q).unwrap(),
                detail: "qubit ends mapped but has no start wire".into(),
            });
        };
        let mut expect = Vec::new();
        for q2 in 0..logical.num_qubits {
            if a.get(q2, q as usize) {
                match result.final_map.get(q2 as u32) {
                    Some(v) => expect.push(v as usize),
                    None => {
                        return Err(Mismatch {
                            qubit: Some(q),
                            wire: w,
                            detail: format!("output q{q2} depends on it but is unmapped"),
                        })
                    }
                }
            }
        }
        expect.sort_unstable();
        let got = b.column_support(w as usize);
        if got != expect {
            return Err(Mismatch {
                qubit: Some(q),
                wire: w,
                detail: format!("column support {got:?}, expected {expect:?}"),
            });
        }
    }
    for w in 0..n {
        if !is_start[w] && b.column_support(w).len() != 1 {
            return Err(Mismatch {
                qubit: None,
                wire: w as u32,
                detail: "unused wire is not a plain permutation".into(),
            });
        }
    }
    Ok(())
}

/// Every gate acts on an architecture edge.
pub fn check_connectivity(physical: &Circuit, ag: &ArchGraph) -> Verdict {
    for (i, g) in physical.gates.iter().enumerate() {
        let ok = (g.control as usize) < ag.num_nodes()
            && (g.target as usize) < ag.num_nodes()
            && ag.is_edge(g.control, g.target);
        if !ok {
            return Err(Mismatch {
                qubit: None,
                wire: g.control,
                detail: format!("gate {i} <{}, {}> is not on an edge", g.control, g.target),
            });
        }
    }
    Ok(())
}

/// Output CNOTs over input CNOTs; `None` when the input has none.
pub fn r_cnot(logical: &Circuit, result: &TransformResult) -> Option<Ratio<u64>> {
    let input = logical.len() as u64;
    (input > 0).then(|| Ratio::new(result.physical.len() as u64, input))
}

/// Total output CNOTs over total input CNOTs for `(input, output)` pairs.
pub fn i_cnot(counts: &[(u64, u64)]) -> Option<Ratio<u64>> {
    let input: u64 = counts.iter().map(|c| c.0).sum();
    let output: u64 = counts.iter().map(|c| c.1).sum();
    (input > 0).then(|| Ratio::new(output, input))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::circuit::{parse_circuit, Gate};
    use crate::mapping::QubitMapping;
    use crate::search::{transform, QFilter, SearchConfig};
    use proptest::prelude::*;

    fn fig3() -> Circuit {
        parse_circuit(include_str!("../../../data/circuits/fig3.qasm")).unwrap()
    }

    #[test]
    fn empty_circuit_is_identity() {
        let c = Circuit::new(70, vec![]).unwrap();
        assert_eq!(gf2_of_circuit(&c, 70), Gf2Map::identity(70));
    }

    #[test]
    fn three_cnots_swap_two_wires() {
        let c = Circuit::from_pairs(&[(0, 2), (2, 0), (0, 2)]).unwrap();
        let m = gf2_of_circuit(&c, 3);
        assert_eq!(m.column_support(0), vec![2]);
        assert_eq!(m.column_support(2), vec![0]);
        assert_eq!(m.column_support(1), vec![1]);
    }

    #[test]
    fn fig3_matrix_by_hand() {
        // Track each wire as a bit set of inputs and XOR by hand.
        let mut x = [0b0001u8, 0b0010, 0b0100, 0b1000];
        for (c, t) in [(2, 0), (3, 2), (0, 3), (0, 2), (3, 2), (0, 3), (3, 1)] {
            x[t] ^= x[c];
        }
        let m = gf2_of_circuit(&fig3(), 4);
        for (i, row) in x.iter().enumerate() {
            for j in 0..4 {
                assert_eq!(m.get(i, j), row >> j & 1 == 1);
            }
        }
    }

    fn tau1() -> QubitMapping {
        QubitMapping::from_pairs(4, 20, &[(0, 2), (1, 0), (2, 10), (3, 6)]).unwrap()
    }

    fn routed_fig3() -> TransformResult {
        let cfg = SearchConfig { q_filter: QFilter::None, d_filter: None, ..SearchConfig::default() };
        transform(&fig3(), &ArchGraph::tokyo(), &tau1(), &cfg).unwrap()
    }

    #[test]
    fn routed_worked_example_passes() {
        let out = routed_fig3();
        assert_eq!(check_equivalence(&fig3(), &out), Ok(()));
        assert_eq!(check_connectivity(&out.physical, &ArchGraph::tokyo()), Ok(()));
    }

    #[test]
    fn zero_swap_routing_passes() {
        let ag = ArchGraph::path(3).unwrap();
        let c = Circuit::from_pairs(&[(1, 0), (1, 2)]).unwrap();
        let init = QubitMapping::from_pairs(3, 3, &[(0, 2), (1, 1), (2, 0)]).unwrap();
        let out = transform(&c, &ag, &init, &SearchConfig::default()).unwrap();
        assert_eq!(out.added_cnots, 0);
        assert_eq!(check_equivalence(&c, &out), Ok(()));
    }

    #[test]
    fn deleting_a_swap_cnot_fails() {
        let mut out = routed_fig3();
        let t = out.swaps[0].t;
        out.physical.gates.remove(t + 1);
        assert!(check_equivalence(&fig3(), &out).is_err());
    }

    #[test]
    fn connectivity_flags_non_edges() {
        let ag = ArchGraph::path(3).unwrap();
        let bad = Circuit::from_pairs(&[(0, 1), (0, 2)]).unwrap();
        let err = check_connectivity(&bad, &ag).unwrap_err();
        assert!(err.detail.starts_with("gate 1"));
        assert_eq!(check_connectivity(&Circuit::new(3, vec![]).unwrap(), &ag), Ok(()));
    }

    #[test]
    fn metrics() {
        let out = routed_fig3();
        assert_eq!(r_cnot(&fig3(), &out), Some(Ratio::new(13, 7)));
        assert_eq!(i_cnot(&[(10, 10), (90, 120)]), Some(Ratio::new(13, 10)));
        assert_eq!(i_cnot(&[(90, 129)]).unwrap(), Ratio::new(129, 90));
        assert_eq!(i_cnot(&[]), None);
    }

    proptest! {
        #[test]
        fn composition_law(
            pairs in prop::collection::vec((0u32..70, 1u32..70), 0..120),
            split in any::<prop::sample::Index>(),
        ) {
            let gates: Vec<Gate> = pairs.iter().map(|&(a, d)| Gate::new(a, (a + d) % 70)).collect();
            let cut = split.index(gates.len() + 1);
            let whole = gf2_of_circuit(&Circuit::new(70, gates.clone()).unwrap(), 70);
            let first = gf2_of_circuit(&Circuit::new(70, gates[..cut].to_vec()).unwrap(), 70);
            let second = gf2_of_circuit(&Circuit::new(70, gates[cut..].to_vec()).unwrap(), 70);
            prop_assert_eq!(whole, second.compose(&first));
        }
    }
}
