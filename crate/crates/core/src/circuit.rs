//! CNOT-only circuits, the OpenQASM subset reader/writer, and the gate
//! dependency graph with its layer decomposition.

use std::collections::{BTreeSet, HashMap};
use std::fmt::Write as _;

use crate::error::{Error, Result};

/// A CNOT written as `<control, target>` over dense qubit ids.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Gate {
    pub control: u32,
    pub target: u32,
}

impl Gate {
    pub fn new(control: u32, target: u32) -> Self {
        debug_assert_ne!(control, target, "cx needs two distinct qubits");
        Gate { control, target }
    }

    pub fn qubits(&self) -> [u32; 2] {
        [self.control, self.target]
    }

    /// The unordered interaction pair, smaller id first.
    pub fn pair(&self) -> (u32, u32) {
        if self.control < self.target {
            (self.control, self.target)
        } else {
            (self.target, self.control)
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Default)]
pub struct Circuit {
    pub num_qubits: usize,
    pub gates: Vec<Gate>,
    /// Single-qubit statements dropped by the reader. Informational only.
    pub stripped_1q_count: usize,
}

impl Circuit {
    pub fn new(num_qubits: usize, gates: Vec<Gate>) -> Result<Self> {
        for (index, g) in gates.iter().enumerate() {
            for q in g.qubits() {
                if q as usize >= num_qubits {
                    return Err(Error::QubitOutOfRange {
                        index,
                        qubit: q,
                        num_qubits,
                    });
                }
            }
            if g.control == g.target {
                return Err(Error::SameQubit {
                    line: 0,
                    qubit: g.control,
                });
            }
        }
        Ok(Circuit {
            num_qubits,
            gates,
            stripped_1q_count: 0,
        })
    }

    /// Builds a circuit from `(control, target)` pairs, sizing the register to fit.
    pub fn from_pairs(pairs: &[(u32, u32)]) -> Result<Self> {
        let n = pairs
            .iter()
            .map(|&(a, b)| a.max(b) as usize + 1)
            .max()
            .unwrap_or(0);
        Circuit::new(n, pairs.iter().map(|&(c, t)| Gate { control: c, target: t }).collect())
    }

    pub fn len(&self) -> usize {
        self.gates.len()
    }

    pub fn is_empty(&self) -> bool {
        self.gates.is_empty()
    }

    /// Qubits touched by at least one gate.
    pub fn active_qubits(&self) -> BTreeSet<u32> {
        self.gates.iter().flat_map(|g| g.qubits()).collect()
    }

    /// Renders the circuit in the same OpenQASM subset that [`parse_circuit`] reads.
    pub fn to_qasm(&self) -> String {
        let mut out = String::with_capacity(32 + 20 * self.gates.len());
        out.push_str("OPENQASM 2.0;\ninclude \"qelib1.inc\";\n");
        let _ = writeln!(out, "qreg q[{}];", self.num_qubits);
        for g in &self.gates {
            let _ = writeln!(out, "cx q[{}],q[{}];", g.control, g.target);
        }
        out
    }
}

struct Register {
    offset: u32,
    size: u32,
}

/// Reads an OpenQASM 2.0 subset and keeps only its `cx` gates.
///
/// Single-qubit gate applications (with or without parameters, on one qubit
/// or broadcast over a register) are counted and dropped. `measure`,
/// `barrier`, `reset`, `creg` and the header lines are ignored. Any other
/// multi-qubit gate is rejected.
pub fn parse_circuit(text: &str) -> Result<Circuit> {
    let mut registers: HashMap<String, Register> = HashMap::new();
    let mut num_qubits: u32 = 0;
    let mut gates = Vec::new();
    let mut stripped = 0usize;

    for (line, stmt) in statements(text)? {
        let (head, rest) = split_head(&stmt);
        match head {
            "OPENQASM" | "include" | "creg" | "measure" | "barrier" | "reset" => {}
            "qreg" => {
                let (name, size) = parse_indexed(rest, line)?;
                if registers.contains_key(name) {
                    return Err(parse_err(line, format!("register `{name}` declared twice")));
                }
                registers.insert(
                    name.to_string(),
                    Register {
                        offset: num_qubits,
                        size,
                    },
                );
                num_qubits += size;
            }
            "cx" | "CX" => {
                let args: Vec<&str> = rest.split(',').map(str::trim).collect();
                if args.len() != 2 {
                    return Err(parse_err(line, "cx takes exactly two qubit arguments".into()));
                }
                let control = resolve(&registers, args[0], line)?;
                let target = resolve(&registers, args[1], line)?;
                if control == target {
                    return Err(Error::SameQubit {
                        line,
                        qubit: control,
                    });
                }
                gates.push(Gate { control, target });
            }
            "gate" | "opaque" | "if" => {
                return Err(Error::UnsupportedGate {
                    line,
                    name: head.to_string(),
                })
            }
            name => {
                if !name.chars().next().is_some_and(|c| c.is_ascii_alphabetic()) {
                    return Err(parse_err(line, format!("unexpected statement `{stmt}`")));
                }
                let operands = strip_params(rest, line)?;
                let args: Vec<&str> = operands.split(',').map(str::trim).collect();
                if args.len() != 1 || args[0].is_empty() {
                    return Err(Error::UnsupportedGate {
                        line,
                        name: name.to_string(),
                    });
                }
                if args[0].contains('[') {
                    resolve(&registers, args[0], line)?;
                    stripped += 1;
                } else {
                    let reg = registers
                        .get(args[0])
                        .ok_or_else(|| parse_err(line, format!("unknown register `{}`", args[0])))?;
                    stripped += reg.size as usize;
                }
            }
        }
    }

    Ok(Circuit {
        num_qubits: num_qubits as usize,
        gates,
        stripped_1q_count: stripped,
    })
}

fn parse_err(line: usize, message: String) -> Error {
    Error::Parse { line, message }
}

/// Splits the source into `;`- or `}`-terminated statements tagged with their first line.
fn statements(text: &str) -> Result<Vec<(usize, String)>> {
    let mut out = Vec::new();
    let mut current = String::new();
    let mut start = 0usize;
    for (i, raw) in text.lines().enumerate() {
        let line_no = i + 1;
        let code = match raw.find("//") {
            Some(pos) => &raw[..pos],
            None => raw,
        };
        for ch in code.chars() {
            if ch == ';' || ch == '}' {
                if ch == '}' {
                    current.push(ch);
                }
                let stmt = current.trim().to_string();
                if !stmt.is_empty() {
                    out.push((start, stmt));
                }
                current.clear();
            } else {
                if current.trim().is_empty() && !ch.is_whitespace() {
                    start = line_no;
                }
                current.push(ch);
            }
        }
        current.push(' ');
    }
    if !current.trim().is_empty() {
        return Err(parse_err(start, format!("missing `;` after `{}`", current.trim())));
    }
    Ok(out)
}

fn split_head(stmt: &str) -> (&str, &str) {
    let end = stmt
        .find(|c: char| c.is_whitespace() || c == '(')
        .unwrap_or(stmt.len());
    (&stmt[..end], stmt[end..].trim())
}

fn strip_params(rest: &str, line: usize) -> Result<&str> {
    if !rest.starts_with('(') {
        return Ok(rest);
    }
    let mut depth = 0i32;
    for (i, ch) in rest.char_indices() {
        match ch {
            '(' => depth += 1,
            ')' => {
                depth -= 1;
                if depth == 0 {
                    return Ok(rest[i + 1..].trim());
                }
            }
            _ => {}
        }
    }
    Err(parse_err(line, "unbalanced parentheses".into()))
}

fn parse_indexed(token: &str, line: usize) -> Result<(&str, u32)> {
    let token = token.trim();
    let open = token
        .find('[')
        .ok_or_else(|| parse_err(line, format!("expected `name[index]`, got `{token}`")))?;
    if !token.ends_with(']') {
        return Err(parse_err(line, format!("expected `name[index]`, got `{token}`")));
    }
    let name = token[..open].trim();
    let index = token[open + 1..token.len() - 1]
        .trim()
        .parse::<u32>()
        .map_err(|_| parse_err(line, format!("bad index in `{token}`")))?;
    if name.is_empty() {
        return Err(parse_err(line, format!("missing register name in `{token}`")));
    }
    Ok((name, index))
}

fn resolve(registers: &HashMap<String, Register>, token: &str, line: usize) -> Result<u32> {
    let (name, index) = parse_indexed(token, line)?;
    let reg = registers
        .get(name)
        .ok_or_else(|| parse_err(line, format!("unknown register `{name}`")))?;
    if index >= reg.size {
        return Err(parse_err(
            line,
            format!("index {index} out of range for `{name}[{}]`", reg.size),
        ));
    }
    Ok(reg.offset + index)
}

/// Up to two parent/child links per gate, one per qubit.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
struct Links {
    ids: [u32; 2],
    len: u8,
}

impl Links {
    fn push(&mut self, id: u32) {
        if self.ids[..self.len as usize].contains(&id) {
            return;
        }
        self.ids[self.len as usize] = id;
        self.len += 1;
    }

    fn as_slice(&self) -> &[u32] {
        &self.ids[..self.len as usize]
    }
}

/// Direct-dependency DAG over gate indices.
///
/// Gate `j` is a child of gate `i` when `i < j`, they share a qubit, and no
/// gate between them touches that qubit. No transitive edges are stored.
#[derive(Clone, Debug)]
pub struct DepGraph {
    gates: Vec<Gate>,
    parents: Vec<Links>,
    children: Vec<Links>,
}

impl DepGraph {
    pub fn new(circuit: &Circuit) -> Self {
        let m = circuit.gates.len();
        let mut parents = vec![Links::default(); m];
        let mut children = vec![Links::default(); m];
        let mut last: Vec<Option<u32>> = vec![None; circuit.num_qubits];
        for (j, g) in circuit.gates.iter().enumerate() {
            for q in g.qubits() {
                if let Some(i) = last[q as usize] {
                    parents[j].push(i);
                    children[i as usize].push(j as u32);
                }
                last[q as usize] = Some(j as u32);
            }
        }
        DepGraph {
            gates: circuit.gates.clone(),
            parents,
            children,
        }
    }

    pub fn len(&self) -> usize {
        self.gates.len()
    }

    pub fn is_empty(&self) -> bool {
        self.gates.is_empty()
    }

    pub fn gate(&self, i: usize) -> Gate {
        self.gates[i]
    }

    pub fn gates(&self) -> &[Gate] {
        &self.gates
    }

    pub fn parents(&self, i: usize) -> impl Iterator<Item = usize> + '_ {
        self.parents[i].as_slice().iter().map(|&p| p as usize)
    }

    pub fn children(&self, i: usize) -> impl Iterator<Item = usize> + '_ {
        self.children[i].as_slice().iter().map(|&c| c as usize)
    }

    pub fn indegree(&self, i: usize) -> u32 {
        self.parents[i].len as u32
    }

    pub fn edge_count(&self) -> usize {
        self.children.iter().map(|c| c.len as usize).sum()
    }

    /// The first `upto` layers of the whole circuit.
    pub fn layers(&self, upto: usize) -> Vec<Vec<usize>> {
        let indeg: Vec<u32> = (0..self.len()).map(|i| self.indegree(i)).collect();
        let front: Vec<usize> = (0..self.len()).filter(|&i| indeg[i] == 0).collect();
        self.layers_from(&indeg, front, upto)
    }

    fn layers_from(&self, indeg: &[u32], front: Vec<usize>, upto: usize) -> Vec<Vec<usize>> {
        let mut out = Vec::new();
        let mut seen: HashMap<usize, u32> = HashMap::new();
        let mut current = front;
        while !current.is_empty() && out.len() < upto {
            let mut next = Vec::new();
            for &g in &current {
                for c in self.children(g) {
                    let hits = seen.entry(c).or_insert(0);
                    *hits += 1;
                    if *hits == indeg[c] {
                        next.push(c);
                    }
                }
            }
            next.sort_unstable();
            out.push(std::mem::replace(&mut current, next));
        }
        out
    }
}

/// The not-yet-executed part of a circuit, tracked by live indegrees so the
/// front layer updates in O(1) per removed gate.
#[derive(Clone, Debug)]
pub struct Frontier {
    dag: DepGraph,
    indeg: Vec<u32>,
    done: Vec<bool>,
    front: BTreeSet<usize>,
    left: usize,
}

impl Frontier {
    pub fn new(dag: DepGraph) -> Self {
        let indeg: Vec<u32> = (0..dag.len()).map(|i| dag.indegree(i)).collect();
        let front = (0..dag.len()).filter(|&i| indeg[i] == 0).collect();
        let left = dag.len();
        Frontier {
            dag,
            indeg,
            done: vec![false; left],
            front,
            left,
        }
    }

    pub fn from_circuit(circuit: &Circuit) -> Self {
        Frontier::new(DepGraph::new(circuit))
    }

    pub fn dag(&self) -> &DepGraph {
        &self.dag
    }

    pub fn gate(&self, i: usize) -> Gate {
        self.dag.gate(i)
    }

    /// Front-layer gate indices in ascending order.
    pub fn front(&self) -> impl Iterator<Item = usize> + '_ {
        self.front.iter().copied()
    }

    pub fn front_len(&self) -> usize {
        self.front.len()
    }

    pub fn in_front(&self, i: usize) -> bool {
        self.front.contains(&i)
    }

    /// Remaining (live) indegree of gate `i`.
    pub fn live_indegree(&self, i: usize) -> u32 {
        self.indeg[i]
    }

    pub fn is_done(&self, i: usize) -> bool {
        self.done[i]
    }

    pub fn remaining(&self) -> usize {
        self.left
    }

    pub fn is_empty(&self) -> bool {
        self.left == 0
    }

    /// Executes a front-layer gate, promoting children whose parents are all gone.
    pub fn remove(&mut self, i: usize) {
        assert!(self.front.remove(&i), "gate {i} is not in the front layer");
        self.done[i] = true;
        self.left -= 1;
        for c in self.dag.children[i].as_slice() {
            let c = *c as usize;
            self.indeg[c] -= 1;
            if self.indeg[c] == 0 {
                self.front.insert(c);
            }
        }
    }

    /// Layers `0..upto` of the remaining circuit; layer 0 is the front layer.
    pub fn layers(&self, upto: usize) -> Vec<Vec<usize>> {
        self.dag
            .layers_from(&self.indeg, self.front.iter().copied().collect(), upto)
    }
}
