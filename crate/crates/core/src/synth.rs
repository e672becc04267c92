//! Seeded random CNOT circuits for tests and benchmarks.

use rand::{Rng, SeedableRng};
use rand::rngs::StdRng;

use crate::circuit::{Circuit, Gate};

/// `gates` CNOTs on `qubits` qubits with uniformly random distinct endpoints.
pub fn random_circuit<R: Rng>(rng: &mut R, qubits: u32, gates: usize) -> Circuit {
    assert!(qubits >= 2, "a CNOT needs two qubits");
    let list = (0..gates)
        .map(|_| {
            let c = rng.gen_range(0..qubits);
            let t = (c + rng.gen_range(1..qubits)) % qubits;
            Gate::new(c, t)
        })
        .collect();
    Circuit::new(qubits as usize, list).expect("endpoints are in range and distinct")
}

pub fn seeded_circuit(seed: u64, qubits: u32, gates: usize) -> Circuit {
    random_circuit(&mut StdRng::seed_from_u64(seed), qubits, gates)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn shape_and_reproducibility() {
        let a = seeded_circuit(3, 5, 100);
        assert_eq!((a.num_qubits, a.len()), (5, 100));
        assert!(a.gates.iter().all(|g| g.control != g.target && g.target < 5));
        assert_eq!(a, seeded_circuit(3, 5, 100));
    }
}
