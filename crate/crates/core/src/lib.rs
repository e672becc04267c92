//! Qubit routing for CNOT circuits on arbitrary undirected coupling graphs.
//!
//! The pipeline is: parse a circuit ([`circuit`]), pick an initial placement
//! ([`isomorph`]), route it with filtered depth-limited SWAP search
//! ([`search`]) and check the result over GF(2) ([`verify`]).
//!
//! ```
//! use fidls::{arch::ArchGraph, circuit::parse_circuit, isomorph, search, verify};
//!
//! let circuit = parse_circuit("qreg q[3]; cx q[0],q[1]; cx q[1],q[2]; cx q[0],q[2];").unwrap();
//! let ag = ArchGraph::path(3).unwrap();
//! let init = isomorph::naive_mapping(&circuit, &ag).unwrap();
//! let out = search::transform(&circuit, &ag, &init, &search::SearchConfig::default()).unwrap();
//! assert_eq!(out.added_cnots, 3 * out.swaps.len());
//! assert!(verify::check_equivalence(&circuit, &out).is_ok());
//! ```

pub mod arch;
pub mod circuit;
pub mod error;
pub mod isomorph;
pub mod mapping;
pub mod search;
pub mod synth;
pub mod verify;

pub use arch::ArchGraph;
pub use circuit::{parse_circuit, Circuit, DepGraph, Frontier, Gate};
pub use error::{Error, Result};
pub use mapping::QubitMapping;
pub use search::{transform, SearchConfig, TransformResult};
