use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum Error {
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },

    #[error("line {line}: cx acts twice on qubit {qubit}")]
    SameQubit { line: usize, qubit: u32 },

    #[error("line {line}: unsupported gate `{name}`")]
    UnsupportedGate { line: usize, name: String },

    #[error("gate {index} references qubit {qubit} but the circuit has {num_qubits} qubits")]
    QubitOutOfRange {
        index: usize,
        qubit: u32,
        num_qubits: usize,
    },

    #[error("architecture: {0}")]
    Arch(String),

    #[error("architecture graph is disconnected")]
    Disconnected,

    #[error("not enough physical qubits: {0}")]
    Capacity(String),

    #[error("{{{0}, {1}}} is not an edge of the architecture graph")]
    NotAnEdge(u32, u32),

    #[error("invalid mapping: {0}")]
    Mapping(String),

    #[error("fallback used {uses} times (cap {cap}) without finishing; {state}")]
    NonTermination { uses: u64, cap: u64, state: String },

    #[error("deadline exceeded after routing {routed} of {total} gates")]
    Timeout { routed: usize, total: usize },

    #[error("invalid configuration: {0}")]
    Config(String),
}

pub type Result<T> = std::result::Result<T, Error>;
