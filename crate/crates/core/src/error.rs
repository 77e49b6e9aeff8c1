use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid spatial dimension {0}, expected 2 or 3")]
    InvalidDimension(usize),

    #[error("cell {cell} is degenerate or negatively oriented (detJ = {det})")]
    NegativeOrientation { cell: usize, det: f64 },

    #[error("invalid mesh: {0}")]
    InvalidMesh(String),

    #[error("shape mismatch for {what}: expected {expected}, got {actual}")]
    Shape {
        what: &'static str,
        expected: usize,
        actual: usize,
    },

    #[error("point {point:?} lies outside the reference simplex")]
    Domain { point: Vec<f64> },

    #[error("unsupported capability: {0}")]
    Capability(String),

    #[error("form `{0}` requires auxiliary field data")]
    MissingAuxiliary(String),

    #[error("auxiliary data supplied for form `{0}`, which takes none")]
    UnexpectedAuxiliary(String),

    #[error("component index {index} out of range for {n_comp} components")]
    ComponentIndex { index: usize, n_comp: usize },

    #[error("configuration error: {0}")]
    Configuration(String),

    #[error("shared memory requirement of {required} bytes exceeds the device cap of {cap} bytes")]
    SharedMemoryCapacity { required: usize, cap: usize },

    #[error("kernel generation failed: {0}")]
    Codegen(String),

    #[error("parse error at line {line}: {msg}")]
    Parse { line: usize, msg: String },
}
