use thiserror::Error;

use crate::medium::Violation;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid medium: {}", join_violations(.0))]
    InvalidMedium(Vec<Violation>),

    #[error("frequency {omega} is below the floor {floor}")]
    FrequencyTooLow { omega: f64, floor: f64 },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("index {index} out of range 1..={max}")]
    IndexOutOfRange { index: usize, max: usize },

    #[error("relative jump q_{index} = {value} is outside (-1, 1)")]
    JumpOutOfRange { index: usize, value: f64 },

    #[error("phase factor sigma_{index} has modulus {modulus}, expected 1")]
    NotUnitModulus { index: usize, modulus: f64 },

    #[error("sign of q_{index} is undefined (q_{index} = 0)")]
    ZeroJump { index: usize },

    #[error("instance carries a non-unit diffusion coefficient; reduce it first")]
    VariableDiffusion,

    #[error("precondition violated: {0}")]
    Precondition(String),

    #[error("dense oracle limited to n <= {max} jumps, got {n}")]
    TooLarge { n: usize, max: usize },

    #[error("linear system is singular to working precision")]
    Singular,

    #[error("config error: {0}")]
    Config(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

fn join_violations(v: &[Violation]) -> String {
    v.iter()
        .map(|x| x.to_string())
        .collect::<Vec<_>>()
        .join("; ")
}

pub type Result<T> = std::result::Result<T, Error>;
