use thiserror::Error;

use crate::cube::CubeId;

#[derive(Debug, Error)]
pub enum Error {
    #[error("parameter out of range: {0}")]
    ParameterOutOfRange(String),

    #[error("invalid base {base} at split {split}: bases must be odd and at least 3")]
    InvalidBase { split: usize, base: u64 },

    #[error(
        "cube budget exceeded: level {level} would hold {count} cubes (budget {budget}); use lazy materialization"
    )]
    BudgetExceeded { level: usize, count: u128, budget: u128 },

    #[error("unknown cube {0}")]
    UnknownCube(CubeId),

    #[error("{child} is not a child of {parent}")]
    NotAChild { parent: CubeId, child: u32 },

    #[error("depth {requested} exceeds available depth {available}")]
    DepthOutOfRange { requested: usize, available: usize },

    #[error("divergent integral: rho = {rho} must exceed -q = -{q}")]
    DivergentIntegral { rho: f64, q: usize },

    #[error("inadmissible rho: {0}")]
    InadmissibleRho(String),

    #[error("unsupported system: {0}")]
    Unsupported(String),

    #[error("invalid spec: {0}")]
    InvalidSpec(String),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
