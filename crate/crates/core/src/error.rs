use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("negative probability {value} at index {index}")]
    NegativeEntry { index: usize, value: f64 },

    #[error("probability row sums to {sum}, outside tolerance")]
    RowSum { sum: f64 },

    #[error("alphabet must have at least two symbols, got {0}")]
    AlphabetTooSmall(usize),

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("level index {level} out of range 1..={max}")]
    LevelOutOfRange { level: usize, max: usize },

    #[error("length {0} is not a power of two")]
    NotPowerOfTwo(usize),

    #[error("type enumeration needs {types} classes, budget is {budget}; use monte_carlo_divergence")]
    TypeBudgetExceeded { types: u128, budget: u128 },

    #[error("likelihood ratio undefined: both halves of the selected block are zero")]
    DegenerateLlr,

    #[error("blocklength zero: delta too small for the chosen order and block count")]
    BlocklengthZero,

    #[error("all planned rates are zero")]
    AllRatesZero,

    #[error("requested {requested} information bits but blocklength is {ell}")]
    TooManyInfoBits { requested: usize, ell: usize },

    #[error("size mismatch for {what}: expected {expected}, got {got}")]
    SizeMismatch {
        what: &'static str,
        expected: usize,
        got: usize,
    },

    #[error("insufficient key material: need {needed} bits, have {available}")]
    InsufficientKey { needed: usize, available: usize },

    #[error("chaining infeasible: secret bits per block {secret} < key bits per block {key}")]
    ChainingInfeasible { secret: usize, key: usize },

    #[error("division by zero in GF(2^w)")]
    ZeroInverse,

    #[error("seed must be a nonzero field element")]
    ZeroSeed,

    #[error("polynomial of degree {0} is reducible")]
    Reducible(usize),

    #[error("no bundled irreducible modulus for width {0}")]
    NoModulus(usize),

    #[error("generator matrix has rank {rank}, expected {k}")]
    RankDeficient { rank: usize, k: usize },

    #[error("enumeration budget exceeded: {needed} > {budget}")]
    BudgetExceeded { needed: u128, budget: u128 },

    #[error("parse error: {0}")]
    Parse(String),
}

pub type Result<T> = std::result::Result<T, Error>;
