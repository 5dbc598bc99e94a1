use thiserror::Error;

/// Errors raised anywhere in the generation pipeline.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),
    #[error("dtype mismatch: {0}")]
    DtypeMismatch(String),
    #[error("value not representable: {0}")]
    InvalidValue(String),
    #[error("index out of range: {0}")]
    IndexOutOfRange(String),
    #[error("Division by non square matrix not supported.")]
    NonSquare,
    #[error("singular matrix")]
    Singular,
    #[error("integer division by zero")]
    DivisionByZero,

    #[error("duplicate name `{0}`")]
    DuplicateName(String),
    #[error("unknown name `{0}`")]
    UnknownName(String),
    #[error("function `{0}` started but never ended")]
    UnbalancedFunction(String),
    #[error("cannot start `{inner}` while `{outer}` is open")]
    NestedFunction { outer: String, inner: String },
    #[error("no open function{0}")]
    NoOpenFunction(String),
    #[error("code generation needs a numeric condition: {0}")]
    SymbolicCondition(String),

    #[error("malformed IR: {0}")]
    MalformedIR(String),
    #[error("unsupported instruction: {0}")]
    UnsupportedInstr(String),
    #[error("unbound name `{0}`")]
    UnboundName(String),

    #[error("block parameter error: {0}")]
    Param(String),
    #[error("block {block}: {source}")]
    Block { block: u64, source: Box<Error> },

    #[error("model parse error: {0}")]
    Parse(String),
    #[error("type conflict: {0}")]
    Conflict(String),
    #[error("undetermined type for {0}")]
    Undetermined(String),
    #[error("algebraic loop through blocks {0:?}")]
    AlgebraicLoop(Vec<u64>),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub(crate) fn in_block(self, block: u64) -> Error {
        match self {
            e @ Error::Block { .. } => e,
            e => Error::Block {
                block,
                source: Box::new(e),
            },
        }
    }
}
