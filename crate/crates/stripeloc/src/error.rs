use thiserror::Error;

/// Errors raised across the library.
#[derive(Debug, Error)]
pub enum Error {
    #[error("degenerate geometry: {0}")]
    DegenerateGeometry(String),

    #[error("numerical failure: {0}")]
    NumericalFailure(String),

    #[error("singular FIM (rank {rank} of {dim})")]
    SingularFim {
        rank: usize,
        dim: usize,
        /// Unit vector spanning the (numerical) null space, in the global parameter layout.
        null_direction: Vec<f64>,
    },

    #[error("rank-deficient basis: {cols} columns, numerical rank {rank}, condition {cond:.3e}")]
    RankDeficient { cols: usize, rank: usize, cond: f64 },

    #[error("phase aggregate has vanishing magnitude {0:.3e}")]
    ZeroAggregate(f64),

    #[error("null space is empty: MK = {mk} <= L = {l}")]
    KernelEmpty { mk: usize, l: usize },

    #[error("search failure: {0}")]
    SearchFailure(String),

    #[error("schema error at `{path}`: {msg}")]
    SchemaError { path: String, msg: String },

    #[error("semantic error: {0}")]
    SemanticError(String),

    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
}

impl Error {
    /// True for errors caused by bad user input rather than numerics.
    pub fn is_config_error(&self) -> bool {
        matches!(
            self,
            Error::SchemaError { .. } | Error::SemanticError(_) | Error::Io(_)
        )
    }
}

pub type Result<T> = std::result::Result<T, Error>;
