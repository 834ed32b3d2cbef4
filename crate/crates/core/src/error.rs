use thiserror::Error;

/// Errors produced by terrain queries, contact solves and the drop simulation.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("parameter out of range: {name} = {value} (expected within [0, 1])")]
    Domain { name: &'static str, value: f64 },

    #[error("point ({x:.6}, {y:.6}) is outside the evaluable terrain footprint")]
    OutOfBounds { x: f64, y: f64 },

    #[error("contact solver failed: {0}")]
    Solver(String),

    #[error(
        "no static equilibrium after {iterations} iterations (last q = {last_q:?}, v = {last_v:?})"
    )]
    Convergence {
        iterations: usize,
        last_q: [f64; 3],
        last_v: [f64; 3],
    },

    #[error("pose query at path parameter u = {u} failed: {source}")]
    PathSample {
        u: f64,
        #[source]
        source: Box<Error>,
    },

    #[error("schema error in {path}: {message}")]
    Schema { path: String, message: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    /// Short machine-readable name of the error variant.
    pub fn kind(&self) -> &'static str {
        match self {
            Error::InvalidInput(_) => "invalid_input",
            Error::Domain { .. } => "domain",
            Error::OutOfBounds { .. } => "out_of_bounds",
            Error::Solver(_) => "solver",
            Error::Convergence { .. } => "convergence",
            Error::PathSample { source, .. } => source.kind(),
            Error::Schema { .. } => "schema",
            Error::Io(_) => "io",
        }
    }
}
