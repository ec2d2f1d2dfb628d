use std::path::PathBuf;

/// Errors raised by the material, quadrature, mesh and solver layers.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("invalid deformation: {0}")]
    InvalidDeformation(String),

    #[error("domain error: {0}")]
    Domain(String),

    #[error("invalid input: {0}")]
    Spec(String),

    #[error("stretch {value} outside convexification grid [{min}, {max}]; widen the grid in the scenario")]
    Range { value: f64, min: f64, max: f64 },

    #[error("potential evaluation failed at grid node {index}: {source}")]
    Sample { index: usize, source: Box<Error> },

    #[error("numerical failure: {0}")]
    Numerical(String),

    #[error("fiber {direction}: {source}")]
    Fiber { direction: usize, source: Box<Error> },

    #[error("element {element}, quadrature point {point}: {source}")]
    Material { element: usize, point: usize, source: Box<Error> },

    #[error("load step {step}: {message}")]
    Solver { step: usize, message: String },

    #[error("{path}: {message}")]
    Input { path: PathBuf, message: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
