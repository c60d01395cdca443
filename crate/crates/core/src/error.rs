use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum MeshError {
    #[error("mesh has no triangles")]
    Empty,
    #[error("triangle {triangle} references vertex {index} but only {count} vertices exist")]
    IndexOutOfRange {
        triangle: usize,
        index: usize,
        count: usize,
    },
    #[error("edge ({a}, {b}) is shared by {count} triangles; a closed surface needs exactly 2")]
    NonManifoldEdge { a: usize, b: usize, count: usize },
    #[error("triangles {first} and {second} traverse a shared edge in the same direction")]
    InconsistentWinding { first: usize, second: usize },
    #[error("surface is not orientable")]
    NonOrientable,
    #[error("triangle {triangle} is degenerate (area {area:e})")]
    Degenerate { triangle: usize, area: f64 },
    #[error("{subdivisions} subdivisions requested; at most {max} are allowed")]
    TooFine { subdivisions: u32, max: u32 },
    #[error("invalid sphere radius {0}")]
    InvalidRadius(f64),
    #[error("parse error on line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error("length mismatch: {left} vs {right}")]
    LengthMismatch { left: usize, right: usize },
    #[error("i/o error: {0}")]
    Io(String),
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum KernelError {
    #[error("source and target points coincide (r = 0)")]
    Coincident,
    #[error("viscosity must be positive, got {0}")]
    InvalidViscosity(f64),
    #[error("normal vector must have unit length, got |n| = {0}")]
    InvalidNormal(f64),
    #[error("derivative index {0} out of range 0..3")]
    InvalidIndex(usize),
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum QuadratureError {
    #[error("adaptive integration did not converge after depth {depth}: estimate {estimate:e}, gap {gap:e}")]
    NotConverged { depth: u32, estimate: f64, gap: f64 },
    #[error("target point lies on the element (distance {0:e})")]
    TargetOnElement(f64),
    #[error("pair configuration {claimed:?} does not match the {shared} shared vertices")]
    ConfigurationMismatch {
        claimed: crate::quadrature::PairKind,
        shared: usize,
    },
    #[error("non-finite value in pair integral between elements {0} and {1}")]
    NonFinite(usize, usize),
    #[error("no rule of degree {0}")]
    UnsupportedDegree(u32),
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SolveError {
    #[error(transparent)]
    Mesh(#[from] MeshError),
    #[error("quadrature failure for element pair ({p}, {q}): {source}")]
    Quadrature {
        p: usize,
        q: usize,
        #[source]
        source: QuadratureError,
    },
    #[error(transparent)]
    Point(#[from] QuadratureError),
    #[error(transparent)]
    Kernel(#[from] KernelError),
    #[error("singular system (pivot ratio estimate {condition:e})")]
    Singular { condition: f64 },
    #[error("length mismatch: expected {expected}, got {got}")]
    LengthMismatch { expected: usize, got: usize },
    #[error("point is within {distance:e} of the boundary")]
    TooCloseToBoundary { distance: f64 },
    #[error("mass matrix factorization failed")]
    Factorization,
    #[error("extrapolation did not settle at node {node}: residual {residual:e}")]
    Extrapolation { node: usize, residual: f64 },
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GridError {
    #[error("grid box [{lo:?}, {hi:?}] does not strictly contain the mesh")]
    MeshNotContained { lo: [f64; 3], hi: [f64; 3] },
    #[error("grid needs at least one cell per axis and a non-empty box")]
    InvalidShape,
    #[error("field length {got} does not match grid vertex count {expected}")]
    FieldMismatch { expected: usize, got: usize },
    #[error(transparent)]
    Mesh(#[from] MeshError),
    #[error(transparent)]
    Solve(#[from] SolveError),
    #[error("moment integration failed at grid vertex {vertex}: {source}")]
    Moment {
        vertex: usize,
        #[source]
        source: QuadratureError,
    },
    #[error("i/o error: {0}")]
    Io(String),
}

/// Any failure raised while running a verification driver.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error(transparent)]
    Mesh(#[from] MeshError),
    #[error(transparent)]
    Kernel(#[from] KernelError),
    #[error(transparent)]
    Quadrature(#[from] QuadratureError),
    #[error(transparent)]
    Solve(#[from] SolveError),
    #[error(transparent)]
    Grid(#[from] GridError),
}

impl Error {
    /// True for non-convergence, singular systems, and similar numerical
    /// breakdowns (as opposed to invalid input).
    pub fn is_numerical(&self) -> bool {
        match self {
            Error::Quadrature(_) => true,
            Error::Solve(e) | Error::Grid(GridError::Solve(e)) => matches!(
                e,
                SolveError::Quadrature { .. }
                    | SolveError::Point(_)
                    | SolveError::Singular { .. }
                    | SolveError::Factorization
                    | SolveError::Extrapolation { .. }
            ),
            Error::Grid(GridError::Moment { .. }) => true,
            _ => false,
        }
    }
}
