use thiserror::Error;

/// Errors raised by the toolkit.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid model: {0}")]
    InvalidModel(String),
    #[error("dimension mismatch: {0}")]
    Dimension(String),
    #[error("unsupported geometry pair: {0}")]
    UnsupportedPair(String),
    #[error("infeasible-start: no strictly feasible point found")]
    InfeasibleStart,
    #[error("numerical-failure: {0}")]
    NumericalFailure(String),
    #[error("solver did not reach optimality: {0}")]
    SolverStatus(String),
    #[error("subproblem infeasible at knot {knot}")]
    Infeasible { knot: usize },
    #[error("degenerate-region: acceptance rate {rate:.2e} after {proposals} proposals")]
    DegenerateRegion { rate: f64, proposals: usize },
    #[error("degenerate motion set: {0}")]
    DegenerateMotionSet(String),
    #[error("plant-diverged: {0}")]
    PlantDiverged(String),
    #[error("no feasible grasp samples")]
    NoFeasibleGrasp,
    #[error("roadmap disconnected: reachable component {0:?}")]
    Disconnected(Vec<usize>),
    #[error("planning failure: {0}")]
    PlanningFailure(String),
    #[error("unknown scenario '{0}'")]
    UnknownScenario(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
