use thiserror::Error;

/// Errors raised anywhere in the certification pipeline.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("dimension mismatch for {what}: expected {expected}, got {got}")]
    DimensionMismatch {
        what: &'static str,
        expected: usize,
        got: usize,
    },

    #[error("inadmissible state {value:?}{}", step_suffix(*.step))]
    InadmissibleState {
        value: Vec<f64>,
        step: Option<usize>,
    },

    #[error("inadmissible control {value:?}{}", step_suffix(*.step))]
    InadmissibleControl {
        value: Vec<f64>,
        step: Option<usize>,
    },

    #[error("invalid model: {0}")]
    InvalidModel(String),

    #[error("innovation matrix B'PB + R is not positive definite at ladder step {step}")]
    SingularInnovation { step: usize },

    #[error("Riccati ladder has depth {depth}, horizon {horizon} requested")]
    LadderTooShallow { depth: usize, horizon: usize },

    #[error("solver failure: {0}")]
    SolverFailure(String),

    #[error("no admissible rollout exists: {0}")]
    Infeasible(String),

    #[error("closed loop diverged: non-finite value at time {time}")]
    Diverged { time: usize },

    #[error("negative stage-cost sum {0}")]
    NegativeCostSum(f64),

    #[error("index out of range: {0}")]
    IndexOutOfRange(String),

    #[error(
        "splice anchor mismatch: new solution starts {distance:e} away from the old trajectory"
    )]
    MismatchedAnchor { distance: f64 },

    #[error("zero denominator in the slack-based suboptimality formula")]
    ZeroDenominator,

    #[error("nonpositive denominator: V_N(x_0) - theta = {0}")]
    NonPositiveDenominator(f64),

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("reports cover different initial sets ({0} vs {1} points)")]
    MismatchedSets(usize, usize),

    #[error("i/o error: {0}")]
    Io(String),
}

fn step_suffix(step: Option<usize>) -> String {
    match step {
        Some(k) => format!(" at step {k}"),
        None => String::new(),
    }
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}

pub type Result<T> = std::result::Result<T, Error>;
