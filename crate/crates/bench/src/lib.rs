//! Fixed workloads shared by the benchmarks.

use rlmpc::sweep::InitialSet;
use rlmpc::{LinearQuadratic, LqSolver, State};

pub fn oscillator(depth: usize) -> LqSolver {
    LqSolver::new(LinearQuadratic::unstable_oscillator(), depth).expect("oscillator plant is valid")
}

/// `count` points on the unit circle.
pub fn circle(count: usize) -> InitialSet {
    InitialSet::unit_circle(count)
}

pub fn start() -> State {
    State::from_row_slice(&[0.6, -0.8])
}
