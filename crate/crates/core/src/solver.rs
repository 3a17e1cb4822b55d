//! Finite-horizon optimal control: the solver contract used by the
//! scheduling algorithms and its exact linear-quadratic implementation.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::model::{quad_form, Control, LinearQuadratic, State, SystemModel};

/// Open-loop optimum `u_N(·; x)` for one horizon and initial state.
#[derive(Debug, Clone, PartialEq)]
pub struct OpenLoopSolution {
    pub horizon: usize,
    /// `u_N(0..N; x)`.
    pub controls: Vec<Control>,
    /// `x_{u_N}(0..=N; x)`; `trajectory[0]` is the initial state.
    pub trajectory: Vec<State>,
    /// `V_N(x)`.
    pub value: f64,
    /// `V_{N-k}(x_{u_N}(k; x))` for `k = 0..N`.
    pub tail_values: Vec<f64>,
}

impl OpenLoopSolution {
    pub fn initial_state(&self) -> &State {
        &self.trajectory[0]
    }

    /// Largest relative violation of
    /// `tail_values[k] = ℓ(x_k, u_k) + tail_values[k+1]`, with the last tail
    /// compared against its single stage cost.
    pub fn bellman_defect(&self, model: &SystemModel) -> Result<f64> {
        let n = self.horizon;
        let mut worst: f64 = 0.0;
        for k in 0..n {
            let stage = model.stage_cost(&self.trajectory[k], &self.controls[k])?;
            let rest = if k + 1 < n {
                self.tail_values[k + 1]
            } else {
                0.0
            };
            let lhs = self.tail_values[k];
            let rhs = stage + rest;
            let scale = lhs.abs().max(rhs.abs()).max(f64::MIN_POSITIVE);
            worst = worst.max((lhs - rhs).abs() / scale);
        }
        Ok(worst)
    }

    /// Stage costs `ℓ(x_k, u_k)` along the prediction.
    pub fn stage_costs(&self, model: &SystemModel) -> Result<Vec<f64>> {
        self.trajectory
            .iter()
            .zip(&self.controls)
            .map(|(x, u)| model.stage_cost(x, u))
            .collect()
    }
}

/// Finite-horizon optimal control problem solver.
///
/// Implementations must be deterministic and reentrant.
pub trait FiniteHorizonSolver: Send + Sync {
    fn model(&self) -> &SystemModel;

    /// Minimizer of `J_N(x, ·)` together with its prediction and values.
    fn solve(&self, x: &State, horizon: usize) -> Result<OpenLoopSolution>;

    /// `V_N(x)`. The default solves the full problem.
    fn value(&self, x: &State, horizon: usize) -> Result<f64> {
        Ok(self.solve(x, horizon)?.value)
    }

    /// Largest horizon this solver can handle, if bounded.
    fn max_horizon(&self) -> Option<usize> {
        None
    }
}

/// `P_1..P_N` of the Riccati difference recursion, `P_1 = Q`.
#[derive(Debug, Clone, PartialEq)]
pub struct RiccatiLadder {
    rungs: Vec<DMatrix<f64>>,
}

impl RiccatiLadder {
    pub fn depth(&self) -> usize {
        self.rungs.len()
    }

    /// `P_j`, 1-based. `P_0 = 0` is not stored.
    pub fn p(&self, j: usize) -> &DMatrix<f64> {
        assert!(
            j >= 1 && j <= self.depth(),
            "ladder index {j} out of 1..={}",
            self.depth()
        );
        &self.rungs[j - 1]
    }

    pub fn rungs(&self) -> &[DMatrix<f64>] {
        &self.rungs
    }

    /// `V_j(x) = x'P_j x`; `V_0 = 0`.
    pub fn value(&self, j: usize, x: &DVector<f64>) -> f64 {
        if j == 0 {
            0.0
        } else {
            quad_form(self.p(j), x)
        }
    }
}

/// Builds `P_1 = Q` and `P_{j+1} = A'[P_j - P_j B (B'P_j B + R)^{-1} B'P_j] A + Q`.
pub fn riccati_ladder(lq: &LinearQuadratic, depth: usize) -> Result<RiccatiLadder> {
    if depth == 0 {
        return Err(Error::IndexOutOfRange(
            "ladder depth must be at least 1".into(),
        ));
    }
    let (a, b, q, r) = (lq.a(), lq.b(), lq.q(), lq.r());
    let mut rungs = Vec::with_capacity(depth);
    rungs.push(q.clone());
    for j in 1..depth {
        let p = &rungs[j - 1];
        let btp = b.transpose() * p;
        let gain = innovation_solve(&btp, b, r, j)?; // (B'PB + R)^{-1} B'P
        let inner = p - p * b * gain;
        let mut next = a.transpose() * inner * a + q;
        symmetrize(&mut next);
        rungs.push(next);
    }
    Ok(RiccatiLadder { rungs })
}

/// Solves `(B'PB + R) X = B'P` by Cholesky; `btp` is `B'P`.
fn innovation_solve(
    btp: &DMatrix<f64>,
    b: &DMatrix<f64>,
    r: &DMatrix<f64>,
    step: usize,
) -> Result<DMatrix<f64>> {
    let innovation = btp * b + r;
    let chol = innovation
        .cholesky()
        .ok_or(Error::SingularInnovation { step })?;
    Ok(chol.solve(btp))
}

fn symmetrize(m: &mut DMatrix<f64>) {
    let t = m.transpose();
    *m += t;
    *m *= 0.5;
}

/// Which ladder rung feeds the feedback gain at prediction step `k`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum GainConvention {
    /// `K_k` built from `P_{N-k-1}`, the cost-to-go after the step. This is
    /// the minimizer of `J_N`; predicted stage costs add up to `x'P_N x`.
    #[default]
    Exact,
    /// `K_k` built from `P_{N-k}`, one rung deeper. Kept to reproduce the
    /// oscillator reference numbers. The
    /// controls are not the minimizer of `J_N`, while `value` and
    /// `tail_values` still report `x'P_{N-k}x`, so Bellman consistency does
    /// not hold in this mode.
    Published,
}

/// Open-loop LQ solution read off the ladder. The last control is zero
/// (no terminal cost makes `u_N(N-1; x) = 0` optimal).
pub fn lq_solve(
    lq: &LinearQuadratic,
    ladder: &RiccatiLadder,
    x: &State,
    horizon: usize,
    convention: GainConvention,
) -> Result<OpenLoopSolution> {
    if horizon == 0 {
        return Err(Error::IndexOutOfRange("horizon must be at least 1".into()));
    }
    if ladder.depth() < horizon {
        return Err(Error::LadderTooShallow {
            depth: ladder.depth(),
            horizon,
        });
    }
    if x.len() != lq.state_dim() {
        return Err(Error::DimensionMismatch {
            what: "state",
            expected: lq.state_dim(),
            got: x.len(),
        });
    }
    let (a, b, r) = (lq.a(), lq.b(), lq.r());
    let mut controls = Vec::with_capacity(horizon);
    let mut trajectory = Vec::with_capacity(horizon + 1);
    trajectory.push(x.clone());
    for k in 0..horizon {
        let xk = &trajectory[k];
        let rung = match convention {
            GainConvention::Exact => horizon - k - 1,
            GainConvention::Published => horizon - k,
        };
        let u = if k + 1 == horizon || rung == 0 {
            DVector::zeros(lq.control_dim())
        } else {
            let btp = b.transpose() * ladder.p(rung);
            let gain = innovation_solve(&btp, b, r, rung)?;
            -(gain * a * xk)
        };
        let next = a * xk + b * &u;
        controls.push(u);
        trajectory.push(next);
    }
    let tail_values: Vec<f64> = (0..horizon)
        .map(|k| ladder.value(horizon - k, &trajectory[k]))
        .collect();
    Ok(OpenLoopSolution {
        horizon,
        controls,
        trajectory,
        value: tail_values[0],
        tail_values,
    })
}

/// [`FiniteHorizonSolver`] for an unconstrained linear-quadratic plant.
#[derive(Debug, Clone)]
pub struct LqSolver {
    lq: LinearQuadratic,
    ladder: RiccatiLadder,
    model: SystemModel,
    convention: GainConvention,
}

impl LqSolver {
    /// Precomputes the ladder up to `max_horizon`.
    pub fn new(lq: LinearQuadratic, max_horizon: usize) -> Result<Self> {
        Self::with_convention(lq, max_horizon, GainConvention::Exact)
    }

    pub fn with_convention(
        lq: LinearQuadratic,
        max_horizon: usize,
        convention: GainConvention,
    ) -> Result<Self> {
        let ladder = riccati_ladder(&lq, max_horizon)?;
        let model = lq.to_model();
        Ok(LqSolver {
            lq,
            ladder,
            model,
            convention,
        })
    }

    pub fn ladder(&self) -> &RiccatiLadder {
        &self.ladder
    }

    pub fn lq(&self) -> &LinearQuadratic {
        &self.lq
    }

    pub fn convention(&self) -> GainConvention {
        self.convention
    }
}

impl FiniteHorizonSolver for LqSolver {
    fn model(&self) -> &SystemModel {
        &self.model
    }

    fn solve(&self, x: &State, horizon: usize) -> Result<OpenLoopSolution> {
        lq_solve(&self.lq, &self.ladder, x, horizon, self.convention)
    }

    fn value(&self, x: &State, horizon: usize) -> Result<f64> {
        if horizon > self.ladder.depth() {
            return Err(Error::LadderTooShallow {
                depth: self.ladder.depth(),
                horizon,
            });
        }
        self.model.check_state_dim(x)?;
        Ok(self.ladder.value(horizon, x))
    }

    fn max_horizon(&self) -> Option<usize> {
        Some(self.ladder.depth())
    }
}
