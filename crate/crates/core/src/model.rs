//! Plant abstraction: dynamics, stage cost, admissible sets and the
//! one-step stepping primitive shared by every algorithm.

use std::fmt;
use std::sync::Arc;

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

/// State vector `x`.
pub type State = DVector<f64>;
/// Control vector `u`.
pub type Control = DVector<f64>;

pub type DynamicsFn = Arc<dyn Fn(&State, &Control) -> State + Send + Sync>;
pub type StageCostFn = Arc<dyn Fn(&State, &Control) -> f64 + Send + Sync>;
pub type MinStageCostFn = Arc<dyn Fn(&State) -> f64 + Send + Sync>;
pub type StatePredicate = Arc<dyn Fn(&State) -> bool + Send + Sync>;
pub type ControlPredicate = Arc<dyn Fn(&Control) -> bool + Send + Sync>;

/// `‖f(x*, u*) - x*‖` allowed at construction.
pub const EQUILIBRIUM_TOLERANCE: f64 = 1e-12;

/// Raw ingredients of a [`SystemModel`]; validated by [`SystemModel::new`].
pub struct ModelParts {
    pub state_dim: usize,
    pub control_dim: usize,
    pub dynamics: DynamicsFn,
    pub stage_cost: StageCostFn,
    /// `min_u ℓ(x, u)`, supplied analytically by the caller.
    pub min_stage_cost: MinStageCostFn,
    pub state_admissible: StatePredicate,
    pub control_admissible: ControlPredicate,
    pub equilibrium_state: State,
    pub equilibrium_control: Control,
}

/// Discrete-time plant `x⁺ = f(x, u)` with stage cost `ℓ`.
///
/// Immutable after construction and cheap to clone (closures are shared).
#[derive(Clone)]
pub struct SystemModel {
    state_dim: usize,
    control_dim: usize,
    dynamics: DynamicsFn,
    stage_cost: StageCostFn,
    min_stage_cost: MinStageCostFn,
    state_admissible: StatePredicate,
    control_admissible: ControlPredicate,
    equilibrium_state: State,
    equilibrium_control: Control,
}

impl fmt::Debug for SystemModel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("SystemModel")
            .field("state_dim", &self.state_dim)
            .field("control_dim", &self.control_dim)
            .field("equilibrium_state", &self.equilibrium_state.as_slice())
            .field("equilibrium_control", &self.equilibrium_control.as_slice())
            .finish_non_exhaustive()
    }
}

impl SystemModel {
    pub fn new(parts: ModelParts) -> Result<Self> {
        if parts.state_dim == 0 || parts.control_dim == 0 {
            return Err(Error::InvalidModel("dimensions must be positive".into()));
        }
        let model = SystemModel {
            state_dim: parts.state_dim,
            control_dim: parts.control_dim,
            dynamics: parts.dynamics,
            stage_cost: parts.stage_cost,
            min_stage_cost: parts.min_stage_cost,
            state_admissible: parts.state_admissible,
            control_admissible: parts.control_admissible,
            equilibrium_state: parts.equilibrium_state,
            equilibrium_control: parts.equilibrium_control,
        };
        model.check_state_dim(&model.equilibrium_state)?;
        model.check_control_dim(&model.equilibrium_control)?;

        let xs = &model.equilibrium_state;
        let us = &model.equilibrium_control;
        let drift = ((model.dynamics)(xs, us) - xs).norm();
        if !(drift <= EQUILIBRIUM_TOLERANCE) {
            return Err(Error::InvalidModel(format!(
                "f(x*, u*) deviates from x* by {drift:e}"
            )));
        }
        let cost = (model.stage_cost)(xs, us);
        if !(cost.abs() <= EQUILIBRIUM_TOLERANCE) {
            return Err(Error::InvalidModel(format!(
                "stage cost at the equilibrium is {cost:e}, expected 0"
            )));
        }
        Ok(model)
    }

    pub fn state_dim(&self) -> usize {
        self.state_dim
    }

    pub fn control_dim(&self) -> usize {
        self.control_dim
    }

    pub fn equilibrium_state(&self) -> &State {
        &self.equilibrium_state
    }

    pub fn equilibrium_control(&self) -> &Control {
        &self.equilibrium_control
    }

    pub fn check_state_dim(&self, x: &State) -> Result<()> {
        if x.len() != self.state_dim {
            return Err(Error::DimensionMismatch {
                what: "state",
                expected: self.state_dim,
                got: x.len(),
            });
        }
        Ok(())
    }

    pub fn check_control_dim(&self, u: &Control) -> Result<()> {
        if u.len() != self.control_dim {
            return Err(Error::DimensionMismatch {
                what: "control",
                expected: self.control_dim,
                got: u.len(),
            });
        }
        Ok(())
    }

    pub fn is_state_admissible(&self, x: &State) -> bool {
        x.len() == self.state_dim && (self.state_admissible)(x)
    }

    pub fn is_control_admissible(&self, u: &Control) -> bool {
        u.len() == self.control_dim && (self.control_admissible)(u)
    }

    /// Stage cost `ℓ(x, u)`. Dimensions are checked.
    pub fn stage_cost(&self, x: &State, u: &Control) -> Result<f64> {
        self.check_state_dim(x)?;
        self.check_control_dim(u)?;
        Ok((self.stage_cost)(x, u))
    }

    /// `ℓ*(x) = min_u ℓ(x, u)`.
    pub fn min_stage_cost(&self, x: &State) -> Result<f64> {
        self.check_state_dim(x)?;
        Ok((self.min_stage_cost)(x))
    }

    /// Euclidean distance to the equilibrium state.
    pub fn distance_to_equilibrium(&self, x: &State) -> f64 {
        (x - &self.equilibrium_state).norm()
    }

    /// One step of the plant, `f(x, u)`.
    pub fn step(&self, x: &State, u: &Control) -> Result<State> {
        self.check_state_dim(x)?;
        self.check_control_dim(u)?;
        if !(self.state_admissible)(x) {
            return Err(Error::InadmissibleState {
                value: x.as_slice().to_vec(),
                step: None,
            });
        }
        if !(self.control_admissible)(u) {
            return Err(Error::InadmissibleControl {
                value: u.as_slice().to_vec(),
                step: None,
            });
        }
        let next = (self.dynamics)(x, u);
        self.check_state_dim(&next)?;
        Ok(next)
    }

    /// Rolls `controls` out from `x0` and sums the stage costs.
    ///
    /// Returns the cost and the trajectory `x(0..=len)`. Every visited state,
    /// the terminal one included, must be admissible.
    pub fn trajectory_cost(&self, x0: &State, controls: &[Control]) -> Result<(f64, Vec<State>)> {
        self.check_state_dim(x0)?;
        let mut trajectory = Vec::with_capacity(controls.len() + 1);
        trajectory.push(x0.clone());
        let mut cost = 0.0;
        for (k, u) in controls.iter().enumerate() {
            let x = &trajectory[k];
            let next = self.step(x, u).map_err(|e| at_step(e, k))?;
            cost += (self.stage_cost)(x, u);
            trajectory.push(next);
        }
        let last = trajectory.last().expect("trajectory holds x0");
        if !(self.state_admissible)(last) {
            return Err(Error::InadmissibleState {
                value: last.as_slice().to_vec(),
                step: Some(controls.len()),
            });
        }
        Ok((cost, trajectory))
    }

    /// Samples the stage-cost invariants on the given points: positivity off
    /// the equilibrium and `ℓ*(x) <= ℓ(x, u)`.
    pub fn check_cost_invariants(&self, states: &[State], controls: &[Control]) -> Result<()> {
        for x in states {
            let off_equilibrium = self.distance_to_equilibrium(x) > 0.0;
            let lower = self.min_stage_cost(x)?;
            for u in controls.iter().filter(|u| self.is_control_admissible(u)) {
                let cost = self.stage_cost(x, u)?;
                if off_equilibrium && !(cost > 0.0) {
                    return Err(Error::InvalidModel(format!(
                        "stage cost {cost} is not positive at x = {:?}",
                        x.as_slice()
                    )));
                }
                if lower > cost + 1e-12 * cost.abs().max(1.0) {
                    return Err(Error::InvalidModel(format!(
                        "min_stage_cost {lower} exceeds stage cost {cost} at x = {:?}",
                        x.as_slice()
                    )));
                }
            }
        }
        Ok(())
    }
}

fn at_step(e: Error, k: usize) -> Error {
    match e {
        Error::InadmissibleState { value, .. } => Error::InadmissibleState {
            value,
            step: Some(k),
        },
        Error::InadmissibleControl { value, .. } => Error::InadmissibleControl {
            value,
            step: Some(k),
        },
        other => other,
    }
}

/// Linear plant `x⁺ = Ax + Bu` with cost `x'Qx + u'Ru`, unconstrained.
#[derive(Debug, Clone, PartialEq)]
pub struct LinearQuadratic {
    a: DMatrix<f64>,
    b: DMatrix<f64>,
    q: DMatrix<f64>,
    r: DMatrix<f64>,
}

const SYMMETRY_TOLERANCE: f64 = 1e-12;

impl LinearQuadratic {
    pub fn new(a: DMatrix<f64>, b: DMatrix<f64>, q: DMatrix<f64>, r: DMatrix<f64>) -> Result<Self> {
        let n = a.nrows();
        let m = b.ncols();
        if n == 0 || m == 0 {
            return Err(Error::InvalidModel("empty system matrices".into()));
        }
        let shape_ok = a.ncols() == n
            && b.nrows() == n
            && q.nrows() == n
            && q.ncols() == n
            && r.nrows() == m
            && r.ncols() == m;
        if !shape_ok {
            return Err(Error::InvalidModel(format!(
                "inconsistent shapes: A {}x{}, B {}x{}, Q {}x{}, R {}x{}",
                a.nrows(),
                a.ncols(),
                b.nrows(),
                b.ncols(),
                q.nrows(),
                q.ncols(),
                r.nrows(),
                r.ncols()
            )));
        }
        if [&a, &b, &q, &r]
            .iter()
            .any(|mat| mat.iter().any(|v| !v.is_finite()))
        {
            return Err(Error::InvalidModel("non-finite matrix entry".into()));
        }
        if asymmetry(&q) > SYMMETRY_TOLERANCE {
            return Err(Error::InvalidModel("Q is not symmetric".into()));
        }
        if asymmetry(&r) > SYMMETRY_TOLERANCE {
            return Err(Error::InvalidModel("R is not symmetric".into()));
        }
        let q_min = min_eigenvalue(&q);
        if q_min < -1e-12 {
            return Err(Error::InvalidModel(format!(
                "Q is not positive semidefinite (smallest eigenvalue {q_min})"
            )));
        }
        let r_min = min_eigenvalue(&r);
        if !(r_min > 0.0) {
            return Err(Error::InvalidModel(format!(
                "R is not positive definite (smallest eigenvalue {r_min})"
            )));
        }
        Ok(LinearQuadratic { a, b, q, r })
    }

    /// Two-state oscillator with an unstable rotation (eigenvalues 1 ± 1.1i)
    /// and a single input acting on the second state; `Q = I`, `R = 1`.
    ///
    /// This is the standard test plant used throughout the experiments.
    pub fn unstable_oscillator() -> Self {
        LinearQuadratic::new(
            DMatrix::from_row_slice(2, 2, &[1.0, 1.1, -1.1, 1.0]),
            DMatrix::from_row_slice(2, 1, &[0.0, 1.0]),
            DMatrix::identity(2, 2),
            DMatrix::identity(1, 1),
        )
        .expect("oscillator matrices are valid")
    }

    pub fn a(&self) -> &DMatrix<f64> {
        &self.a
    }

    pub fn b(&self) -> &DMatrix<f64> {
        &self.b
    }

    pub fn q(&self) -> &DMatrix<f64> {
        &self.q
    }

    pub fn r(&self) -> &DMatrix<f64> {
        &self.r
    }

    pub fn state_dim(&self) -> usize {
        self.a.nrows()
    }

    pub fn control_dim(&self) -> usize {
        self.b.ncols()
    }

    /// The induced plant, with the origin as equilibrium and no constraints.
    pub fn to_model(&self) -> SystemModel {
        let (a, b) = (self.a.clone(), self.b.clone());
        let (q, r) = (self.q.clone(), self.r.clone());
        let q_min = self.q.clone();
        SystemModel::new(ModelParts {
            state_dim: self.state_dim(),
            control_dim: self.control_dim(),
            dynamics: Arc::new(move |x, u| &a * x + &b * u),
            stage_cost: Arc::new(move |x, u| quad_form(&q, x) + quad_form(&r, u)),
            // R ≻ 0 puts the minimum at u = 0.
            min_stage_cost: Arc::new(move |x| quad_form(&q_min, x)),
            state_admissible: Arc::new(|_| true),
            control_admissible: Arc::new(|_| true),
            equilibrium_state: DVector::zeros(self.state_dim()),
            equilibrium_control: DVector::zeros(self.control_dim()),
        })
        .expect("linear plants are at rest at the origin")
    }
}

/// `v' M v`.
pub fn quad_form(m: &DMatrix<f64>, v: &DVector<f64>) -> f64 {
    v.dot(&(m * v))
}

pub(crate) fn asymmetry(m: &DMatrix<f64>) -> f64 {
    (m - m.transpose()).amax()
}

pub(crate) fn min_eigenvalue(m: &DMatrix<f64>) -> f64 {
    let sym = (m + m.transpose()) * 0.5;
    sym.symmetric_eigenvalues().min()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn v(xs: &[f64]) -> DVector<f64> {
        DVector::from_row_slice(xs)
    }

    #[test]
    fn step_examples() {
        let model = LinearQuadratic::unstable_oscillator().to_model();
        let next = model.step(&v(&[0.0, 1.0]), &v(&[0.0])).unwrap();
        assert!((next - v(&[1.1, 1.0])).amax() < 1e-15);
        let next = model.step(&v(&[0.0, 0.0]), &v(&[0.0])).unwrap();
        assert_eq!(next, v(&[0.0, 0.0]));
        let next = model.step(&v(&[1.0, 0.0]), &v(&[1.0])).unwrap();
        assert!((next - v(&[1.0, -0.1])).amax() < 1e-15);
    }

    #[test]
    fn step_checks_dimensions() {
        let model = LinearQuadratic::unstable_oscillator().to_model();
        let err = model.step(&v(&[0.0, 1.0, 2.0]), &v(&[0.0])).unwrap_err();
        assert!(matches!(
            err,
            Error::DimensionMismatch { what: "state", .. }
        ));
        let err = model.step(&v(&[0.0, 1.0]), &v(&[0.0, 0.0])).unwrap_err();
        assert!(matches!(
            err,
            Error::DimensionMismatch {
                what: "control",
                ..
            }
        ));
    }

    fn boxed_model() -> SystemModel {
        let lq = LinearQuadratic::unstable_oscillator();
        let base = lq.to_model();
        let (d, c, m) = (
            base.dynamics.clone(),
            base.stage_cost.clone(),
            base.min_stage_cost.clone(),
        );
        SystemModel::new(ModelParts {
            state_dim: 2,
            control_dim: 1,
            dynamics: d,
            stage_cost: c,
            min_stage_cost: m,
            state_admissible: Arc::new(|x| x.amax() <= 2.0),
            control_admissible: Arc::new(|u| u[0].abs() <= 1.0),
            equilibrium_state: DVector::zeros(2),
            equilibrium_control: DVector::zeros(1),
        })
        .unwrap()
    }

    #[test]
    fn inadmissible_inputs_are_reported() {
        let model = boxed_model();
        let err = model.step(&v(&[0.0, 1.0]), &v(&[3.0])).unwrap_err();
        assert_eq!(
            err,
            Error::InadmissibleControl {
                value: vec![3.0],
                step: None
            }
        );
        let err = model.step(&v(&[5.0, 0.0]), &v(&[0.0])).unwrap_err();
        assert_eq!(
            err,
            Error::InadmissibleState {
                value: vec![5.0, 0.0],
                step: None
            }
        );
        // (1.5, 1) -> (2.6, -0.65): leaves the box after the first step.
        let err = model
            .trajectory_cost(&v(&[1.5, 1.0]), &[v(&[0.0]), v(&[0.0])])
            .unwrap_err();
        assert!(matches!(
            err,
            Error::InadmissibleState { step: Some(1), .. }
        ));
        let err = model
            .trajectory_cost(&v(&[0.0, 0.1]), &[v(&[0.0]), v(&[2.0])])
            .unwrap_err();
        assert!(matches!(
            err,
            Error::InadmissibleControl { step: Some(1), .. }
        ));
    }

    #[test]
    fn trajectory_cost_examples() {
        let model = LinearQuadratic::unstable_oscillator().to_model();
        let origin = v(&[0.0, 0.0]);
        let (cost, traj) = model
            .trajectory_cost(&origin, &[v(&[0.0]), v(&[0.0])])
            .unwrap();
        assert_eq!(cost, 0.0);
        assert!(traj.iter().all(|x| *x == origin));

        let (cost, traj) = model
            .trajectory_cost(&v(&[0.0, 1.0]), &[v(&[0.0])])
            .unwrap();
        assert_eq!(cost, 1.0);
        assert_eq!(traj.len(), 2);
        assert!((&traj[1] - v(&[1.1, 1.0])).amax() < 1e-15);

        let (cost, traj) = model.trajectory_cost(&v(&[0.3, -0.2]), &[]).unwrap();
        assert_eq!(cost, 0.0);
        assert_eq!(traj, vec![v(&[0.3, -0.2])]);
    }

    #[test]
    fn rejects_bad_equilibrium() {
        let err = SystemModel::new(ModelParts {
            state_dim: 1,
            control_dim: 1,
            dynamics: Arc::new(|x, _| x.add_scalar(1.0)),
            stage_cost: Arc::new(|x, u| x.norm_squared() + u.norm_squared()),
            min_stage_cost: Arc::new(|x| x.norm_squared()),
            state_admissible: Arc::new(|_| true),
            control_admissible: Arc::new(|_| true),
            equilibrium_state: DVector::zeros(1),
            equilibrium_control: DVector::zeros(1),
        })
        .unwrap_err();
        assert!(matches!(err, Error::InvalidModel(_)));
    }

    #[test]
    fn rejects_bad_cost_matrices() {
        let a = DMatrix::identity(2, 2);
        let b = DMatrix::from_row_slice(2, 1, &[0.0, 1.0]);
        let nonsym = DMatrix::from_row_slice(2, 2, &[1.0, 0.5, 0.0, 1.0]);
        assert!(
            LinearQuadratic::new(a.clone(), b.clone(), nonsym, DMatrix::identity(1, 1)).is_err()
        );
        let indefinite = DMatrix::from_row_slice(2, 2, &[1.0, 0.0, 0.0, -1.0]);
        assert!(
            LinearQuadratic::new(a.clone(), b.clone(), indefinite, DMatrix::identity(1, 1))
                .is_err()
        );
        let zero_r = DMatrix::zeros(1, 1);
        assert!(
            LinearQuadratic::new(a.clone(), b.clone(), DMatrix::identity(2, 2), zero_r).is_err()
        );
        let wrong_b = DMatrix::from_row_slice(3, 1, &[0.0, 1.0, 0.0]);
        assert!(
            LinearQuadratic::new(a, wrong_b, DMatrix::identity(2, 2), DMatrix::identity(1, 1))
                .is_err()
        );
    }

    #[test]
    fn cost_invariants_hold_on_samples() {
        let model = LinearQuadratic::unstable_oscillator().to_model();
        let states: Vec<_> = (-3..=3)
            .flat_map(|i| (-3..=3).map(move |j| v(&[i as f64 * 0.5, j as f64 * 0.5])))
            .collect();
        let controls: Vec<_> = (-4..=4).map(|i| v(&[i as f64 * 0.25])).collect();
        model.check_cost_invariants(&states, &controls).unwrap();
        let xs = model.equilibrium_state();
        let us = model.equilibrium_control();
        assert_eq!(model.stage_cost(xs, us).unwrap(), 0.0);
    }
}
