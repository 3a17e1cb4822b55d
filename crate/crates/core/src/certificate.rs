//! Certificate arithmetic: m-step suboptimality indices, the control-update
//! acceptance test, the watchdog residual and accumulated slack, and the
//! slack-based a-posteriori suboptimality formulas.

use std::fmt::Write as _;

use serde::Serialize;

use crate::error::{Error, Result};
use crate::model::Control;
use crate::solver::{FiniteHorizonSolver, OpenLoopSolution};

/// Default absolute slack on certificate inequalities.
pub const DEFAULT_CERT_SLACK: f64 = 1e-10;

/// Tolerance on the splice anchor `sol_new.x0 == sol_old.trajectory[j]`.
pub const ANCHOR_TOLERANCE: f64 = 1e-10;

/// One schedule interval `[σ(n), σ(n+1))` of a closed loop.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Certificate {
    pub n: usize,
    pub sigma_n: usize,
    pub m_n: usize,
    /// `V_N(x_n)`.
    pub v_before: f64,
    /// `V_N(x_{n+1})`.
    pub v_after: f64,
    /// Stage costs over the interval.
    pub cost_sum: f64,
    /// Unclamped maximal index satisfying the relaxed Lyapunov inequality.
    pub alpha: f64,
    /// Residual for the configured target `ᾱ`.
    pub rho: f64,
    /// Accumulated slack after this interval.
    pub s_n: f64,
}

pub const CERTIFICATE_CSV_HEADER: &str = "n,sigma_n,m_n,v_before,v_after,cost_sum,alpha,rho,s_n";

impl Certificate {
    pub fn csv_row(&self) -> String {
        format!(
            "{},{},{},{},{},{},{},{},{}",
            self.n,
            self.sigma_n,
            self.m_n,
            fmt_f64(self.v_before),
            fmt_f64(self.v_after),
            fmt_f64(self.cost_sum),
            fmt_f64(self.alpha),
            fmt_f64(self.rho),
            fmt_f64(self.s_n)
        )
    }
}

/// Certificates as CSV, header row first.
pub fn certificates_to_csv(certs: &[Certificate]) -> String {
    let mut out = String::with_capacity(64 * (certs.len() + 1));
    out.push_str(CERTIFICATE_CSV_HEADER);
    out.push('\n');
    for c in certs {
        let _ = writeln!(out, "{}", c.csv_row());
    }
    out
}

/// 17 significant digits in scientific notation; enough to round-trip f64.
pub fn fmt_f64(x: f64) -> String {
    if x.is_nan() {
        "NaN".to_string()
    } else if x.is_infinite() {
        if x > 0.0 { "inf" } else { "-inf" }.to_string()
    } else {
        format!("{x:.16e}")
    }
}

/// Maximal `α` with `v_before >= v_after + α·cost_sum`.
///
/// At the equilibrium (`cost_sum == 0`) the quotient is 0/0 and every α
/// works; 1 is returned.
pub fn alpha_m_step(v_before: f64, v_after: f64, cost_sum: f64) -> Result<f64> {
    if cost_sum < 0.0 || cost_sum.is_nan() {
        return Err(Error::NegativeCostSum(cost_sum));
    }
    if cost_sum == 0.0 {
        return Ok(1.0);
    }
    Ok((v_before - v_after) / cost_sum)
}

/// Watchdog residual `ρ = v_before - v_after - ᾱ·cost_sum`.
pub fn rho(v_before: f64, v_after: f64, cost_sum: f64, alpha_bar: f64) -> f64 {
    v_before - v_after - alpha_bar * cost_sum
}

/// Control-update test: may the tail of `sol_old` after `j` applied steps be
/// replaced by `sol_new`, solved at `sol_old.trajectory[j]`, without losing
/// the `m_n`-step certificate for `ᾱ`?
///
/// Checks
/// `V_N(x_new(m_n - j)) - V_{N-j}(x_j) <= (1-ᾱ) Σ_{k<j} ℓ_old(k) - ᾱ Σ_{k=j}^{m_n-1} ℓ_new(k-j)`
/// with `V_{N-j}(x_j)` read from `sol_old.tail_values[j]`.
pub fn update_acceptable(
    solver: &dyn FiniteHorizonSolver,
    sol_old: &OpenLoopSolution,
    sol_new: &OpenLoopSolution,
    j: usize,
    m_n: usize,
    alpha_bar: f64,
    cert_slack: f64,
) -> Result<bool> {
    let horizon = sol_old.horizon;
    if !(j >= 1 && j < m_n && m_n < horizon) {
        return Err(Error::IndexOutOfRange(format!(
            "need 1 <= j <= m_n - 1 <= N - 2, got j = {j}, m_n = {m_n}, N = {horizon}"
        )));
    }
    if sol_new.horizon != horizon {
        return Err(Error::IndexOutOfRange(format!(
            "re-solved horizon {} differs from {horizon}",
            sol_new.horizon
        )));
    }
    check_anchor(sol_old, sol_new, j)?;
    let model = solver.model();
    let v_end = solver.value(&sol_new.trajectory[m_n - j], horizon)?;
    let lhs = v_end - sol_old.tail_values[j];
    let mut applied = 0.0;
    for k in 0..j {
        applied += model.stage_cost(&sol_old.trajectory[k], &sol_old.controls[k])?;
    }
    let mut fresh = 0.0;
    for k in 0..(m_n - j) {
        fresh += model.stage_cost(&sol_new.trajectory[k], &sol_new.controls[k])?;
    }
    let rhs = (1.0 - alpha_bar) * applied - alpha_bar * fresh;
    Ok(lhs <= rhs + cert_slack)
}

fn check_anchor(sol_old: &OpenLoopSolution, sol_new: &OpenLoopSolution, j: usize) -> Result<()> {
    let anchor = &sol_old.trajectory[j];
    let start = sol_new.initial_state();
    if anchor.len() != start.len() {
        return Err(Error::DimensionMismatch {
            what: "splice anchor",
            expected: anchor.len(),
            got: start.len(),
        });
    }
    let distance = (anchor - start).amax();
    if !(distance <= ANCHOR_TOLERANCE) {
        return Err(Error::MismatchedAnchor { distance });
    }
    Ok(())
}

/// Composite control `û(k) = u_old(k)` for `k < j`, `u_new(k - j)` for
/// `j <= k < N`.
pub fn splice_control(
    sol_old: &OpenLoopSolution,
    sol_new: &OpenLoopSolution,
    j: usize,
) -> Result<Vec<Control>> {
    let horizon = sol_old.horizon;
    if !(j >= 1 && j < horizon) {
        return Err(Error::IndexOutOfRange(format!(
            "splice index {j} outside 1..={}",
            horizon - 1
        )));
    }
    if sol_new.controls.len() < horizon - j {
        return Err(Error::IndexOutOfRange(format!(
            "re-solved sequence has {} controls, need {}",
            sol_new.controls.len(),
            horizon - j
        )));
    }
    check_anchor(sol_old, sol_new, j)?;
    let mut spliced = Vec::with_capacity(horizon);
    spliced.extend(sol_old.controls[..j].iter().cloned());
    spliced.extend(sol_new.controls[..horizon - j].iter().cloned());
    Ok(spliced)
}

/// The spliced plan as an [`OpenLoopSolution`] anchored at the old initial
/// state. `value` is kept and `tail_values[k]` becomes the budget
/// `value - Σ_{i<k} ℓ_i`, which equals `V_{N-k}` along an unspliced
/// optimal prediction. Checking [`update_acceptable`] against such a plan is
/// the relaxed Lyapunov inequality for the next splice.
pub fn spliced_plan(
    solver: &dyn FiniteHorizonSolver,
    sol_old: &OpenLoopSolution,
    sol_new: &OpenLoopSolution,
    j: usize,
) -> Result<OpenLoopSolution> {
    let controls = splice_control(sol_old, sol_new, j)?;
    let model = solver.model();
    let x0 = sol_old.initial_state();
    let mut trajectory = Vec::with_capacity(controls.len() + 1);
    trajectory.push(x0.clone());
    let mut tail_values = Vec::with_capacity(controls.len());
    let mut budget = sol_old.value;
    for (k, u) in controls.iter().enumerate() {
        tail_values.push(budget);
        let x = &trajectory[k];
        budget -= model.stage_cost(x, u)?;
        let next = model.step(x, u)?;
        trajectory.push(next);
    }
    Ok(OpenLoopSolution {
        horizon: sol_old.horizon,
        controls,
        trajectory,
        value: sol_old.value,
        tail_values,
    })
}

/// Largest `α` for which the accumulated inequality
/// `V_N(x_{n+1}) + α Σ costs <= V_N(x_0)` holds, expressed through the slack:
/// `(V_0 - V_{n+1}) / (V_0 - V_{n+1} - s_n) · ᾱ`.
pub fn alpha_from_slack(v0: f64, v_np1: f64, s_n: f64, alpha_bar: f64) -> Result<f64> {
    let decrease = v0 - v_np1;
    let denominator = decrease - s_n;
    if denominator == 0.0 || !denominator.is_finite() {
        return Err(Error::ZeroDenominator);
    }
    Ok(decrease / denominator * alpha_bar)
}

/// Limit form `ᾱ V_N(x_0) / (V_N(x_0) - θ)` with `θ = lim s_n`.
pub fn alpha_asymptotic(v0: f64, theta: f64, alpha_bar: f64) -> Result<f64> {
    let denominator = v0 - theta;
    if !(denominator > 0.0) {
        return Err(Error::NonPositiveDenominator(denominator));
    }
    Ok(alpha_bar * v0 / denominator)
}

/// Running watchdog sum `s_n = Σ_{i<=n} ρ_i`.
#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct SlackAccumulator {
    s: f64,
    history: Vec<f64>,
}

impl SlackAccumulator {
    pub fn new() -> Self {
        Self::default()
    }

    /// Adds `ρ` and returns the new sum.
    pub fn push(&mut self, rho: f64) -> f64 {
        self.history.push(rho);
        self.s += rho;
        self.s
    }

    /// Replaces the most recent `ρ` and returns the new sum.
    pub fn amend_last(&mut self, rho: f64) -> f64 {
        if let Some(last) = self.history.last_mut() {
            *last = rho;
            self.s = self.history.iter().sum();
        }
        self.s
    }

    pub fn value(&self) -> f64 {
        self.s
    }

    pub fn history(&self) -> &[f64] {
        &self.history
    }

    pub fn len(&self) -> usize {
        self.history.len()
    }

    pub fn is_empty(&self) -> bool {
        self.history.is_empty()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::LinearQuadratic;
    use crate::solver::{GainConvention, LqSolver};
    use nalgebra::DVector;

    fn v(xs: &[f64]) -> DVector<f64> {
        DVector::from_row_slice(xs)
    }

    #[test]
    fn alpha_reference_quotients() {
        let (vb, va) = (5.109994744, 2.827656536);
        let cost = (vb - va) / 0.5144;
        assert!((alpha_m_step(vb, va, cost).unwrap() - 0.5144).abs() < 5e-5);
        let (vb, va) = (4.08117251, 0.96290399);
        let cost = (vb - va) / 0.7733;
        assert!((alpha_m_step(vb, va, cost).unwrap() - 0.7733).abs() < 5e-5);
        assert_eq!(alpha_m_step(3.0, 3.0, 3.0).unwrap(), 0.0);
    }

    #[test]
    fn alpha_conventions_and_errors() {
        assert_eq!(alpha_m_step(0.0, 0.0, 0.0).unwrap(), 1.0);
        assert_eq!(
            alpha_m_step(1.0, 2.0, -1.0),
            Err(Error::NegativeCostSum(-1.0))
        );
        assert!(alpha_m_step(1.0, 3.0, 1.0).unwrap() < 0.0);
    }

    #[test]
    fn rho_arithmetic() {
        assert_eq!(rho(5.0, 3.0, 4.0, 0.5), 0.0);
        assert_eq!(rho(5.0, 3.0, 10.0, 0.5), -3.0);
    }

    #[test]
    fn rho_positive_at_reference_state() {
        let solver = LqSolver::with_convention(
            LinearQuadratic::unstable_oscillator(),
            3,
            GainConvention::Published,
        )
        .unwrap();
        let sol = solver.solve(&v(&[0.0, 1.0]), 3).unwrap();
        let costs = sol.stage_costs(solver.model()).unwrap();
        let v_after = solver.value(&sol.trajectory[2], 3).unwrap();
        let cost = costs[0] + costs[1];
        let r = rho(sol.value, v_after, cost, 0.5);
        let alpha = alpha_m_step(sol.value, v_after, cost).unwrap();
        assert!(r > 0.0);
        assert!((r - cost * (alpha - 0.5)).abs() < 1e-12);
    }

    #[test]
    fn slack_formulas() {
        assert_eq!(alpha_from_slack(10.0, 2.0, 0.0, 0.37).unwrap(), 0.37);
        assert_eq!(alpha_from_slack(10.0, 2.0, 4.0, 0.5).unwrap(), 1.0);
        assert_eq!(
            alpha_from_slack(10.0, 2.0, 8.0, 0.5),
            Err(Error::ZeroDenominator)
        );
        assert_eq!(alpha_asymptotic(7.0, 0.0, 0.4).unwrap(), 0.4);
        assert!((alpha_asymptotic(5.0, 2.5, 0.4).unwrap() - 0.8).abs() < 1e-15);
        assert!(matches!(
            alpha_asymptotic(5.0, 5.0, 0.4),
            Err(Error::NonPositiveDenominator(_))
        ));
    }

    #[test]
    fn slack_accumulator_tracks_history() {
        let mut acc = SlackAccumulator::new();
        for r in [0.5, -0.25, 1e-3, -2.0] {
            acc.push(r);
        }
        let sum: f64 = acc.history().iter().sum();
        assert!((acc.value() - sum).abs() < 1e-12);
        assert_eq!(acc.len(), 4);
    }

    #[test]
    fn splice_preserves_prefix_and_checks_anchor() {
        let solver = LqSolver::new(LinearQuadratic::unstable_oscillator(), 4).unwrap();
        let old = solver.solve(&v(&[0.4, -1.0]), 4).unwrap();
        let new = solver.solve(&old.trajectory[2], 4).unwrap();
        let spliced = splice_control(&old, &new, 2).unwrap();
        assert_eq!(spliced.len(), 4);
        assert_eq!(&spliced[..2], &old.controls[..2]);
        assert_eq!(&spliced[2..], &new.controls[..2]);

        let elsewhere = solver.solve(&v(&[1.0, 1.0]), 4).unwrap();
        assert!(matches!(
            splice_control(&old, &elsewhere, 2),
            Err(Error::MismatchedAnchor { .. })
        ));
        assert!(matches!(
            splice_control(&old, &new, 4),
            Err(Error::IndexOutOfRange(_))
        ));
    }

    #[test]
    fn splice_at_origin_is_all_zero() {
        let solver = LqSolver::new(LinearQuadratic::unstable_oscillator(), 3).unwrap();
        let old = solver.solve(&v(&[0.0, 0.0]), 3).unwrap();
        let new = solver.solve(&old.trajectory[1], 3).unwrap();
        let spliced = splice_control(&old, &new, 1).unwrap();
        assert!(spliced.iter().all(|u| u.amax() == 0.0));
    }

    #[test]
    fn update_acceptable_rejects_degenerate_indices() {
        let solver = LqSolver::new(LinearQuadratic::unstable_oscillator(), 3).unwrap();
        let old = solver.solve(&v(&[0.0, 1.0]), 3).unwrap();
        let new = solver.solve(&old.trajectory[1], 3).unwrap();
        assert!(matches!(
            update_acceptable(&solver, &old, &new, 2, 2, 0.1, DEFAULT_CERT_SLACK),
            Err(Error::IndexOutOfRange(_))
        ));
        assert!(matches!(
            update_acceptable(&solver, &old, &new, 1, 3, 0.1, DEFAULT_CERT_SLACK),
            Err(Error::IndexOutOfRange(_))
        ));
        assert!(update_acceptable(&solver, &old, &new, 1, 2, 0.1, DEFAULT_CERT_SLACK).is_ok());
    }

    #[test]
    fn reference_splices_are_accepted() {
        let solver = LqSolver::with_convention(
            LinearQuadratic::unstable_oscillator(),
            3,
            GainConvention::Published,
        )
        .unwrap();
        for (x0, v_spliced) in [([0.0, 1.0], 2.83461176), ([1.0, 0.0], 0.96290399)] {
            let old = solver.solve(&v(&x0), 3).unwrap();
            let new = solver.solve(&old.trajectory[1], 3).unwrap();
            assert!(
                update_acceptable(&solver, &old, &new, 1, 2, 0.01, DEFAULT_CERT_SLACK).unwrap()
            );
            let plan = spliced_plan(&solver, &old, &new, 1).unwrap();
            let reached = solver.value(&plan.trajectory[2], 3).unwrap();
            assert!((reached - v_spliced).abs() < 1e-6);
        }
    }

    #[test]
    fn spliced_plan_budget_matches_tail_values_when_optimal() {
        let solver = LqSolver::new(LinearQuadratic::unstable_oscillator(), 4).unwrap();
        let old = solver.solve(&v(&[-0.7, 0.2]), 4).unwrap();
        let new = solver.solve(&old.trajectory[3], 4).unwrap();
        let plan = spliced_plan(&solver, &old, &new, 3).unwrap();
        for k in 0..=3 {
            let rel = (plan.tail_values[k] - old.tail_values[k]).abs() / old.value;
            assert!(rel < 1e-12, "k = {k}: {rel}");
        }
    }

    #[test]
    fn csv_row_has_fixed_columns() {
        let c = Certificate {
            n: 3,
            sigma_n: 5,
            m_n: 2,
            v_before: 1.0,
            v_after: 0.5,
            cost_sum: 0.25,
            alpha: 2.0,
            rho: 0.375,
            s_n: -0.1,
        };
        let csv = certificates_to_csv(&[c]);
        let mut lines = csv.lines();
        assert_eq!(lines.next().unwrap(), CERTIFICATE_CSV_HEADER);
        let row: Vec<&str> = lines.next().unwrap().split(',').collect();
        assert_eq!(row.len(), 9);
        assert_eq!(row[0..3], ["3", "5", "2"]);
        assert_eq!(row[3], "1.0000000000000000e0");
        assert_eq!(row[8].parse::<f64>().unwrap(), -0.1);
    }
}
