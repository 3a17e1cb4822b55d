//! The four scheduling algorithms as one block-wise state machine over the
//! update schedule.
//!
//! A *block* starts at an anchor `x_n` with a fresh open-loop solution and a
//! control horizon `m_n` chosen by the selection step. The implementation step applies the block's
//! controls; the splicing variants may close the loop early inside a block,
//! which inserts an extra point into the schedule. Every schedule interval
//! gets one [`Certificate`], and the watchdog slack advances by the realized
//! residual of each interval.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::certificate::{
    alpha_from_slack, alpha_m_step, certificates_to_csv, rho, spliced_plan, update_acceptable,
    Certificate, SlackAccumulator, DEFAULT_CERT_SLACK,
};
use crate::error::{Error, Result};
use crate::model::{Control, State, SystemModel};
use crate::solver::{FiniteHorizonSolver, OpenLoopSolution};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Variant {
    /// Adaptive multi-step implementation.
    #[default]
    Alg1,
    /// Alg1 plus loop-closing control updates.
    Alg2,
    /// Alg1 with watchdog slack.
    Alg3,
    /// Watchdog slack plus control updates.
    Alg4,
}

impl Variant {
    pub const ALL: [Variant; 4] = [Variant::Alg1, Variant::Alg2, Variant::Alg3, Variant::Alg4];

    pub fn as_str(self) -> &'static str {
        match self {
            Variant::Alg1 => "alg1",
            Variant::Alg2 => "alg2",
            Variant::Alg3 => "alg3",
            Variant::Alg4 => "alg4",
        }
    }

    pub fn splices(self) -> bool {
        matches!(self, Variant::Alg2 | Variant::Alg4)
    }

    pub fn watchdog(self) -> bool {
        matches!(self, Variant::Alg3 | Variant::Alg4)
    }
}

impl fmt::Display for Variant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Variant {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Variant::ALL
            .into_iter()
            .find(|v| v.as_str() == s)
            .ok_or_else(|| Error::Config(format!("unknown variant `{s}`, expected alg1..alg4")))
    }
}

/// How the selection step picks `m_n`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize)]
pub enum ControlHorizon {
    /// Smallest `j in 1..N` that certifies `ᾱ`.
    #[default]
    Adaptive,
    /// Always `m`; `Fixed(1)` is standard MPC.
    Fixed(usize),
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AlgorithmConfig {
    pub variant: Variant,
    /// Prediction horizon `N >= 2`.
    pub horizon: usize,
    /// Target suboptimality `ᾱ in [0, 1]`.
    pub alpha_bar: f64,
    /// Blocks (step-(I) solves) before giving up.
    pub max_iterations: usize,
    /// Converged once `|x_n - x*| <= termination_radius`.
    pub termination_radius: f64,
    /// Absolute slack on every certificate inequality.
    pub cert_slack: f64,
    pub control_horizon: ControlHorizon,
    /// `m_n` used when selection finds nothing (exit strategy and warning branch).
    pub exit_m: usize,
}

impl AlgorithmConfig {
    pub fn new(variant: Variant, horizon: usize, alpha_bar: f64) -> Self {
        AlgorithmConfig {
            variant,
            horizon,
            alpha_bar,
            max_iterations: 1000,
            termination_radius: 1e-8,
            cert_slack: DEFAULT_CERT_SLACK,
            control_horizon: ControlHorizon::Adaptive,
            exit_m: 1,
        }
    }

    /// Standard MPC: `m_n = 1` at every iterate.
    pub fn standard_mpc(variant: Variant, horizon: usize, alpha_bar: f64) -> Self {
        AlgorithmConfig {
            control_horizon: ControlHorizon::Fixed(1),
            ..Self::new(variant, horizon, alpha_bar)
        }
    }

    pub fn with_variant(&self, variant: Variant) -> Self {
        AlgorithmConfig {
            variant,
            ..self.clone()
        }
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.horizon;
        if n < 2 {
            return Err(Error::Config(format!(
                "horizon must be at least 2, got {n}"
            )));
        }
        if !(0.0..=1.0).contains(&self.alpha_bar) {
            return Err(Error::Config(format!(
                "alpha_bar must lie in [0, 1], got {}",
                self.alpha_bar
            )));
        }
        if self.max_iterations == 0 {
            return Err(Error::Config("max_iterations must be positive".into()));
        }
        if !(self.termination_radius >= 0.0) || !(self.cert_slack >= 0.0) {
            return Err(Error::Config(
                "termination_radius and cert_slack must be nonnegative".into(),
            ));
        }
        if let ControlHorizon::Fixed(m) = self.control_horizon {
            if m == 0 || m >= n {
                return Err(Error::Config(format!(
                    "fixed m_n = {m} outside 1..={}",
                    n - 1
                )));
            }
        }
        if self.exit_m == 0 || self.exit_m >= n {
            return Err(Error::Config(format!(
                "exit m_n = {} outside 1..={}",
                self.exit_m,
                n - 1
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum RunStatus {
    Converged,
    MaxIterations,
    ExitStrategyFailed,
    WarningIssued,
}

impl RunStatus {
    pub fn as_str(self) -> &'static str {
        match self {
            RunStatus::Converged => "converged",
            RunStatus::MaxIterations => "max-iterations",
            RunStatus::ExitStrategyFailed => "exit-strategy-failed",
            RunStatus::WarningIssued => "warning-issued",
        }
    }
}

impl fmt::Display for RunStatus {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Update instants `σ(0) = 0 < σ(1) < ...`.
#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize)]
pub struct UpdateSchedule {
    sigma: Vec<usize>,
}

impl UpdateSchedule {
    pub fn new() -> Self {
        UpdateSchedule { sigma: vec![0] }
    }

    /// Validates a given list against horizon `n`.
    pub fn from_sigma(sigma: Vec<usize>, n: usize) -> Result<Self> {
        if sigma.first() != Some(&0) {
            return Err(Error::IndexOutOfRange("schedule must start at 0".into()));
        }
        let schedule = UpdateSchedule { sigma };
        for (i, m) in schedule.control_horizons().enumerate() {
            if m == 0 || m >= n {
                return Err(Error::IndexOutOfRange(format!(
                    "m_{i} = {m} outside 1..={}",
                    n.saturating_sub(1)
                )));
            }
        }
        Ok(schedule)
    }

    fn push(&mut self, t: usize) {
        debug_assert!(t > *self.sigma.last().unwrap());
        self.sigma.push(t);
    }

    pub fn sigma(&self) -> &[usize] {
        &self.sigma
    }

    /// `m_n = σ(n+1) - σ(n)`.
    pub fn control_horizons(&self) -> impl Iterator<Item = usize> + '_ {
        self.sigma.windows(2).map(|w| w[1] - w[0])
    }

    pub fn intervals(&self) -> usize {
        self.sigma.len() - 1
    }

    pub fn last(&self) -> usize {
        *self.sigma.last().unwrap()
    }
}

/// What selection and implementation did at one anchor.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BlockRecord {
    /// Absolute time of the anchor.
    pub time: usize,
    /// Horizon in force.
    pub horizon: usize,
    /// Candidates examined during selection, in order.
    pub candidates: Vec<usize>,
    /// Open-loop `α` per examined candidate.
    pub alphas: Vec<f64>,
    /// Open-loop `ρ` per examined candidate.
    pub rhos: Vec<f64>,
    /// Open-loop one-step `α` at the anchor.
    pub alpha_one_step: f64,
    /// Control horizon actually used.
    pub m: usize,
    /// Open-loop `α` of the chosen `m`.
    pub alpha_chosen: f64,
    /// Step (I) found a certifying candidate.
    pub certified: bool,
    /// Alg1/Alg2 exit strategy taken.
    pub exit_strategy: bool,
    /// Alg3/Alg4 warning branch taken.
    pub warning: bool,
    /// Slack at the anchor.
    pub slack: f64,
    /// Inner indices `j` whose splice was adopted.
    pub splices: Vec<usize>,
}

/// Structured warning record from the watchdog branch.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Warning {
    pub block: usize,
    pub time: usize,
    pub slack: f64,
    pub best_rho: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ClosedLoopTrace {
    pub config: AlgorithmConfig,
    pub schedule: UpdateSchedule,
    /// `x_n` at every `σ(n)`.
    pub states: Vec<State>,
    /// `μ_N^S(0), μ_N^S(1), ...`.
    pub applied_controls: Vec<Control>,
    /// One per schedule interval.
    pub certificates: Vec<Certificate>,
    pub blocks: Vec<BlockRecord>,
    pub warnings: Vec<Warning>,
    pub slack: SlackAccumulator,
    /// `(time, new N)` for every accepted horizon shrink.
    pub horizon_changes: Vec<(usize, usize)>,
    /// `V_N(x_0)`.
    pub v0: f64,
    /// `Σ ℓ` along the realized closed loop.
    pub total_cost: f64,
    pub status: RunStatus,
}

impl ClosedLoopTrace {
    pub fn iterations(&self) -> usize {
        self.blocks.len()
    }

    pub fn final_state(&self) -> &State {
        self.states.last().unwrap()
    }

    /// Value of the last state with the horizon in force at that point.
    pub fn final_value(&self) -> f64 {
        self.certificates.last().map_or(self.v0, |c| c.v_after)
    }

    pub fn warning_count(&self) -> usize {
        self.warnings.len()
    }

    pub fn exit_strategy_count(&self) -> usize {
        self.blocks.iter().filter(|b| b.exit_strategy).count()
    }

    /// Smallest open-loop one-step `α` over all anchors (1 if none).
    pub fn min_one_step_alpha(&self) -> f64 {
        self.blocks
            .iter()
            .map(|b| b.alpha_one_step)
            .fold(1.0, f64::min)
    }

    /// Smallest open-loop `α` of the chosen `m_n` over all anchors (1 if none).
    pub fn min_block_alpha(&self) -> f64 {
        self.blocks
            .iter()
            .map(|b| b.alpha_chosen)
            .fold(1.0, f64::min)
    }

    /// Slack-based suboptimality after interval `n`: the largest `α` with
    /// `V_N(x_{n+1}) + α Σ costs <= V_N(x_0)`.
    pub fn alpha_after(&self, n: usize) -> Result<f64> {
        let cert = self.certificates.get(n).ok_or_else(|| {
            Error::IndexOutOfRange(format!("interval {n} of {}", self.certificates.len()))
        })?;
        let cost: f64 = self.certificates[..=n].iter().map(|c| c.cost_sum).sum();
        Ok(slack_alpha(
            self.v0,
            cert.v_after,
            cert.s_n,
            cost,
            self.config.alpha_bar,
        ))
    }

    /// [`alpha_after`](Self::alpha_after) at the last interval; 1 for an empty trace.
    pub fn final_alpha(&self) -> f64 {
        match self.certificates.len() {
            0 => 1.0,
            n => self.alpha_after(n - 1).unwrap_or(f64::NAN),
        }
    }

    /// Largest deviation between `states` and a replay of `applied_controls`.
    pub fn resimulation_error(&self, model: &SystemModel) -> Result<f64> {
        let mut x = self.states[0].clone();
        let mut worst: f64 = 0.0;
        let mut t = 0;
        for (n, &sigma) in self.schedule.sigma().iter().enumerate().skip(1) {
            while t < sigma {
                x = model.step(&x, &self.applied_controls[t])?;
                t += 1;
            }
            worst = worst.max((&x - &self.states[n]).amax());
        }
        Ok(worst)
    }

    /// Largest relative violation of
    /// `s_n = V_N(x_0) - V_N(x_{n+1}) - ᾱ Σ costs` over all intervals.
    pub fn telescoping_defect(&self) -> f64 {
        let mut cost = 0.0;
        let mut worst: f64 = 0.0;
        for c in &self.certificates {
            cost += c.cost_sum;
            let weighted = self.config.alpha_bar * cost;
            let rhs = self.v0 - c.v_after - weighted;
            let scale = self
                .v0
                .abs()
                .max(c.v_after.abs())
                .max(weighted)
                .max(f64::MIN_POSITIVE);
            worst = worst.max((c.s_n - rhs).abs() / scale);
        }
        worst
    }

    pub fn certificates_csv(&self) -> String {
        certificates_to_csv(&self.certificates)
    }

    pub fn summary(&self) -> TraceSummary {
        TraceSummary {
            variant: self.config.variant,
            horizon: self.config.horizon,
            alpha_bar: self.config.alpha_bar,
            status: self.status,
            iterations: self.iterations(),
            intervals: self.certificates.len(),
            steps: self.applied_controls.len(),
            v0: self.v0,
            final_value: self.final_value(),
            total_cost: self.total_cost,
            slack: self.slack.value(),
            alpha_first_block: self.first_block_alpha(),
            final_alpha: self.final_alpha(),
            warning_count: self.warning_count(),
            exit_strategy_count: self.exit_strategy_count(),
        }
    }

    fn first_block_alpha(&self) -> Option<f64> {
        let first = self.blocks.first()?;
        let end = first.time + first.m;
        let n = self
            .certificates
            .iter()
            .position(|c| c.sigma_n + c.m_n == end)?;
        self.alpha_after(n).ok()
    }
}

/// A-posteriori `α` from the running slack; falls back to the plain
/// quotient when `ᾱ = 0` and to 1 at the equilibrium.
fn slack_alpha(v0: f64, v_after: f64, s_n: f64, cost: f64, alpha_bar: f64) -> f64 {
    if cost == 0.0 {
        return 1.0;
    }
    if alpha_bar > 0.0 {
        if let Ok(a) = alpha_from_slack(v0, v_after, s_n, alpha_bar) {
            return a;
        }
    }
    (v0 - v_after) / cost
}

/// Run summary, serialized as JSON by the CLI.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TraceSummary {
    pub variant: Variant,
    pub horizon: usize,
    pub alpha_bar: f64,
    pub status: RunStatus,
    pub iterations: usize,
    pub intervals: usize,
    pub steps: usize,
    pub v0: f64,
    pub final_value: f64,
    pub total_cost: f64,
    pub slack: f64,
    /// Slack-based `α` at the end of the first block.
    pub alpha_first_block: Option<f64>,
    /// Slack-based `α` at the end of the run.
    pub final_alpha: f64,
    pub warning_count: usize,
    pub exit_strategy_count: usize,
}

/// Block-wise closed loop. Call [`step`](Self::step) until it returns
/// `false`, or use [`run`].
pub struct ClosedLoop<'a> {
    solver: &'a dyn FiniteHorizonSolver,
    config: AlgorithmConfig,
    horizon: usize,
    x: State,
    time: usize,
    v_current: f64,
    // open interval: start time, accumulated cost
    interval_start: usize,
    interval_cost: f64,
    trace: ClosedLoopTrace,
    finished: bool,
}

impl<'a> ClosedLoop<'a> {
    pub fn new(
        solver: &'a dyn FiniteHorizonSolver,
        x0: &State,
        config: &AlgorithmConfig,
    ) -> Result<Self> {
        config.validate()?;
        if let Some(max) = solver.max_horizon() {
            if max < config.horizon {
                return Err(Error::LadderTooShallow {
                    depth: max,
                    horizon: config.horizon,
                });
            }
        }
        let model = solver.model();
        model.check_state_dim(x0)?;
        if !model.is_state_admissible(x0) {
            return Err(Error::InadmissibleState {
                value: x0.iter().copied().collect(),
                step: Some(0),
            });
        }
        let v0 = solver.value(x0, config.horizon)?;
        let trace = ClosedLoopTrace {
            config: config.clone(),
            schedule: UpdateSchedule::new(),
            states: vec![x0.clone()],
            applied_controls: Vec::new(),
            certificates: Vec::new(),
            blocks: Vec::new(),
            warnings: Vec::new(),
            slack: SlackAccumulator::new(),
            horizon_changes: Vec::new(),
            v0,
            total_cost: 0.0,
            status: RunStatus::MaxIterations,
        };
        Ok(ClosedLoop {
            solver,
            config: config.clone(),
            horizon: config.horizon,
            x: x0.clone(),
            time: 0,
            v_current: v0,
            interval_start: 0,
            interval_cost: 0.0,
            trace,
            finished: false,
        })
    }

    pub fn trace(&self) -> &ClosedLoopTrace {
        &self.trace
    }

    pub fn into_trace(self) -> ClosedLoopTrace {
        self.trace
    }

    pub fn horizon(&self) -> usize {
        self.horizon
    }

    pub fn state(&self) -> &State {
        &self.x
    }

    pub fn is_finished(&self) -> bool {
        self.finished
    }

    /// Runs one block. Returns `false` once the run has terminated.
    pub fn step(&mut self) -> Result<bool> {
        if self.finished {
            return Ok(false);
        }
        let model = self.solver.model();
        if model.distance_to_equilibrium(&self.x) <= self.config.termination_radius {
            self.finish(true);
            return Ok(false);
        }
        if self.trace.blocks.len() >= self.config.max_iterations {
            self.finish(false);
            return Ok(false);
        }
        let plan = self.solver.solve(&self.x, self.horizon)?;
        let mut block = self.select_horizon(&plan)?;
        self.implement(plan, &mut block)?;
        self.trace.blocks.push(block);
        Ok(true)
    }

    /// Step (I): search `m_n` and apply the exit strategy or watchdog branch.
    fn select_horizon(&mut self, plan: &OpenLoopSolution) -> Result<BlockRecord> {
        let n = self.horizon;
        let model = self.solver.model();
        let costs = plan.stage_costs(model)?;
        let prefix = |j: usize| -> f64 { costs[..j].iter().sum() };
        let v_before = self.v_current;
        let alpha_bar = self.config.alpha_bar;
        let eps = self.config.cert_slack;

        let candidates: Vec<usize> = match self.config.control_horizon {
            ControlHorizon::Adaptive => (1..n).collect(),
            ControlHorizon::Fixed(m) => vec![m],
        };
        let mut examined = Vec::new();
        let mut alphas = Vec::new();
        let mut rhos = Vec::new();
        let mut chosen = None;
        for &j in &candidates {
            let v_j = self.solver.value(&plan.trajectory[j], n)?;
            let c = prefix(j);
            examined.push(j);
            alphas.push(alpha_m_step(v_before, v_j, c)?);
            let r = rho(v_before, v_j, c, alpha_bar);
            rhos.push(r);
            if r >= -eps {
                chosen = Some(j);
                break;
            }
        }
        let alpha_one_step = if examined[0] == 1 {
            alphas[0]
        } else {
            let v1 = self.solver.value(&plan.trajectory[1], n)?;
            alpha_m_step(v_before, v1, costs[0])?
        };

        let fallback = match self.config.control_horizon {
            ControlHorizon::Adaptive => self.config.exit_m.min(n - 1),
            ControlHorizon::Fixed(m) => m,
        };
        let slack = self.trace.slack.value();
        let (m, exit_strategy, warning) =
            match chosen {
                Some(j) => (j, false, false),
                None if self.config.variant.watchdog() => {
                    // smallest maximizer of ρ_n(j)
                    let (best_idx, best) = rhos.iter().copied().enumerate().fold(
                        (0, f64::NEG_INFINITY),
                        |acc, (i, r)| if r > acc.1 { (i, r) } else { acc },
                    );
                    if slack + best < -eps {
                        self.trace.warnings.push(Warning {
                            block: self.trace.blocks.len(),
                            time: self.time,
                            slack,
                            best_rho: best,
                        });
                        (fallback, false, true)
                    } else {
                        (examined[best_idx], false, false)
                    }
                }
                None => (fallback, true, false),
            };
        let alpha_chosen = match examined.iter().position(|&j| j == m) {
            Some(i) => alphas[i],
            None => {
                let v_m = self.solver.value(&plan.trajectory[m], n)?;
                alpha_m_step(v_before, v_m, prefix(m))?
            }
        };
        Ok(BlockRecord {
            time: self.time,
            horizon: n,
            candidates: examined,
            alphas,
            rhos,
            alpha_one_step,
            m,
            alpha_chosen,
            certified: chosen.is_some(),
            exit_strategy,
            warning,
            slack,
            splices: Vec::new(),
        })
    }

    /// Implementation: apply `m_n` controls, trying splices after each inner step.
    fn implement(&mut self, mut plan: OpenLoopSolution, block: &mut BlockRecord) -> Result<()> {
        let m = block.m;
        let n = self.horizon;
        let model = self.solver.model();
        let alpha_bar = self.config.alpha_bar;
        let eps = self.config.cert_slack;
        let v_anchor = self.v_current;
        let s_anchor = self.trace.slack.value();
        for j in 1..=m {
            let u = plan.controls[j - 1].clone();
            let cost = model.stage_cost(&self.x, &u)?;
            let next = model.step(&self.x, &u).map_err(|e| at_step(e, self.time))?;
            self.interval_cost += cost;
            self.trace.applied_controls.push(u);
            self.x = next;
            self.time += 1;
            if j == m || !self.config.variant.splices() {
                continue;
            }
            let fresh = self.solver.solve(&self.x, n)?;
            let accept = match self.config.variant {
                Variant::Alg2 => {
                    update_acceptable(self.solver, &plan, &fresh, j, m, alpha_bar, eps)?
                }
                _ => {
                    let candidate = spliced_plan(self.solver, &plan, &fresh, j)?;
                    let window_cost: f64 = candidate.stage_costs(model)?[..m].iter().sum();
                    let v_end = self.solver.value(&candidate.trajectory[m], n)?;
                    s_anchor + rho(v_anchor, v_end, window_cost, alpha_bar) >= -eps
                }
            };
            if accept {
                plan = spliced_plan(self.solver, &plan, &fresh, j)?;
                block.splices.push(j);
                self.close_interval()?;
            }
        }
        self.close_interval()
    }

    fn close_interval(&mut self) -> Result<()> {
        let v_after = self.solver.value(&self.x, self.horizon)?;
        let cost = self.interval_cost;
        if !(v_after.is_finite() && cost.is_finite()) {
            return Err(Error::Diverged { time: self.time });
        }
        let alpha_bar = self.config.alpha_bar;
        let r = rho(self.v_current, v_after, cost, alpha_bar);
        let s = self.trace.slack.push(r);
        self.trace.certificates.push(Certificate {
            n: self.trace.certificates.len(),
            sigma_n: self.interval_start,
            m_n: self.time - self.interval_start,
            v_before: self.v_current,
            v_after,
            cost_sum: cost,
            alpha: alpha_m_step(self.v_current, v_after, cost)?,
            rho: r,
            s_n: s,
        });
        self.trace.schedule.push(self.time);
        self.trace.states.push(self.x.clone());
        self.trace.total_cost += cost;
        self.v_current = v_after;
        self.interval_start = self.time;
        self.interval_cost = 0.0;
        Ok(())
    }

    fn finish(&mut self, converged: bool) {
        self.finished = true;
        self.trace.status = if !converged {
            RunStatus::MaxIterations
        } else if !self.trace.warnings.is_empty() {
            RunStatus::WarningIssued
        } else if self.trace.blocks.iter().any(|b| b.exit_strategy) {
            RunStatus::ExitStrategyFailed
        } else {
            RunStatus::Converged
        };
    }

    /// Would switching to horizon `n_new` at the current anchor keep the
    /// slack nonnegative? Uses `ρ̂ = V_N(x_n) - V_{N_new}(x_{n+1}) - ᾱ Σ`
    /// for the last interval, which dominates `ρ` since `V_N >= V_{N_new}`.
    pub fn shrink_horizon_check(&self, n_new: usize) -> Result<bool> {
        if n_new < 2 || n_new > self.horizon {
            return Err(Error::IndexOutOfRange(format!(
                "new horizon {n_new} outside 2..={}",
                self.horizon
            )));
        }
        if n_new == self.horizon {
            return Ok(true);
        }
        let v_new = self.solver.value(&self.x, n_new)?;
        Ok(self.trace.slack.value() + (self.v_current - v_new) >= -self.config.cert_slack)
    }

    /// Switches to `n_new` if [`shrink_horizon_check`](Self::shrink_horizon_check)
    /// passes. The last certificate is restated with `ρ̂` so the slack keeps
    /// telescoping against the new value function.
    pub fn shrink_horizon(&mut self, n_new: usize) -> Result<bool> {
        if !self.shrink_horizon_check(n_new)? {
            return Ok(false);
        }
        if n_new == self.horizon {
            return Ok(true);
        }
        let v_new = self.solver.value(&self.x, n_new)?;
        let alpha_bar = self.config.alpha_bar;
        match self.trace.certificates.last_mut() {
            Some(cert) => {
                cert.v_after = v_new;
                cert.alpha = alpha_m_step(cert.v_before, v_new, cert.cost_sum)?;
                cert.rho = rho(cert.v_before, v_new, cert.cost_sum, alpha_bar);
                cert.s_n = self.trace.slack.amend_last(cert.rho);
            }
            None => self.trace.v0 = v_new,
        }
        self.v_current = v_new;
        self.horizon = n_new;
        self.config.exit_m = self.config.exit_m.min(n_new - 1);
        if let ControlHorizon::Fixed(m) = self.config.control_horizon {
            self.config.control_horizon = ControlHorizon::Fixed(m.min(n_new - 1));
        }
        self.trace.horizon_changes.push((self.time, n_new));
        Ok(true)
    }
}

fn at_step(e: Error, t: usize) -> Error {
    match e {
        Error::InadmissibleState { value, .. } => Error::InadmissibleState {
            value,
            step: Some(t + 1),
        },
        Error::InadmissibleControl { value, .. } => Error::InadmissibleControl {
            value,
            step: Some(t),
        },
        other => other,
    }
}

/// Runs the configured variant from `x0` to termination.
pub fn run(
    solver: &dyn FiniteHorizonSolver,
    x0: &State,
    config: &AlgorithmConfig,
) -> Result<ClosedLoopTrace> {
    let mut cl = ClosedLoop::new(solver, x0, config)?;
    while cl.step()? {}
    Ok(cl.into_trace())
}

pub fn run_alg1(
    solver: &dyn FiniteHorizonSolver,
    x0: &State,
    config: &AlgorithmConfig,
) -> Result<ClosedLoopTrace> {
    run(solver, x0, &config.with_variant(Variant::Alg1))
}

pub fn run_alg2(
    solver: &dyn FiniteHorizonSolver,
    x0: &State,
    config: &AlgorithmConfig,
) -> Result<ClosedLoopTrace> {
    run(solver, x0, &config.with_variant(Variant::Alg2))
}

pub fn run_alg3(
    solver: &dyn FiniteHorizonSolver,
    x0: &State,
    config: &AlgorithmConfig,
) -> Result<ClosedLoopTrace> {
    run(solver, x0, &config.with_variant(Variant::Alg3))
}

pub fn run_alg4(
    solver: &dyn FiniteHorizonSolver,
    x0: &State,
    config: &AlgorithmConfig,
) -> Result<ClosedLoopTrace> {
    run(solver, x0, &config.with_variant(Variant::Alg4))
}
