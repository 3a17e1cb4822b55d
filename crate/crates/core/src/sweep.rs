//! Grid experiments over sets of initial states.

use std::f64::consts::PI;
use std::fmt::Write as _;

use nalgebra::DVector;
use rayon::prelude::*;
use serde::Serialize;

use crate::certificate::{alpha_m_step, fmt_f64};
use crate::error::{Error, Result};
use crate::model::State;
use crate::scheduler::{run, AlgorithmConfig, RunStatus};
use crate::solver::FiniteHorizonSolver;

/// Values with `|α| <= BORDERLINE` are reported apart from the sign classes.
pub const BORDERLINE: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq)]
pub struct InitialSet {
    pub points: Vec<State>,
    pub generator: String,
}

impl InitialSet {
    /// `(cos(2πk/k_max), sin(2πk/k_max))` for `k = 1..=k_max`.
    pub fn unit_circle(k_max: usize) -> Self {
        let points = (1..=k_max)
            .map(|k| {
                let t = 2.0 * PI * k as f64 / k_max as f64;
                DVector::from_row_slice(&[t.cos(), t.sin()])
            })
            .collect();
        InitialSet {
            points,
            generator: format!("unit-circle:{k_max}"),
        }
    }

    /// `n × n` grid on `[-half_width, half_width]²`, x1 varying fastest.
    pub fn square_grid(n: usize, half_width: f64) -> Self {
        let coord = |i: usize| {
            if n == 1 {
                0.0
            } else {
                -half_width + 2.0 * half_width * i as f64 / (n - 1) as f64
            }
        };
        let mut points = Vec::with_capacity(n * n);
        for iy in 0..n {
            for ix in 0..n {
                points.push(DVector::from_row_slice(&[coord(ix), coord(iy)]));
            }
        }
        InitialSet {
            points,
            generator: format!("grid:{n}x{n}:{half_width}"),
        }
    }

    pub fn explicit(points: Vec<State>) -> Self {
        InitialSet {
            generator: format!("explicit:{}", points.len()),
            points,
        }
    }

    /// Parses `unit-circle:<k_max>` or `grid:<n>:<half_width>`.
    pub fn parse(spec: &str) -> Result<Self> {
        let bad = || Error::Config(format!("bad initial-set spec `{spec}`"));
        let (kind, rest) = spec.split_once(':').ok_or_else(bad)?;
        match kind {
            "unit-circle" => {
                let k_max: usize = rest.trim().parse().map_err(|_| bad())?;
                if k_max == 0 {
                    return Err(Error::Config("initial set is empty".into()));
                }
                Ok(Self::unit_circle(k_max))
            }
            "grid" => {
                let (n, w) = rest.split_once(':').ok_or_else(bad)?;
                let n: usize = n.trim().parse().map_err(|_| bad())?;
                let w: f64 = w.trim().parse().map_err(|_| bad())?;
                if n == 0 {
                    return Err(Error::Config("initial set is empty".into()));
                }
                Ok(Self::square_grid(n, w))
            }
            _ => Err(bad()),
        }
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }
}

/// One run of a sweep. `k` is the 1-based point index.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PointRecord {
    pub k: usize,
    pub x0: Vec<f64>,
    pub status: Option<RunStatus>,
    pub alpha_min_1step: f64,
    pub alpha_min_mstep: f64,
    pub alpha_cor3: f64,
    pub warning: bool,
    pub exit_strategy: bool,
    pub iterations: usize,
    pub error: Option<String>,
}

impl PointRecord {
    /// Watchdog warning or exit strategy at some iterate.
    pub fn flagged(&self) -> bool {
        self.warning || self.exit_strategy
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Aggregates {
    pub min_alpha_cor3: f64,
    pub max_alpha_cor3: f64,
    pub mean_alpha_cor3: f64,
    pub min_alpha_1step: f64,
    pub min_alpha_mstep: f64,
    /// Points with one-step `α < -BORDERLINE`.
    pub negative_1step: Vec<usize>,
    /// Points with some one-step `|α| <= BORDERLINE`.
    pub borderline_1step: Vec<usize>,
    pub failure_set: Vec<usize>,
    pub errors: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SweepReport {
    pub generator: String,
    pub config: AlgorithmConfig,
    pub records: Vec<PointRecord>,
    pub aggregates: Aggregates,
}

pub const SWEEP_CSV_HEADER: &str =
    "k,x1,x2,alpha_min_1step,alpha_min_mstep,alpha_cor3,warning,status";

impl SweepReport {
    fn from_records(generator: String, config: AlgorithmConfig, records: Vec<PointRecord>) -> Self {
        let ok: Vec<&PointRecord> = records.iter().filter(|r| r.error.is_none()).collect();
        let cor3 = ok.iter().map(|r| r.alpha_cor3);
        let mean = if ok.is_empty() {
            f64::NAN
        } else {
            cor3.clone().sum::<f64>() / ok.len() as f64
        };
        let aggregates = Aggregates {
            min_alpha_cor3: cor3.clone().fold(f64::INFINITY, f64::min),
            max_alpha_cor3: cor3.fold(f64::NEG_INFINITY, f64::max),
            mean_alpha_cor3: mean,
            min_alpha_1step: ok
                .iter()
                .map(|r| r.alpha_min_1step)
                .fold(f64::INFINITY, f64::min),
            min_alpha_mstep: ok
                .iter()
                .map(|r| r.alpha_min_mstep)
                .fold(f64::INFINITY, f64::min),
            negative_1step: ok
                .iter()
                .filter(|r| r.alpha_min_1step < -BORDERLINE)
                .map(|r| r.k)
                .collect(),
            borderline_1step: ok
                .iter()
                .filter(|r| r.alpha_min_1step.abs() <= BORDERLINE)
                .map(|r| r.k)
                .collect(),
            failure_set: failure_indices(&records),
            errors: records
                .iter()
                .filter(|r| r.error.is_some())
                .map(|r| r.k)
                .collect(),
        };
        SweepReport {
            generator,
            config,
            records,
            aggregates,
        }
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::new();
        out.push_str(SWEEP_CSV_HEADER);
        out.push('\n');
        for r in &self.records {
            let coord = |i: usize| r.x0.get(i).copied().map_or(String::new(), fmt_f64);
            let status = r.status.map_or("error", RunStatus::as_str);
            let _ = writeln!(
                out,
                "{},{},{},{},{},{},{},{}",
                r.k,
                coord(0),
                coord(1),
                fmt_f64(r.alpha_min_1step),
                fmt_f64(r.alpha_min_mstep),
                fmt_f64(r.alpha_cor3),
                r.warning,
                status
            );
        }
        out
    }
}

fn failure_indices(records: &[PointRecord]) -> Vec<usize> {
    records
        .iter()
        .filter(|r| r.flagged())
        .map(|r| r.k)
        .collect()
}

fn run_point(
    solver: &dyn FiniteHorizonSolver,
    k: usize,
    x0: &State,
    config: &AlgorithmConfig,
) -> PointRecord {
    let base = PointRecord {
        k,
        x0: x0.iter().copied().collect(),
        status: None,
        alpha_min_1step: f64::NAN,
        alpha_min_mstep: f64::NAN,
        alpha_cor3: f64::NAN,
        warning: false,
        exit_strategy: false,
        iterations: 0,
        error: None,
    };
    match run(solver, x0, config) {
        Ok(trace) => PointRecord {
            status: Some(trace.status),
            alpha_min_1step: trace.min_one_step_alpha(),
            alpha_min_mstep: trace.min_block_alpha(),
            alpha_cor3: trace.final_alpha(),
            warning: trace.warning_count() > 0,
            exit_strategy: trace.exit_strategy_count() > 0,
            iterations: trace.iterations(),
            ..base
        },
        Err(e) => PointRecord {
            error: Some(e.to_string()),
            ..base
        },
    }
}

/// Maps `f` over `0..len` on `workers` threads (`None`: rayon's default),
/// returning results in index order.
fn par_map<T, F>(len: usize, workers: Option<usize>, f: F) -> Result<Vec<T>>
where
    T: Send,
    F: Fn(usize) -> T + Send + Sync,
{
    let work = || (0..len).into_par_iter().map(&f).collect::<Vec<T>>();
    match workers {
        None => Ok(work()),
        Some(w) => {
            let pool = rayon::ThreadPoolBuilder::new()
                .num_threads(w.max(1))
                .build()
                .map_err(|e| Error::Config(format!("thread pool: {e}")))?;
            Ok(pool.install(work))
        }
    }
}

/// Runs `config` from every point. Per-point errors are recorded, not fatal.
pub fn sweep(
    solver: &dyn FiniteHorizonSolver,
    set: &InitialSet,
    config: &AlgorithmConfig,
    workers: Option<usize>,
) -> Result<SweepReport> {
    if set.is_empty() {
        return Err(Error::Config("initial set is empty".into()));
    }
    config.validate()?;
    let records = par_map(set.len(), workers, |i| {
        run_point(solver, i + 1, &set.points[i], config)
    })?;
    Ok(SweepReport::from_records(
        set.generator.clone(),
        config.clone(),
        records,
    ))
}

/// Two-step closed-loop quotient
/// `(V_N(x_0) - V_N(x_μ(2; x_0))) / (ℓ(x_0, μ(x_0)) + ℓ(x_1, μ(x_1)))`
/// under standard MPC, generalized to `steps` steps.
pub fn closed_loop_alpha(
    solver: &dyn FiniteHorizonSolver,
    x0: &State,
    horizon: usize,
    steps: usize,
) -> Result<f64> {
    let model = solver.model();
    let v0 = solver.value(x0, horizon)?;
    let mut x = x0.clone();
    let mut cost = 0.0;
    for _ in 0..steps {
        let sol = solver.solve(&x, horizon)?;
        cost += model.stage_cost(&x, &sol.controls[0])?;
        x = model.step(&x, &sol.controls[0])?;
    }
    alpha_m_step(v0, solver.value(&x, horizon)?, cost)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct HorizonRow {
    pub horizon: usize,
    /// Minimum over the set of the open-loop `α` of the chosen `m_n`.
    pub alpha_prop1_min: f64,
    /// Minimum over the set of the final slack-based `α`.
    pub alpha_cor3_min: f64,
}

pub const HORIZON_CSV_HEADER: &str = "N,alpha_prop1_min,alpha_cor3_min";

/// One sweep per horizon, `config.horizon` overridden.
pub fn horizon_comparison(
    solver: &dyn FiniteHorizonSolver,
    set: &InitialSet,
    horizons: &[usize],
    config: &AlgorithmConfig,
    workers: Option<usize>,
) -> Result<Vec<HorizonRow>> {
    horizons
        .iter()
        .map(|&n| {
            if n < 2 {
                return Err(Error::Config(format!(
                    "horizon must be at least 2, got {n}"
                )));
            }
            let cfg = AlgorithmConfig {
                horizon: n,
                ..config.clone()
            };
            let report = sweep(solver, set, &cfg, workers)?;
            if let Some(&k) = report.aggregates.errors.first() {
                let msg = report.records[k - 1].error.clone().unwrap_or_default();
                return Err(Error::SolverFailure(format!("N = {n}, point {k}: {msg}")));
            }
            Ok(HorizonRow {
                horizon: n,
                alpha_prop1_min: report.aggregates.min_alpha_mstep,
                alpha_cor3_min: report.aggregates.min_alpha_cor3,
            })
        })
        .collect()
}

pub fn horizon_table_csv(rows: &[HorizonRow]) -> String {
    let mut out = String::new();
    out.push_str(HORIZON_CSV_HEADER);
    out.push('\n');
    for r in rows {
        let _ = writeln!(
            out,
            "{},{},{}",
            r.horizon,
            fmt_f64(r.alpha_prop1_min),
            fmt_f64(r.alpha_cor3_min)
        );
    }
    out
}

/// Flagged index sets of two reports over the same initial set, and whether
/// they coincide.
pub fn failure_set(a: &SweepReport, b: &SweepReport) -> Result<(Vec<usize>, Vec<usize>, bool)> {
    if a.records.len() != b.records.len() {
        return Err(Error::MismatchedSets(a.records.len(), b.records.len()));
    }
    let fa = failure_indices(&a.records);
    let fb = failure_indices(&b.records);
    let same = fa == fb;
    Ok((fa, fb, same))
}

/// `V_N(x) - V_N(x_u(m; x))` along the open-loop prediction.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SurfacePoint {
    pub x1: f64,
    pub x2: f64,
    pub decrease: f64,
}

/// Decrease surface on an `n × n` grid over `[-half_width, half_width]²`.
pub fn decrease_surface(
    solver: &dyn FiniteHorizonSolver,
    horizon: usize,
    m: usize,
    n: usize,
    half_width: f64,
) -> Result<Vec<SurfacePoint>> {
    if m == 0 || m > horizon {
        return Err(Error::IndexOutOfRange(format!(
            "m = {m} outside 1..={horizon}"
        )));
    }
    let set = InitialSet::square_grid(n, half_width);
    set.points
        .iter()
        .map(|x| {
            let sol = solver.solve(x, horizon)?;
            let after = solver.value(&sol.trajectory[m], horizon)?;
            Ok(SurfacePoint {
                x1: x[0],
                x2: x[1],
                decrease: sol.value - after,
            })
        })
        .collect()
}

pub fn surface_csv(points: &[SurfacePoint]) -> String {
    let mut out = String::from("x1,x2,decrease\n");
    for p in points {
        let _ = writeln!(
            out,
            "{},{},{}",
            fmt_f64(p.x1),
            fmt_f64(p.x2),
            fmt_f64(p.decrease)
        );
    }
    out
}
