//! Reference-value reproduction for the oscillator plant, plus the data
//! files backing the α maps, horizon table and decrease surfaces.

use std::fs;
use std::path::Path;

use nalgebra::DVector;
use serde::Serialize;

use crate::error::Result;
use crate::model::LinearQuadratic;
use crate::scheduler::{run, AlgorithmConfig, RunStatus, Variant};
use crate::solver::{FiniteHorizonSolver, GainConvention, LqSolver};
use crate::sweep::{
    closed_loop_alpha, decrease_surface, failure_set, horizon_comparison, horizon_table_csv,
    surface_csv, sweep, InitialSet,
};

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ReferenceCheck {
    pub name: &'static str,
    pub pass: bool,
    pub detail: String,
}

fn check(name: &'static str, pass: bool, detail: String) -> ReferenceCheck {
    ReferenceCheck { name, pass, detail }
}

fn v(xs: &[f64]) -> DVector<f64> {
    DVector::from_row_slice(xs)
}

/// Runs every reference check. When `out` is given, the backing data is
/// written there as CSV.
pub fn reference_checks(workers: Option<usize>, out: Option<&Path>) -> Result<Vec<ReferenceCheck>> {
    let lq = LinearQuadratic::unstable_oscillator();
    let exact = LqSolver::new(lq.clone(), 8)?;
    let published = LqSolver::with_convention(lq, 3, GainConvention::Published)?;
    let circle = InitialSet::unit_circle(128);
    let mut checks = Vec::new();

    let a = exact.value(&v(&[0.0, 1.0]), 3)?;
    let b = exact.value(&v(&[1.0, 0.0]), 3)?;
    checks.push(check(
        "riccati-values",
        (a - 5.109994744).abs() <= 1e-6 && (b - 4.08117251).abs() <= 1e-6,
        format!("V3(0,1) = {a:.9}, V3(1,0) = {b:.8}"),
    ));

    let mut cfg = AlgorithmConfig::new(Variant::Alg1, 3, 0.5);
    cfg.max_iterations = 1;
    let mut pass = true;
    let mut detail = Vec::new();
    for (x0, want) in [
        ([0.0, 1.0], [2.827656536, 0.5144, 2.83461176, 0.5136]),
        ([1.0, 0.0], [1.22718283, 0.7470, 0.96290399, 0.7733]),
    ] {
        let t1 = run(&published, &v(&x0), &cfg)?;
        let t2 = run(&published, &v(&x0), &cfg.with_variant(Variant::Alg2))?;
        let got = [
            t1.final_value(),
            t1.alpha_after(0)?,
            t2.final_value(),
            t2.summary().alpha_first_block.unwrap_or(f64::NAN),
        ];
        let tol = [1e-6, 5e-5, 1e-6, 5e-5];
        pass &= (0..4).all(|i| (got[i] - want[i]).abs() <= tol[i]);
        detail.push(format!(
            "x0 {x0:?}: {:.9}/{:.5} unspliced, {:.8}/{:.5} spliced",
            got[0], got[1], got[2], got[3]
        ));
    }
    checks.push(check("two-step-splice-values", pass, detail.join("; ")));

    let mut negatives = Vec::new();
    for n in [3, 4] {
        let report = sweep(
            &exact,
            &circle,
            &AlgorithmConfig::standard_mpc(Variant::Alg1, n, 0.0),
            workers,
        )?;
        negatives.push(report.aggregates.negative_1step.len());
        if let Some(dir) = out {
            fs::write(dir.join(format!("alpha_map_N{n}.csv")), report.to_csv())?;
        }
    }
    checks.push(check(
        "one-step-sign-by-horizon",
        negatives[0] > 0 && negatives[1] == 0,
        format!(
            "one-step alpha < 0 at {} points for N=3, {} for N=4",
            negatives[0], negatives[1]
        ),
    ));

    let mut min2 = f64::INFINITY;
    for x in &circle.points {
        min2 = min2.min(closed_loop_alpha(&exact, x, 3, 2)?);
    }
    checks.push(check(
        "closed-loop-two-step-positive",
        min2 > 0.0,
        format!("min two-step closed-loop alpha = {min2:.6}"),
    ));

    let zero_cfg = AlgorithmConfig::new(Variant::Alg2, 3, 0.0);
    let mut all_one = true;
    for x in &circle.points {
        let t = run(&exact, x, &zero_cfg)?;
        all_one &=
            t.status == RunStatus::Converged && t.schedule.control_horizons().all(|m| m == 1);
    }
    let alg2 = sweep(
        &exact,
        &circle,
        &AlgorithmConfig::new(Variant::Alg2, 3, 0.01),
        workers,
    )?;
    let alg3 = sweep(
        &exact,
        &circle,
        &AlgorithmConfig::new(Variant::Alg3, 3, 0.01),
        workers,
    )?;
    checks.push(check(
        "update-certification",
        all_one && !alg2.aggregates.failure_set.is_empty(),
        format!(
            "alpha_bar=0 all m_n=1: {all_one}; alpha_bar=0.01 failures: {}",
            alg2.aggregates.failure_set.len()
        ),
    ));

    let standard = sweep(
        &exact,
        &circle,
        &AlgorithmConfig::standard_mpc(Variant::Alg3, 3, 0.01),
        workers,
    )?;
    let min_cor = standard.aggregates.min_alpha_cor3;
    checks.push(check(
        "watchdog-alpha-minimum",
        (min_cor - 0.52307).abs() <= 1e-3,
        format!("min slack-based alpha, N=3, m_n=1: {min_cor:.6} (reference 0.52307)"),
    ));

    let (f2, f3, same) = failure_set(&alg2, &alg3)?;
    checks.push(check(
        "warning-set-equals-failure-set",
        same,
        format!(
            "alg2 failures {} points, alg3 warnings {} points",
            f2.len(),
            f3.len()
        ),
    ));

    if let Some(dir) = out {
        fs::write(dir.join("failures_alg2.csv"), alg2.to_csv())?;
        fs::write(dir.join("warnings_alg3.csv"), alg3.to_csv())?;
        let rows = horizon_comparison(
            &exact,
            &circle,
            &[2, 3, 4, 5, 6, 7, 8],
            &AlgorithmConfig::standard_mpc(Variant::Alg3, 3, 0.01),
            workers,
        )?;
        fs::write(dir.join("horizon_table.csv"), horizon_table_csv(&rows))?;
        for m in [1, 2] {
            let surface = decrease_surface(&exact, 3, m, 101, 1.5)?;
            fs::write(
                dir.join(format!("decrease_N3_m{m}.csv")),
                surface_csv(&surface),
            )?;
        }
    }
    Ok(checks)
}
