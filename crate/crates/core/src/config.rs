//! TOML plant and run files.
//!
//! ```toml
//! [plant]
//! state_dim = 2
//! control_dim = 1
//! a = [[1.0, 1.1], [-1.1, 1.0]]
//! b = [[0.0], [1.0]]
//! q = [[1.0, 0.0], [0.0, 1.0]]
//! r = [[1.0]]
//!
//! [run]
//! variant = "alg2"
//! horizon = 3
//! alpha_bar = 0.5
//! x0 = [0.0, 1.0]
//! ```

use std::path::Path;

use nalgebra::{DMatrix, DVector};
use serde::Deserialize;

use crate::error::{Error, Result};
use crate::model::{LinearQuadratic, State};
use crate::scheduler::{AlgorithmConfig, ControlHorizon, Variant};
use crate::solver::GainConvention;

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PlantSpec {
    pub state_dim: usize,
    pub control_dim: usize,
    pub a: Vec<Vec<f64>>,
    pub b: Vec<Vec<f64>>,
    pub q: Vec<Vec<f64>>,
    pub r: Vec<Vec<f64>>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ConventionSpec {
    #[default]
    Exact,
    Published,
}

impl From<ConventionSpec> for GainConvention {
    fn from(c: ConventionSpec) -> Self {
        match c {
            ConventionSpec::Exact => GainConvention::Exact,
            ConventionSpec::Published => GainConvention::Published,
        }
    }
}

/// Run parameters. `horizon` and `alpha_bar` have no defaults on purpose;
/// callers may still supply them from elsewhere (e.g. command-line flags).
#[derive(Debug, Clone, PartialEq, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunSpec {
    pub variant: Option<Variant>,
    pub horizon: Option<usize>,
    pub alpha_bar: Option<f64>,
    pub x0: Option<Vec<f64>>,
    /// Initial-set spec such as `unit-circle:128`.
    pub set: Option<String>,
    pub out: Option<String>,
    pub termination_radius: Option<f64>,
    pub cert_slack: Option<f64>,
    pub max_iterations: Option<usize>,
    /// Fixed control horizon; absent means adaptive.
    pub control_horizon: Option<usize>,
    pub exit_m: Option<usize>,
    pub workers: Option<usize>,
    /// Reserved; the LQ solver is deterministic.
    pub seed: Option<u64>,
    #[serde(default)]
    pub convention: ConventionSpec,
}

#[derive(Debug, Clone, PartialEq, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConfigFile {
    pub plant: Option<PlantSpec>,
    #[serde(default)]
    pub run: RunSpec,
}

impl ConfigFile {
    pub fn parse(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
        Self::parse(&text).map_err(|e| match e {
            Error::Config(msg) => Error::Config(format!("{}: {msg}", path.display())),
            other => other,
        })
    }
}

fn matrix(name: &str, rows: &[Vec<f64>], nrows: usize, ncols: usize) -> Result<DMatrix<f64>> {
    if rows.len() != nrows || rows.iter().any(|r| r.len() != ncols) {
        let got: Vec<usize> = rows.iter().map(Vec::len).collect();
        return Err(Error::Config(format!(
            "matrix `{name}` must be {nrows}x{ncols}, got {} rows of lengths {got:?}",
            rows.len()
        )));
    }
    Ok(DMatrix::from_row_iterator(
        nrows,
        ncols,
        rows.iter().flatten().copied(),
    ))
}

impl PlantSpec {
    pub fn to_lq(&self) -> Result<LinearQuadratic> {
        let (n, m) = (self.state_dim, self.control_dim);
        if n == 0 || m == 0 {
            return Err(Error::Config(
                "state_dim and control_dim must be positive".into(),
            ));
        }
        LinearQuadratic::new(
            matrix("a", &self.a, n, n)?,
            matrix("b", &self.b, n, m)?,
            matrix("q", &self.q, n, n)?,
            matrix("r", &self.r, m, m)?,
        )
        .map_err(|e| Error::Config(e.to_string()))
    }
}

impl RunSpec {
    /// Overlays `other`'s set fields on `self`.
    pub fn merged(&self, other: &RunSpec) -> RunSpec {
        RunSpec {
            variant: other.variant.or(self.variant),
            horizon: other.horizon.or(self.horizon),
            alpha_bar: other.alpha_bar.or(self.alpha_bar),
            x0: other.x0.clone().or_else(|| self.x0.clone()),
            set: other.set.clone().or_else(|| self.set.clone()),
            out: other.out.clone().or_else(|| self.out.clone()),
            termination_radius: other.termination_radius.or(self.termination_radius),
            cert_slack: other.cert_slack.or(self.cert_slack),
            max_iterations: other.max_iterations.or(self.max_iterations),
            control_horizon: other.control_horizon.or(self.control_horizon),
            exit_m: other.exit_m.or(self.exit_m),
            workers: other.workers.or(self.workers),
            seed: other.seed.or(self.seed),
            convention: if other.convention != ConventionSpec::Exact {
                other.convention
            } else {
                self.convention
            },
        }
    }

    pub fn algorithm_config(&self) -> Result<AlgorithmConfig> {
        let horizon = self
            .horizon
            .ok_or_else(|| Error::Config("horizon is required".into()))?;
        let alpha_bar = self
            .alpha_bar
            .ok_or_else(|| Error::Config("alpha_bar is required".into()))?;
        let mut cfg = AlgorithmConfig::new(self.variant.unwrap_or_default(), horizon, alpha_bar);
        if let Some(r) = self.termination_radius {
            cfg.termination_radius = r;
        }
        if let Some(e) = self.cert_slack {
            cfg.cert_slack = e;
        }
        if let Some(k) = self.max_iterations {
            cfg.max_iterations = k;
        }
        if let Some(m) = self.control_horizon {
            cfg.control_horizon = ControlHorizon::Fixed(m);
        }
        if let Some(m) = self.exit_m {
            cfg.exit_m = m;
        }
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn initial_state(&self, dim: usize) -> Result<Option<State>> {
        match &self.x0 {
            None => Ok(None),
            Some(v) if v.len() == dim && v.iter().all(|x| x.is_finite()) => {
                Ok(Some(DVector::from_column_slice(v)))
            }
            Some(v) => Err(Error::Config(format!(
                "x0 must have {dim} finite entries, got {v:?}"
            ))),
        }
    }
}

/// The demonstration plant as a config snippet.
pub const DEFAULT_PLANT_TOML: &str = "\
[plant]
state_dim = 2
control_dim = 1
a = [[1.0, 1.1], [-1.1, 1.0]]
b = [[0.0], [1.0]]
q = [[1.0, 0.0], [0.0, 1.0]]
r = [[1.0]]
";
