use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::{SystemTime, UNIX_EPOCH};

use clap::{Args, Parser, Subcommand, ValueEnum};
use rlmpc::certificate::fmt_f64;
use rlmpc::config::{ConfigFile, ConventionSpec, RunSpec};
use rlmpc::reference::reference_checks;
use rlmpc::solver::{riccati_ladder, LqSolver};
use rlmpc::sweep::{horizon_comparison, horizon_table_csv, sweep, InitialSet};
use rlmpc::{Error, LinearQuadratic, RunStatus, Variant};
use serde_json::{json, Value};

const EXIT_CONFIG: u8 = 2;
const EXIT_SOLVER: u8 = 3;
const EXIT_CERTIFICATE: u8 = 4;

#[derive(Parser)]
#[command(
    name = "rlmpc",
    version,
    about = "Receding-horizon control with runtime suboptimality certificates"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Print the Riccati ladder P_1..P_N with a symmetry/PSD report.
    Riccati(CommonArgs),
    /// Run one closed loop from --x0.
    Run(CommonArgs),
    /// Run from every point of --set.
    Sweep(CommonArgs),
    /// Minimum alphas over --set for several horizons.
    HorizonTable {
        #[command(flatten)]
        common: CommonArgs,
        /// Comma-separated horizons.
        #[arg(long, value_delimiter = ',', default_value = "2,3,4,5,6,7,8")]
        horizons: Vec<usize>,
    },
    /// Check the oscillator reference values and write the backing data.
    ReproducePaper {
        #[arg(long)]
        out: Option<PathBuf>,
        /// Worker threads (default: all cores).
        #[arg(long)]
        workers: Option<usize>,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum ConventionArg {
    Exact,
    Published,
}

#[derive(Args, Default)]
struct CommonArgs {
    /// TOML file with optional [plant] and [run] tables.
    #[arg(long)]
    config: Option<PathBuf>,
    /// TOML file with a [plant] table; overrides the one in --config.
    #[arg(long)]
    plant: Option<PathBuf>,
    /// alg1, alg2, alg3 or alg4.
    #[arg(long)]
    variant: Option<String>,
    /// Prediction horizon N.
    #[arg(long)]
    horizon: Option<usize>,
    /// Target suboptimality index in [0, 1].
    #[arg(long)]
    alpha_bar: Option<f64>,
    /// Initial state, comma-separated.
    #[arg(long, value_delimiter = ',', allow_negative_numbers = true)]
    x0: Option<Vec<f64>>,
    /// Initial set: unit-circle:<k_max> or grid:<n>:<half_width>.
    #[arg(long)]
    set: Option<String>,
    /// Output directory.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Worker threads for sweeps (default: all cores).
    #[arg(long)]
    workers: Option<usize>,
    /// Omit the timestamp from summaries.
    #[arg(long)]
    no_timestamp: bool,
    /// Ladder rung feeding the feedback gain (default: exact).
    #[arg(long, value_enum)]
    convention: Option<ConventionArg>,
    /// Closed-loop step limit.
    #[arg(long)]
    max_iterations: Option<usize>,
    /// Fixed control horizon m_n (default: adaptive).
    #[arg(long)]
    control_horizon: Option<usize>,
    /// m_n used when no candidate certifies.
    #[arg(long)]
    exit_m: Option<usize>,
    /// Absolute slack on certificate inequalities.
    #[arg(long)]
    cert_slack: Option<f64>,
    /// Converged once the distance to the equilibrium is at most this.
    #[arg(long)]
    termination_radius: Option<f64>,
}

struct Failure {
    code: u8,
    message: String,
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        let code = match e {
            Error::Config(_)
            | Error::Io(_)
            | Error::InvalidModel(_)
            | Error::DimensionMismatch { .. } => EXIT_CONFIG,
            _ => EXIT_SOLVER,
        };
        Failure {
            code,
            message: e.to_string(),
        }
    }
}

impl From<std::io::Error> for Failure {
    fn from(e: std::io::Error) -> Self {
        Error::from(e).into()
    }
}

fn config_error(msg: impl Into<String>) -> Failure {
    Error::Config(msg.into()).into()
}

/// Everything a subcommand needs after merging config file and flags.
struct Resolved {
    lq: LinearQuadratic,
    spec: RunSpec,
    out: Option<PathBuf>,
    timestamp: bool,
}

impl CommonArgs {
    fn flag_spec(&self) -> Result<RunSpec, Failure> {
        let variant = self
            .variant
            .as_deref()
            .map(str::parse::<Variant>)
            .transpose()?;
        Ok(RunSpec {
            variant,
            horizon: self.horizon,
            alpha_bar: self.alpha_bar,
            x0: self.x0.clone(),
            set: self.set.clone(),
            out: self.out.as_ref().map(|p| p.display().to_string()),
            termination_radius: self.termination_radius,
            cert_slack: self.cert_slack,
            max_iterations: self.max_iterations,
            control_horizon: self.control_horizon,
            exit_m: self.exit_m,
            workers: self.workers,
            seed: None,
            convention: match self.convention {
                Some(ConventionArg::Published) => ConventionSpec::Published,
                _ => ConventionSpec::Exact,
            },
        })
    }

    fn resolve(&self) -> Result<Resolved, Failure> {
        let file = match &self.config {
            Some(path) => ConfigFile::load(path)?,
            None => ConfigFile::default(),
        };
        let plant = match &self.plant {
            Some(path) => ConfigFile::load(path)?
                .plant
                .ok_or_else(|| config_error(format!("{}: no [plant] table", path.display())))?,
            None => file.plant.clone().ok_or_else(|| {
                config_error("no plant given; use --plant or a [plant] table in --config")
            })?,
        };
        let spec = file.run.merged(&self.flag_spec()?);
        Ok(Resolved {
            lq: plant.to_lq()?,
            out: spec.out.as_ref().map(PathBuf::from),
            spec,
            timestamp: !self.no_timestamp,
        })
    }
}

impl Resolved {
    fn solver(&self, depth: usize) -> Result<LqSolver, Failure> {
        Ok(LqSolver::with_convention(
            self.lq.clone(),
            depth,
            self.spec.convention.into(),
        )?)
    }

    fn out_dir(&self) -> Result<Option<&Path>, Failure> {
        if let Some(dir) = &self.out {
            fs::create_dir_all(dir)?;
        }
        Ok(self.out.as_deref())
    }

    fn initial_set(&self) -> Result<InitialSet, Failure> {
        let spec = self
            .spec
            .set
            .as_deref()
            .ok_or_else(|| config_error("an initial set is required (--set)"))?;
        let set = InitialSet::parse(spec)?;
        if set.points.iter().any(|p| p.len() != self.lq.state_dim()) {
            return Err(config_error(format!(
                "initial set `{spec}` is 2-dimensional, plant has {} states",
                self.lq.state_dim()
            )));
        }
        Ok(set)
    }
}

fn stamp(mut value: Value, timestamp: bool) -> Value {
    if timestamp {
        let secs = SystemTime::now()
            .duration_since(UNIX_EPOCH)
            .map(|d| d.as_secs())
            .unwrap_or(0);
        value["timestamp"] = json!(secs);
    }
    value
}

fn write_json(path: &Path, value: &Value) -> Result<(), Failure> {
    let text = serde_json::to_string_pretty(value).map_err(|e| config_error(e.to_string()))?;
    fs::write(path, text + "\n")?;
    Ok(())
}

fn cmd_riccati(args: &CommonArgs) -> Result<u8, Failure> {
    let r = args.resolve()?;
    let depth = r
        .spec
        .horizon
        .ok_or_else(|| config_error("horizon is required"))?;
    if depth == 0 {
        return Err(config_error("horizon must be at least 1"));
    }
    let ladder = riccati_ladder(&r.lq, depth)?;
    let mut csv = String::from("j,row,col,value\n");
    for (j, p) in ladder.rungs().iter().enumerate() {
        let asym = (p - p.transpose()).amax();
        let min_eig = p.clone().symmetric_eigenvalues().min();
        println!(
            "P_{} (asymmetry {asym:.1e}, min eigenvalue {min_eig:.6}):",
            j + 1
        );
        for row in 0..p.nrows() {
            let cells: Vec<String> = (0..p.ncols())
                .map(|c| format!("{:>18.10}", p[(row, c)]))
                .collect();
            println!("  {}", cells.join(" "));
            for c in 0..p.ncols() {
                csv.push_str(&format!("{},{row},{c},{}\n", j + 1, fmt_f64(p[(row, c)])));
            }
        }
    }
    if let Some(dir) = r.out_dir()? {
        fs::write(dir.join("riccati.csv"), csv)?;
    }
    Ok(0)
}

fn cmd_run(args: &CommonArgs) -> Result<u8, Failure> {
    let r = args.resolve()?;
    let cfg = r.spec.algorithm_config()?;
    let x0 = r
        .spec
        .initial_state(r.lq.state_dim())?
        .ok_or_else(|| config_error("an initial state is required (--x0)"))?;
    let solver = r.solver(cfg.horizon)?;
    let trace = rlmpc::run(&solver, &x0, &cfg)?;
    let summary = stamp(
        serde_json::to_value(trace.summary()).map_err(|e| config_error(e.to_string()))?,
        r.timestamp,
    );
    match r.out_dir()? {
        Some(dir) => {
            fs::write(dir.join("certificates.csv"), trace.certificates_csv())?;
            write_json(&dir.join("summary.json"), &summary)?;
            println!(
                "{}: {} intervals, final alpha {}",
                trace.status,
                trace.certificates.len(),
                trace.final_alpha()
            );
        }
        None => println!(
            "{}",
            serde_json::to_string_pretty(&summary).unwrap_or_default()
        ),
    }
    Ok(if trace.status == RunStatus::Converged {
        0
    } else {
        EXIT_CERTIFICATE
    })
}

fn cmd_sweep(args: &CommonArgs) -> Result<u8, Failure> {
    let r = args.resolve()?;
    let cfg = r.spec.algorithm_config()?;
    let set = r.initial_set()?;
    let solver = r.solver(cfg.horizon)?;
    let report = sweep(&solver, &set, &cfg, r.spec.workers)?;
    let agg = &report.aggregates;
    let summary = stamp(
        json!({
            "generator": report.generator,
            "variant": cfg.variant,
            "horizon": cfg.horizon,
            "alpha_bar": cfg.alpha_bar,
            "points": report.records.len(),
            "aggregates": agg,
        }),
        r.timestamp,
    );
    if let Some(dir) = r.out_dir()? {
        fs::write(dir.join("sweep_points.csv"), report.to_csv())?;
        write_json(&dir.join("sweep_summary.json"), &summary)?;
    }
    println!(
        "{} points: alpha_cor3 min {} max {} mean {}; one-step alpha < 0 at {} points; {} flagged; {} errors",
        report.records.len(),
        fmt_f64(agg.min_alpha_cor3),
        fmt_f64(agg.max_alpha_cor3),
        fmt_f64(agg.mean_alpha_cor3),
        agg.negative_1step.len(),
        agg.failure_set.len(),
        agg.errors.len()
    );
    Ok(if agg.errors.is_empty() {
        0
    } else {
        EXIT_SOLVER
    })
}

fn cmd_horizon_table(args: &CommonArgs, horizons: &[usize]) -> Result<u8, Failure> {
    let r = args.resolve()?;
    let mut spec = r.spec.clone();
    let deepest = horizons
        .iter()
        .copied()
        .max()
        .ok_or_else(|| config_error("no horizons"))?;
    // the table overrides N per row; validate the rest against the deepest
    spec.horizon = Some(deepest.max(2));
    let cfg = spec.algorithm_config()?;
    let set = r.initial_set()?;
    let solver = r.solver(deepest)?;
    let rows = horizon_comparison(&solver, &set, horizons, &cfg, r.spec.workers)?;
    let csv = horizon_table_csv(&rows);
    if let Some(dir) = r.out_dir()? {
        fs::write(dir.join("horizon_table.csv"), &csv)?;
    }
    print!("{csv}");
    Ok(0)
}

fn cmd_reproduce(out: Option<&Path>, workers: Option<usize>) -> Result<u8, Failure> {
    if let Some(dir) = out {
        fs::create_dir_all(dir)?;
    }
    let checks = reference_checks(workers, out)?;
    let mut failed = 0;
    for c in &checks {
        println!(
            "{} {}: {}",
            if c.pass { "PASS" } else { "FAIL" },
            c.name,
            c.detail
        );
        failed += usize::from(!c.pass);
    }
    println!(
        "{} of {} checks passed",
        checks.len() - failed,
        checks.len()
    );
    Ok(if failed == 0 { 0 } else { EXIT_CERTIFICATE })
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match &cli.command {
        Command::Riccati(args) => cmd_riccati(args),
        Command::Run(args) => cmd_run(args),
        Command::Sweep(args) => cmd_sweep(args),
        Command::HorizonTable { common, horizons } => cmd_horizon_table(common, horizons),
        Command::ReproducePaper { out, workers } => cmd_reproduce(out.as_deref(), *workers),
    };
    match result {
        Ok(code) => ExitCode::from(code),
        Err(f) => {
            eprintln!("error: {}", f.message);
            ExitCode::from(f.code)
        }
    }
}
