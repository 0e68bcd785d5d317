//! The `lienav` command line: run, validate, sweep, oracle, list-builtins.
//!
//! Exit codes: 0 converged / check passed, 1 usage or I/O error,
//! 2 horizon exhausted, 3 collision, 4 validation or oracle failure,
//! 5 rank failure.

use std::fs;
use std::io::Write as _;
use std::path::{Path, PathBuf};
use std::time::Instant;

use clap::{Parser, Subcommand, ValueEnum};
use rayon::prelude::*;
use serde::Serialize;

use crate::control::{assign_frequencies, ControlParams, PrimitiveVariant, TripleFrequencies};
use crate::error::{Error, Result};
use crate::potential::Potential;
use crate::scenarios::{self, Scenario, ValidationReport};
use crate::sim::{
    classify_critical_point, epoch_displacement_oracle, excursion_bound_check, monotonicity_check,
    primitive_displacement_oracle, CriticalPointReport, EpochDisplacementReport, ExcursionReport, PrimitiveReport,
    Termination, Trajectory,
};
use crate::svg::{Marker, Plot, Series};
use crate::system::builtin;

pub const EXIT_OK: i32 = 0;
pub const EXIT_USAGE: i32 = 1;
pub const EXIT_HORIZON: i32 = 2;
pub const EXIT_COLLISION: i32 = 3;
pub const EXIT_VALIDATION: i32 = 4;
pub const EXIT_RANK: i32 = 5;

/// Minimum slope accepted by `oracle epoch-displacement`.
pub const EPOCH_SLOPE_MIN: f64 = 4.0 / 3.0 - 0.1;
pub const DIRECTION_TOLERANCE: f64 = 0.1;
pub const PRIMITIVE_TOLERANCE: f64 = 0.1;
pub const PRIMITIVE_EXPONENT_TOLERANCE: f64 = 0.15;

#[derive(Debug, Parser)]
#[command(
    name = "lienav",
    version,
    about = "Oscillatory sampled-data feedback along navigation-function gradients"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Format {
    Csv,
    Json,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum SweepParam {
    Epsilon,
    Gamma,
}

#[derive(Debug, Clone, Default, clap::Args)]
pub struct Overrides {
    /// Epoch length.
    #[arg(long)]
    pub epsilon: Option<f64>,
    /// Gradient gain.
    #[arg(long)]
    pub gamma: Option<f64>,
    #[arg(long)]
    pub t_max: Option<f64>,
    /// RK4 substeps per epoch per unit of the largest frequency.
    #[arg(long)]
    pub substeps: Option<usize>,
    #[arg(long)]
    pub stop_distance: Option<f64>,
    /// Re-run the frequency search with this seed instead of the scenario's frequencies.
    #[arg(long)]
    pub seed: Option<u64>,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Simulate a scenario and write trajectory, metrics, report and plots.
    Run {
        /// Builtin name or path to a scenario TOML file.
        scenario: String,
        #[command(flatten)]
        overrides: Overrides,
        /// Keep every n-th substep in the trajectory table.
        #[arg(long, default_value_t = 10)]
        record_stride: usize,
        #[arg(long)]
        output: Option<PathBuf>,
        #[arg(long, value_enum, default_value_t = Format::Csv)]
        format: Format,
        /// Skip SVG plots.
        #[arg(long)]
        no_plots: bool,
        /// 1-based coordinate pair for a projection plot, e.g. `1,3`; repeatable.
        #[arg(long, value_parser = parse_pair)]
        project: Vec<(usize, usize)>,
    },
    /// Run the static checks of a scenario.
    Validate {
        scenario: String,
        #[command(flatten)]
        overrides: Overrides,
        #[arg(long, value_enum, default_value_t = Format::Csv)]
        format: Format,
    },
    /// Run a scenario once per parameter value, concurrently.
    Sweep {
        scenario: String,
        #[arg(long, value_enum)]
        param: SweepParam,
        /// Comma-separated values; may be empty.
        #[arg(long, value_delimiter = ',')]
        values: Vec<f64>,
        #[command(flatten)]
        overrides: Overrides,
        #[arg(long)]
        output: Option<PathBuf>,
        #[arg(long, value_enum, default_value_t = Format::Csv)]
        format: Format,
    },
    /// Numerical checks of the averaging expansions and the a-priori bound.
    Oracle {
        #[command(subcommand)]
        which: OracleCommand,
    },
    /// List the builtin scenarios and systems.
    ListBuiltins,
}

#[derive(Debug, Subcommand)]
pub enum OracleCommand {
    /// One-epoch remainder order for a scenario.
    EpochDisplacement {
        #[arg(default_value = "rigid-body")]
        scenario: String,
        #[arg(long, value_delimiter = ',', default_values_t = [0.2, 0.1, 0.05, 0.025])]
        epsilons: Vec<f64>,
        /// Start state (defaults to the scenario's initial state).
        #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
        x0: Vec<f64>,
        /// Defaults to 400 here (`--substeps`).
        #[command(flatten)]
        overrides: Overrides,
        #[arg(long, value_enum, default_value_t = Format::Csv)]
        format: Format,
    },
    /// Displacement of a single second-order bracket primitive.
    BracketPrimitive {
        #[arg(long, default_value = "brockett-integrator")]
        system: String,
        /// 1-based triple `l1,l2,l3`.
        #[arg(long, value_parser = parse_triple, default_value = "1,2,1")]
        triple: (usize, usize, usize),
        #[arg(long, default_value_t = 1, allow_hyphen_values = true)]
        k1: i64,
        #[arg(long, default_value_t = 3, allow_hyphen_values = true)]
        k2: i64,
        #[arg(long, value_enum, default_value_t = Variant::RepeatedIndex)]
        variant: Variant,
        #[arg(long, value_delimiter = ',', default_values_t = [0.1, 0.05, 0.025])]
        epsilons: Vec<f64>,
        #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
        x0: Vec<f64>,
        #[arg(long, default_value_t = 20000)]
        steps: usize,
        #[arg(long, value_enum, default_value_t = Format::Csv)]
        format: Format,
    },
    /// A-priori excursion bound on every epoch of a full run.
    ExcursionBound {
        #[arg(default_value = "rigid-body")]
        scenario: String,
        #[command(flatten)]
        overrides: Overrides,
        #[arg(long, default_value_t = 1)]
        sample_seed: u64,
        #[arg(long, value_enum, default_value_t = Format::Csv)]
        format: Format,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Variant {
    FullTriple,
    RepeatedIndex,
}

impl From<Variant> for PrimitiveVariant {
    fn from(v: Variant) -> Self {
        match v {
            Variant::FullTriple => PrimitiveVariant::FullTriple,
            Variant::RepeatedIndex => PrimitiveVariant::RepeatedIndex,
        }
    }
}

fn parse_indices(s: &str, k: usize) -> std::result::Result<Vec<usize>, String> {
    let v: Vec<usize> = s
        .split(',')
        .map(|p| p.trim().parse::<usize>().map_err(|e| format!("`{p}`: {e}")))
        .collect::<std::result::Result<_, _>>()?;
    if v.len() != k || v.contains(&0) {
        return Err(format!("expected {k} comma-separated 1-based indices, got `{s}`"));
    }
    Ok(v)
}

fn parse_pair(s: &str) -> std::result::Result<(usize, usize), String> {
    let v = parse_indices(s, 2)?;
    Ok((v[0], v[1]))
}

fn parse_triple(s: &str) -> std::result::Result<(usize, usize, usize), String> {
    let v = parse_indices(s, 3)?;
    Ok((v[0], v[1], v[2]))
}

/// Summary of one closed-loop run.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RunReport {
    pub scenario: String,
    pub outcome: String,
    pub termination: Termination,
    pub epsilon: f64,
    pub gamma: f64,
    pub frequencies: crate::control::FrequencyAssignment,
    pub steps_per_epoch: usize,
    pub final_time: f64,
    pub final_state: Vec<f64>,
    pub final_distance: f64,
    pub min_distance: f64,
    pub min_distance_time: f64,
    pub min_margin: f64,
    pub final_potential: f64,
    pub final_grad_norm: f64,
    pub epochs: usize,
    pub monotonicity_violations: usize,
    pub max_potential_increase: f64,
    /// Hessian classification of the final state when the run did not converge.
    pub critical_point: Option<CriticalPointReport>,
    pub wall_time_s: f64,
}

impl RunReport {
    pub fn from_trajectory(sc: &Scenario, traj: &Trajectory, wall: f64) -> Self {
        let mono = monotonicity_check(traj);
        let x = traj.final_state().to_vec();
        let critical_point = match traj.termination {
            Termination::HorizonExhausted => classify_critical_point(&sc.potential, &x, 1e-5).ok(),
            _ => None,
        };
        RunReport {
            scenario: sc.name.clone(),
            outcome: traj.termination.label().to_string(),
            termination: traj.termination.clone(),
            epsilon: sc.params.epsilon,
            gamma: sc.params.gamma,
            frequencies: sc.frequencies.clone(),
            steps_per_epoch: traj.steps_per_epoch,
            final_time: traj.final_time(),
            final_distance: traj.final_distance(),
            final_potential: traj.metrics.last().map_or(f64::NAN, |m| m.potential),
            final_grad_norm: sc.potential.gradient(&x).map_or(f64::NAN, |g| g.norm()),
            final_state: x,
            min_distance: traj.min_distance,
            min_distance_time: traj.min_distance_time,
            min_margin: traj.min_margin,
            epochs: traj.epochs.len(),
            monotonicity_violations: mono.increases.len(),
            max_potential_increase: mono.max_increase,
            critical_point,
            wall_time_s: wall,
        }
    }

    pub fn exit_code(&self) -> i32 {
        exit_code(&self.termination)
    }
}

pub fn exit_code(t: &Termination) -> i32 {
    match t {
        Termination::Converged => EXIT_OK,
        Termination::HorizonExhausted => EXIT_HORIZON,
        Termination::Collision { .. } => EXIT_COLLISION,
        Termination::RankFailure { .. } => EXIT_RANK,
    }
}

/// Exit code for an error raised before or outside a simulation.
pub fn error_exit_code(e: &Error) -> i32 {
    match e {
        Error::Io(_) => EXIT_USAGE,
        Error::Collision { .. } => EXIT_COLLISION,
        Error::RankDeficient { .. } => EXIT_RANK,
        _ => EXIT_VALIDATION,
    }
}

pub fn apply_overrides(mut sc: Scenario, o: &Overrides) -> Result<Scenario> {
    if let Some(e) = o.epsilon {
        sc.params.epsilon = e;
    }
    if let Some(g) = o.gamma {
        sc.params.gamma = g;
    }
    if let Some(t) = o.t_max {
        sc.sim.t_max = t;
    }
    if let Some(s) = o.substeps {
        sc.sim.substeps_per_unit_frequency = s;
    }
    if let Some(d) = o.stop_distance {
        sc.sim.stop_distance = d;
    }
    if let Some(seed) = o.seed {
        sc.frequencies = assign_frequencies(&sc.basis, Some(seed))?;
        sc.seed = Some(seed);
    }
    ControlParams::new(sc.params.epsilon, sc.params.gamma)?;
    sc.sim.validate()?;
    Ok(sc)
}

fn fmt_f(v: f64) -> String {
    format!("{v}")
}

fn write_table(
    path: &Path,
    header: &[String],
    rows: impl Iterator<Item = Vec<f64>>,
    format: Format,
) -> Result<PathBuf> {
    match format {
        Format::Csv => {
            let path = path.with_extension("csv");
            let mut w = csv::Writer::from_path(&path).map_err(csv_err)?;
            w.write_record(header).map_err(csv_err)?;
            for r in rows {
                w.write_record(r.iter().map(|v| fmt_f(*v))).map_err(csv_err)?;
            }
            w.flush()?;
            Ok(path)
        }
        Format::Json => {
            let path = path.with_extension("json");
            let records: Vec<serde_json::Map<String, serde_json::Value>> = rows
                .map(|r| header.iter().cloned().zip(r.into_iter().map(json_num)).collect())
                .collect();
            fs::write(&path, serde_json::to_string_pretty(&records).map_err(json_err)? + "\n")?;
            Ok(path)
        }
    }
}

fn json_num(v: f64) -> serde_json::Value {
    serde_json::Number::from_f64(v).map_or(serde_json::Value::Null, serde_json::Value::Number)
}

fn csv_err(e: csv::Error) -> Error {
    Error::Io(std::io::Error::other(e))
}

fn json_err(e: serde_json::Error) -> Error {
    Error::Io(std::io::Error::other(e))
}

fn write_json<T: Serialize>(path: &Path, v: &T) -> Result<()> {
    fs::write(path, serde_json::to_string_pretty(v).map_err(json_err)? + "\n")?;
    Ok(())
}

/// `trajectory` (time, state, controls, distance, margin, P), `metrics`
/// (time, distance, margin, P, ln(1+Πβ)) and `epochs`.
pub fn write_trajectory(dir: &Path, traj: &Trajectory, format: Format) -> Result<Vec<PathBuf>> {
    fs::create_dir_all(dir)?;
    let n = traj.states.first().map_or(0, |s| s.len());
    let m = traj.controls.first().map_or(0, |u| u.len());
    let mut header = vec!["t".to_string()];
    header.extend((1..=n).map(|i| format!("x{i}")));
    header.extend((1..=m).map(|i| format!("u{i}")));
    header.extend(["distance", "margin", "potential"].map(String::from));
    let rows = (0..traj.len()).map(|k| {
        let mt = &traj.metrics[k];
        let mut r = vec![traj.times[k]];
        r.extend(&traj.states[k]);
        r.extend(&traj.controls[k]);
        r.extend([mt.distance, mt.margin, mt.potential]);
        r
    });
    let mut out = vec![write_table(&dir.join("trajectory"), &header, rows, format)?];

    let header: Vec<String> = ["t", "distance", "margin", "potential", "log_barrier"]
        .map(String::from)
        .to_vec();
    let rows = (0..traj.len()).map(|k| {
        let mt = &traj.metrics[k];
        vec![traj.times[k], mt.distance, mt.margin, mt.potential, mt.log_barrier]
    });
    out.push(write_table(&dir.join("metrics"), &header, rows, format)?);

    let p = traj.epochs.first().map_or(0, |e| e.coefficients.len());
    let mut header: Vec<String> = [
        "epoch",
        "t",
        "potential",
        "grad_norm",
        "condition",
        "control_sup",
        "max_excursion",
    ]
    .map(String::from)
    .to_vec();
    header.extend((1..=p).map(|i| format!("a{i}")));
    let rows = traj.epochs.iter().map(|e| {
        let mut r = vec![
            e.index as f64,
            e.t_start,
            e.potential,
            e.grad_norm,
            e.condition,
            e.control_sup,
            e.max_excursion,
        ];
        r.extend(&e.coefficients);
        r
    });
    out.push(write_table(&dir.join("epochs"), &header, rows, format)?);
    Ok(out)
}

pub fn default_projections(n: usize) -> Vec<(usize, usize)> {
    match n {
        0 | 1 => vec![],
        2 => vec![(1, 2)],
        _ => vec![(1, 2), (1, 3)],
    }
}

/// Projection plots plus time plots of `‖x − x*‖`, `ln(1 + Πβ)` and `P`.
pub fn write_plots(
    dir: &Path,
    sc: &Scenario,
    traj: &Trajectory,
    projections: &[(usize, usize)],
) -> Result<Vec<PathBuf>> {
    fs::create_dir_all(dir)?;
    let n = sc.system.state_dim();
    let target: Vec<f64> = sc.scene().target().iter().copied().collect();
    let mut out = Vec::new();
    for &(i, j) in projections {
        if i == 0 || j == 0 || i > n || j > n {
            return Err(Error::InvalidParameter(format!("projection ({i},{j}) outside 1..={n}")));
        }
        let plot = Plot {
            title: format!("{}: projection on (x{i}, x{j})", sc.name),
            x_label: format!("x{i}"),
            y_label: format!("x{j}"),
            series: vec![Series {
                label: "trajectory".into(),
                points: traj.states.iter().map(|x| (x[i - 1], x[j - 1])).collect(),
            }],
            markers: vec![
                Marker {
                    label: "x0".into(),
                    at: (sc.x0[i - 1], sc.x0[j - 1]),
                },
                Marker {
                    label: "x*".into(),
                    at: (target[i - 1], target[j - 1]),
                },
            ],
            equal_aspect: true,
        };
        let path = dir.join(format!("projection_x{i}_x{j}.svg"));
        fs::write(&path, plot.render())?;
        out.push(path);
    }
    let time_plot = |name: &str, title: &str, y: &dyn Fn(usize) -> f64| -> Result<PathBuf> {
        let plot = Plot {
            title: format!("{}: {title}", sc.name),
            x_label: "t".into(),
            y_label: title.into(),
            series: vec![Series {
                label: title.into(),
                points: (0..traj.len()).map(|k| (traj.times[k], y(k))).collect(),
            }],
            markers: vec![],
            equal_aspect: false,
        };
        let path = dir.join(format!("{name}.svg"));
        fs::write(&path, plot.render())?;
        Ok(path)
    };
    out.push(time_plot("distance", "|x(t) - x*|", &|k| traj.metrics[k].distance)?);
    out.push(time_plot("log_barrier", "ln(1 + prod beta_j)", &|k| {
        traj.metrics[k].log_barrier
    })?);
    out.push(time_plot("potential", "P(x(t))", &|k| traj.metrics[k].potential)?);
    Ok(out)
}

fn print_run_summary(w: &mut dyn std::io::Write, r: &RunReport) -> std::io::Result<()> {
    writeln!(w, "scenario        {}", r.scenario)?;
    writeln!(w, "outcome         {}", r.outcome)?;
    writeln!(w, "final time      {:.4}", r.final_time)?;
    writeln!(w, "final distance  {:.6}", r.final_distance)?;
    writeln!(
        w,
        "min distance    {:.6} (t = {:.3})",
        r.min_distance, r.min_distance_time
    )?;
    writeln!(w, "min margin      {:.6e}", r.min_margin)?;
    writeln!(w, "final P         {:.6}", r.final_potential)?;
    writeln!(w, "final |grad P|  {:.3e}", r.final_grad_norm)?;
    writeln!(w, "epochs          {}", r.epochs)?;
    writeln!(
        w,
        "P increases     {} (max step change {:.3e})",
        r.monotonicity_violations, r.max_potential_increase
    )?;
    if let Some(c) = &r.critical_point {
        writeln!(
            w,
            "final state     {:?} looks like a {:?} of P (Hessian eigenvalues {:?})",
            r.final_state, c.kind, c.eigenvalues
        )?;
    }
    writeln!(w, "wall time       {:.3} s", r.wall_time_s)
}

pub struct RunOptions<'a> {
    pub record_stride: usize,
    pub output: &'a Path,
    pub format: Format,
    pub plots: bool,
    pub projections: Vec<(usize, usize)>,
}

/// Simulates, writes artifacts into `opts.output` and returns the report.
pub fn cmd_run(sc: &Scenario, opts: &RunOptions<'_>) -> Result<RunReport> {
    let mut sc = sc.clone();
    sc.sim.record_stride = opts.record_stride;
    let start = Instant::now();
    let traj = sc.simulate()?;
    let report = RunReport::from_trajectory(&sc, &traj, start.elapsed().as_secs_f64());
    write_trajectory(opts.output, &traj, opts.format)?;
    write_json(&opts.output.join("report.json"), &report)?;
    if opts.plots {
        let proj = if opts.projections.is_empty() {
            default_projections(sc.system.state_dim())
        } else {
            opts.projections.clone()
        };
        write_plots(opts.output, &sc, &traj, &proj)?;
    }
    Ok(report)
}

pub fn cmd_validate(sc: &Scenario) -> ValidationReport {
    sc.validate()
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SweepRow {
    pub value: f64,
    pub outcome: String,
    pub final_distance: f64,
    pub min_margin: f64,
    pub monotonicity_violations: usize,
    pub epochs: usize,
    /// Mean per-epoch decrease of `P`.
    pub mean_p_decrease: f64,
    pub error: Option<String>,
}

/// One run per value in parallel; each run writes into `output/<param>-<value>/`.
pub fn cmd_sweep(sc: &Scenario, param: SweepParam, values: &[f64], output: &Path, format: Format) -> Vec<SweepRow> {
    let name = match param {
        SweepParam::Epsilon => "epsilon",
        SweepParam::Gamma => "gamma",
    };
    values
        .par_iter()
        .map(|&v| {
            let mut s = sc.clone();
            match param {
                SweepParam::Epsilon => s.params.epsilon = v,
                SweepParam::Gamma => s.params.gamma = v,
            }
            let dir = output.join(format!("{name}-{v}"));
            let opts = RunOptions {
                record_stride: s.sim.record_stride.max(10),
                output: &dir,
                format,
                plots: false,
                projections: vec![],
            };
            let res = s.params.validate().and_then(|_| {
                fs::create_dir_all(&dir)?;
                let start = Instant::now();
                let traj = s.simulate()?;
                let report = RunReport::from_trajectory(&s, &traj, start.elapsed().as_secs_f64());
                let mut t = traj.clone();
                thin(&mut t, opts.record_stride);
                write_trajectory(&dir, &t, format)?;
                write_json(&dir.join("report.json"), &report)?;
                Ok((report, traj))
            });
            match res {
                Ok((r, traj)) => {
                    let mono = monotonicity_check(&traj);
                    let k = mono.values.len();
                    let mean = if k >= 2 {
                        (mono.values[0] - mono.values[k - 1]) / (k - 1) as f64
                    } else {
                        0.0
                    };
                    SweepRow {
                        value: v,
                        outcome: r.outcome,
                        final_distance: r.final_distance,
                        min_margin: r.min_margin,
                        monotonicity_violations: r.monotonicity_violations,
                        epochs: r.epochs,
                        mean_p_decrease: mean,
                        error: None,
                    }
                }
                Err(e) => SweepRow {
                    value: v,
                    outcome: "error".into(),
                    final_distance: f64::NAN,
                    min_margin: f64::NAN,
                    monotonicity_violations: 0,
                    epochs: 0,
                    mean_p_decrease: f64::NAN,
                    error: Some(e.to_string()),
                },
            }
        })
        .collect()
}

/// Keeps epoch starts and every `stride`-th sample in between.
fn thin(t: &mut Trajectory, stride: usize) {
    if stride <= 1 {
        return;
    }
    let starts: std::collections::BTreeSet<usize> = t.epoch_starts().into_iter().collect();
    let keep: Vec<bool> = (0..t.len())
        .map(|k| k % stride == 0 || starts.contains(&k) || k + 1 == t.len())
        .collect();
    let mut remap = vec![0usize; t.len()];
    let mut j = 0;
    for (k, &kp) in keep.iter().enumerate() {
        remap[k] = j;
        if kp {
            j += 1;
        }
    }
    fn filter<T>(v: &mut Vec<T>, keep: &[bool]) {
        let mut k = 0;
        v.retain(|_| {
            k += 1;
            keep[k - 1]
        });
    }
    filter(&mut t.times, &keep);
    filter(&mut t.states, &keep);
    filter(&mut t.controls, &keep);
    filter(&mut t.metrics, &keep);
    for e in &mut t.epochs {
        e.sample = remap[e.sample];
    }
}

fn write_sweep(path: &Path, rows: &[SweepRow], format: Format) -> Result<PathBuf> {
    fs::create_dir_all(path.parent().unwrap_or(Path::new(".")))?;
    match format {
        Format::Csv => {
            let p = path.with_extension("csv");
            let mut w = csv::Writer::from_path(&p).map_err(csv_err)?;
            w.write_record([
                "value",
                "outcome",
                "final_distance",
                "min_margin",
                "monotonicity_violations",
                "epochs",
                "mean_p_decrease",
                "error",
            ])
            .map_err(csv_err)?;
            for r in rows {
                w.write_record([
                    fmt_f(r.value),
                    r.outcome.clone(),
                    fmt_f(r.final_distance),
                    fmt_f(r.min_margin),
                    r.monotonicity_violations.to_string(),
                    r.epochs.to_string(),
                    fmt_f(r.mean_p_decrease),
                    r.error.clone().unwrap_or_default(),
                ])
                .map_err(csv_err)?;
            }
            w.flush()?;
            Ok(p)
        }
        Format::Json => {
            let p = path.with_extension("json");
            write_json(&p, &rows)?;
            Ok(p)
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct OracleVerdict<T> {
    pub oracle: String,
    pub passed: bool,
    pub diagnostics: Vec<String>,
    pub report: T,
}

pub fn judge_epoch_displacement(r: &EpochDisplacementReport) -> (bool, Vec<String>) {
    let mut diag = Vec::new();
    let mut ok = true;
    match r.slope {
        Some(s) if s >= EPOCH_SLOPE_MIN => diag.push(format!("fitted slope {s:.4} >= {EPOCH_SLOPE_MIN:.4}")),
        Some(s) => {
            ok = false;
            diag.push(format!("fitted slope {s:.4} < {EPOCH_SLOPE_MIN:.4}"));
        }
        None => {
            ok = false;
            diag.push("no slope: the gradient vanishes at x0".into());
        }
    }
    if let Some(last) = r.rows.iter().min_by(|a, b| a.epsilon.total_cmp(&b.epsilon)) {
        let pass = last.direction_error < DIRECTION_TOLERANCE;
        ok &= pass;
        diag.push(format!(
            "direction error {:.4} at eps = {} ({} {DIRECTION_TOLERANCE})",
            last.direction_error,
            last.epsilon,
            if pass { "<" } else { ">=" }
        ));
    }
    (ok, diag)
}

pub fn judge_primitive(r: &PrimitiveReport) -> (bool, Vec<String>) {
    let mut diag = Vec::new();
    let mut ok = true;
    if r.bracket_norm < 1e-12 {
        ok = false;
        diag.push(format!(
            "second bracket vanishes at x0 (norm {:.2e}); the leading term is zero and the closed form cannot be matched",
            r.bracket_norm
        ));
    }
    for row in &r.rows {
        let pass = row.dominant_error < PRIMITIVE_TOLERANCE;
        ok &= pass;
        diag.push(format!(
            "eps = {}: dominant-component error {:.4}, full relative error {:.4}",
            row.epsilon, row.dominant_error, row.relative_error
        ));
    }
    if r.halving_exponents.is_empty() {
        ok = false;
        diag.push("no halved epsilon pairs to measure the exponent".into());
    }
    for e in &r.halving_exponents {
        let pass = (e - 3.0).abs() <= PRIMITIVE_EXPONENT_TOLERANCE;
        ok &= pass;
        diag.push(format!(
            "halving exponent {e:.4} (target 3 +/- {PRIMITIVE_EXPONENT_TOLERANCE})"
        ));
    }
    (ok, diag)
}

pub fn judge_excursion(r: &ExcursionReport) -> (bool, Vec<String>) {
    let mut diag = vec![format!(
        "L = {:.4}, M = {:.4}, {} epochs, {} samples, max excursion/bound {:.4}",
        r.lipschitz, r.field_bound, r.epochs_checked, r.samples_checked, r.max_ratio
    )];
    for v in r.violations.iter().take(10) {
        diag.push(format!(
            "violation in epoch {} at t = {:.6}: excursion {:.6e} > bound {:.6e}",
            v.epoch, v.time, v.excursion, v.bound
        ));
    }
    (r.passed(), diag)
}

fn emit<T: Serialize>(out: &mut dyn std::io::Write, v: &OracleVerdict<T>, format: Format) -> Result<()> {
    match format {
        Format::Json => writeln!(out, "{}", serde_json::to_string_pretty(v).map_err(json_err)?)?,
        Format::Csv => {
            writeln!(out, "oracle {}: {}", v.oracle, if v.passed { "PASS" } else { "FAIL" })?;
            for d in &v.diagnostics {
                writeln!(out, "  {d}")?;
            }
        }
    }
    Ok(())
}

fn resolve_with(spec: &str, o: &Overrides) -> Result<Scenario> {
    apply_overrides(scenarios::resolve(spec)?, o)
}

fn default_output(name: &str) -> PathBuf {
    PathBuf::from("out").join(name)
}

/// Runs a parsed command, writing human output to `out`, and returns the exit code.
pub fn execute(cli: Cli, out: &mut dyn std::io::Write) -> Result<i32> {
    match cli.command {
        Command::Run {
            scenario,
            overrides,
            record_stride,
            output,
            format,
            no_plots,
            project,
        } => {
            let sc = resolve_with(&scenario, &overrides)?;
            let dir = output.unwrap_or_else(|| default_output(&sc.name));
            let report = cmd_run(
                &sc,
                &RunOptions {
                    record_stride,
                    output: &dir,
                    format,
                    plots: !no_plots,
                    projections: project,
                },
            )?;
            print_run_summary(out, &report)?;
            writeln!(out, "artifacts in   {}", dir.display())?;
            Ok(report.exit_code())
        }
        Command::Validate {
            scenario,
            overrides,
            format,
        } => {
            let sc = resolve_with(&scenario, &overrides)?;
            let r = cmd_validate(&sc);
            match format {
                Format::Json => writeln!(out, "{}", serde_json::to_string_pretty(&r).map_err(json_err)?)?,
                Format::Csv => {
                    for c in &r.checks {
                        writeln!(
                            out,
                            "{:<5} {:<15} {}",
                            if c.passed { "PASS" } else { "FAIL" },
                            c.name,
                            c.detail
                        )?;
                    }
                }
            }
            Ok(if r.passed() { EXIT_OK } else { EXIT_VALIDATION })
        }
        Command::Sweep {
            scenario,
            param,
            values,
            overrides,
            output,
            format,
        } => {
            let sc = resolve_with(&scenario, &overrides)?;
            let dir = output.unwrap_or_else(|| default_output(&format!("{}-sweep", sc.name)));
            let rows = cmd_sweep(&sc, param, &values, &dir, format);
            let path = write_sweep(&dir.join("sweep"), &rows, format)?;
            for r in &rows {
                writeln!(
                    out,
                    "{:>10} {:<18} distance {:>10.5} margin {:>11.4e} P-increases {:>3}{}",
                    r.value,
                    r.outcome,
                    r.final_distance,
                    r.min_margin,
                    r.monotonicity_violations,
                    r.error.as_deref().map(|e| format!("  ({e})")).unwrap_or_default()
                )?;
            }
            writeln!(out, "summary in {}", path.display())?;
            Ok(EXIT_OK)
        }
        Command::Oracle { which } => run_oracle(which, out),
        Command::ListBuiltins => {
            writeln!(out, "scenarios:")?;
            for n in scenarios::BUILTIN_NAMES {
                writeln!(out, "  {n}")?;
            }
            writeln!(out, "systems:")?;
            for n in builtin::NAMES {
                let v = builtin::by_name(n)?;
                writeln!(out, "  {n:<20} n = {}, m = {}", v.state_dim(), v.input_dim())?;
            }
            Ok(EXIT_OK)
        }
    }
}

fn run_oracle(which: OracleCommand, out: &mut dyn std::io::Write) -> Result<i32> {
    let passed = match which {
        OracleCommand::EpochDisplacement {
            scenario,
            epsilons,
            x0,
            overrides,
            format,
        } => {
            let substeps = overrides.substeps.unwrap_or(400);
            let sc = resolve_with(&scenario, &overrides)?;
            let x0 = if x0.is_empty() { sc.x0.clone() } else { x0 };
            let r = epoch_displacement_oracle(&sc.closed_loop(), &x0, &epsilons, substeps)?;
            let (passed, diagnostics) = judge_epoch_displacement(&r);
            emit(
                out,
                &OracleVerdict {
                    oracle: "epoch-displacement".into(),
                    passed,
                    diagnostics,
                    report: r,
                },
                format,
            )?;
            passed
        }
        OracleCommand::BracketPrimitive {
            system,
            triple,
            k1,
            k2,
            variant,
            epsilons,
            x0,
            steps,
            format,
        } => {
            let vfs = builtin::by_name(&system)?;
            let x0 = if x0.is_empty() { vec![0.0; vfs.state_dim()] } else { x0 };
            if x0.len() != vfs.state_dim() {
                return Err(Error::DimensionMismatch {
                    context: "--x0".into(),
                    expected: vfs.state_dim(),
                    found: x0.len(),
                });
            }
            let r = primitive_displacement_oracle(
                &vfs,
                (triple.0 - 1, triple.1 - 1, triple.2 - 1),
                TripleFrequencies::new(k1, k2),
                variant.into(),
                &epsilons,
                &x0,
                steps,
            )?;
            let (passed, diagnostics) = judge_primitive(&r);
            emit(
                out,
                &OracleVerdict {
                    oracle: "bracket-primitive".into(),
                    passed,
                    diagnostics,
                    report: r,
                },
                format,
            )?;
            passed
        }
        OracleCommand::ExcursionBound {
            scenario,
            overrides,
            sample_seed,
            format,
        } => {
            let mut sc = resolve_with(&scenario, &overrides)?;
            sc.sim.record_stride = 1;
            let traj = sc.simulate()?;
            let r = excursion_bound_check(&traj, &sc.system, sample_seed)?;
            let (passed, mut diagnostics) = judge_excursion(&r);
            diagnostics.insert(0, format!("run outcome {}", traj.termination.label()));
            emit(
                out,
                &OracleVerdict {
                    oracle: "excursion-bound".into(),
                    passed,
                    diagnostics,
                    report: r,
                },
                format,
            )?;
            passed
        }
    };
    Ok(if passed { EXIT_OK } else { EXIT_VALIDATION })
}

/// Parses `args`, runs the command and returns the process exit code.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
        }
    };
    let stdout = std::io::stdout();
    let mut lock = stdout.lock();
    match execute(cli, &mut lock) {
        Ok(code) => code,
        Err(e) => {
            let _ = lock.flush();
            eprintln!("error: {e}");
            error_exit_code(&e)
        }
    }
}
