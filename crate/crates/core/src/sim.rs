//! Sampled-data closed-loop integration, the reference gradient flow and
//! the verification oracles built on top of them.

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::control::{
    bracket_primitive, epoch_control, validate_nonresonance, BracketPrimitive, ControlParams, EpochControl,
    FrequencyAssignment, PrimitiveVariant, TripleFrequencies,
};
use crate::error::{Error, Result};
use crate::potential::Potential;
use crate::system::{norm, second_bracket, spectral_norm, BracketBasis, VectorFieldSet};

pub const MIN_SUBSTEPS_PER_UNIT_FREQUENCY: usize = 50;
pub const DEFAULT_SUBSTEPS_PER_UNIT_FREQUENCY: usize = 100;
pub const MONOTONICITY_TOLERANCE: f64 = 1e-9;
pub const EXCURSION_SAMPLES: usize = 1000;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimConfig {
    /// RK4 steps per epoch are this value times the largest `|K|` (including `K₃`).
    pub substeps_per_unit_frequency: usize,
    pub t_max: f64,
    /// Convergence radius around the target, checked at epoch boundaries.
    pub stop_distance: f64,
    /// Smallest admissible free-space margin on the fine grid.
    pub collision_margin: f64,
    /// Keep every `record_stride`-th substep (epoch starts are always kept).
    pub record_stride: usize,
    /// Step of the reference gradient-flow integrator.
    pub flow_step: f64,
}

impl Default for SimConfig {
    fn default() -> Self {
        SimConfig {
            substeps_per_unit_frequency: DEFAULT_SUBSTEPS_PER_UNIT_FREQUENCY,
            t_max: 200.0,
            stop_distance: 0.1,
            collision_margin: 1e-6,
            record_stride: 1,
            flow_step: 0.01,
        }
    }
}

impl SimConfig {
    pub fn validate(&self) -> Result<()> {
        if self.substeps_per_unit_frequency < MIN_SUBSTEPS_PER_UNIT_FREQUENCY {
            return Err(Error::InvalidParameter(format!(
                "substeps_per_unit_frequency must be at least {MIN_SUBSTEPS_PER_UNIT_FREQUENCY}, got {}",
                self.substeps_per_unit_frequency
            )));
        }
        for (name, v) in [
            ("t_max", self.t_max),
            ("stop_distance", self.stop_distance),
            ("collision_margin", self.collision_margin),
            ("flow_step", self.flow_step),
        ] {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::InvalidParameter(format!("{name} must be positive, got {v}")));
            }
        }
        if self.record_stride == 0 {
            return Err(Error::InvalidParameter("record_stride must be positive".into()));
        }
        Ok(())
    }

    pub fn steps_per_epoch(&self, fa: &FrequencyAssignment) -> usize {
        self.substeps_per_unit_frequency * fa.max_frequency().max(1) as usize
    }
}

/// The closed-loop problem: system, basis, potential, frequencies and gains.
#[derive(Clone, Copy)]
pub struct ClosedLoop<'a> {
    pub system: &'a VectorFieldSet,
    pub basis: &'a BracketBasis,
    pub potential: &'a dyn Potential,
    pub frequencies: &'a FrequencyAssignment,
    pub params: ControlParams,
}

impl ClosedLoop<'_> {
    fn validate(&self) -> Result<()> {
        let n = self.system.state_dim();
        self.params.validate()?;
        self.basis.validate_for(n, self.system.input_dim())?;
        if self.potential.scene().dim() != n {
            return Err(Error::DimensionMismatch {
                context: "scene".into(),
                expected: n,
                found: self.potential.scene().dim(),
            });
        }
        let report = validate_nonresonance(self.frequencies, self.basis);
        if !report.passed() {
            let msgs: Vec<String> = report.violations.iter().map(|v| v.to_string()).collect();
            return Err(Error::InvalidFrequencies(msgs.join("; ")));
        }
        Ok(())
    }
}

/// An open-loop signal over epoch-local time.
pub trait ControlSignal {
    fn input_dim(&self) -> usize;
    fn eval_into(&self, tau: f64, u: &mut [f64]);
}

impl ControlSignal for EpochControl {
    fn input_dim(&self) -> usize {
        EpochControl::input_dim(self)
    }

    fn eval_into(&self, tau: f64, u: &mut [f64]) {
        EpochControl::eval_into(self, tau, u)
    }
}

impl ControlSignal for BracketPrimitive {
    fn input_dim(&self) -> usize {
        self.m
    }

    fn eval_into(&self, tau: f64, u: &mut [f64]) {
        BracketPrimitive::eval_into(self, tau, u)
    }
}

/// What [`integrate_epoch`] reports back per substep.
pub struct SubstepView<'a> {
    /// One-based substep index within the epoch.
    pub step: usize,
    pub tau: f64,
    pub x: &'a [f64],
    /// Control at `tau`.
    pub u: &'a [f64],
}

/// Integrates `ẋ = Σ u_k(τ) f_k(x)` over `τ ∈ [0, duration]` with `steps`
/// classical RK4 steps, in place. `observe` runs after every step and may
/// stop the integration by returning `false`.
///
/// Returns the sup of `Σ_k |u_k|` over all stage times that were visited.
pub fn integrate_epoch<C: ControlSignal + ?Sized>(
    vfs: &VectorFieldSet,
    control: &C,
    x: &mut [f64],
    duration: f64,
    steps: usize,
    mut observe: impl FnMut(SubstepView<'_>) -> bool,
) -> f64 {
    let n = x.len();
    let m = control.input_dim();
    let h = duration / steps as f64;
    let mut k1 = vec![0.0; n];
    let mut k2 = vec![0.0; n];
    let mut k3 = vec![0.0; n];
    let mut k4 = vec![0.0; n];
    let mut tmp = vec![0.0; n];
    let mut scratch = vec![0.0; n];
    let mut u0 = vec![0.0; m];
    let mut uh = vec![0.0; m];
    let mut u1 = vec![0.0; m];
    let l1 = |u: &[f64]| u.iter().map(|v| v.abs()).sum::<f64>();

    control.eval_into(0.0, &mut u0);
    let mut sup = l1(&u0);
    for i in 0..steps {
        let tau = i as f64 * h;
        let tau_next = (i + 1) as f64 * h;
        control.eval_into(tau + 0.5 * h, &mut uh);
        control.eval_into(tau_next, &mut u1);
        sup = sup.max(l1(&uh)).max(l1(&u1));

        vfs.velocity_into(x, &u0, &mut k1, &mut scratch);
        for r in 0..n {
            tmp[r] = x[r] + 0.5 * h * k1[r];
        }
        vfs.velocity_into(&tmp, &uh, &mut k2, &mut scratch);
        for r in 0..n {
            tmp[r] = x[r] + 0.5 * h * k2[r];
        }
        vfs.velocity_into(&tmp, &uh, &mut k3, &mut scratch);
        for r in 0..n {
            tmp[r] = x[r] + h * k3[r];
        }
        vfs.velocity_into(&tmp, &u1, &mut k4, &mut scratch);
        for r in 0..n {
            x[r] += h / 6.0 * (k1[r] + 2.0 * k2[r] + 2.0 * k3[r] + k4[r]);
        }
        std::mem::swap(&mut u0, &mut u1);
        let go_on = observe(SubstepView {
            step: i + 1,
            tau: tau_next,
            x,
            u: &u0,
        });
        if !go_on {
            break;
        }
    }
    sup
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Metrics {
    pub distance: f64,
    pub margin: f64,
    pub potential: f64,
    /// `ln(1 + Π β_j(x))`.
    pub log_barrier: f64,
}

fn metrics(potential: &dyn Potential, x: &[f64]) -> Metrics {
    let scene = potential.scene();
    let distance = x
        .iter()
        .zip(scene.target().iter())
        .map(|(a, b)| (a - b) * (a - b))
        .sum::<f64>()
        .sqrt();
    Metrics {
        distance,
        margin: scene.free_space_margin(x),
        potential: potential.value(x).unwrap_or(f64::NAN),
        log_barrier: scene.log_barrier(x),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum Termination {
    Converged,
    HorizonExhausted,
    Collision { time: f64, state: Vec<f64>, margin: f64 },
    RankFailure { time: f64, state: Vec<f64>, condition: f64 },
}

impl Termination {
    pub fn label(&self) -> &'static str {
        match self {
            Termination::Converged => "converged",
            Termination::HorizonExhausted => "horizon-exhausted",
            Termination::Collision { .. } => "collision",
            Termination::RankFailure { .. } => "rank-failure",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub index: usize,
    pub t_start: f64,
    /// Index of the epoch's first sample in the trajectory arrays.
    pub sample: usize,
    pub x_start: Vec<f64>,
    pub potential: f64,
    pub grad_norm: f64,
    /// `a(x_start)` in basis order.
    pub coefficients: Vec<f64>,
    pub condition: f64,
    /// Sup of `Σ|u_k|` over the fine grid of the epoch.
    pub control_sup: f64,
    /// Largest `‖x(t) − x_start‖` seen on the fine grid.
    pub max_excursion: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Trajectory {
    pub epsilon: f64,
    pub steps_per_epoch: usize,
    pub times: Vec<f64>,
    pub states: Vec<Vec<f64>>,
    pub controls: Vec<Vec<f64>>,
    pub metrics: Vec<Metrics>,
    pub epochs: Vec<EpochRecord>,
    pub termination: Termination,
    /// Minimum free-space margin over every fine-grid state.
    pub min_margin: f64,
    /// Minimum distance to the target over every fine-grid state, and when it occurred.
    pub min_distance: f64,
    pub min_distance_time: f64,
}

impl Trajectory {
    fn empty(epsilon: f64, steps_per_epoch: usize) -> Self {
        Trajectory {
            epsilon,
            steps_per_epoch,
            times: Vec::new(),
            states: Vec::new(),
            controls: Vec::new(),
            metrics: Vec::new(),
            epochs: Vec::new(),
            termination: Termination::HorizonExhausted,
            min_margin: f64::INFINITY,
            min_distance: f64::INFINITY,
            min_distance_time: 0.0,
        }
    }

    fn push(&mut self, t: f64, x: &[f64], u: &[f64], m: Metrics) {
        self.times.push(t);
        self.states.push(x.to_vec());
        self.controls.push(u.to_vec());
        self.metrics.push(m);
    }

    fn observe(&mut self, t: f64, m: &Metrics) {
        self.min_margin = self.min_margin.min(m.margin);
        if m.distance < self.min_distance {
            self.min_distance = m.distance;
            self.min_distance_time = t;
        }
    }

    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    pub fn final_state(&self) -> &[f64] {
        self.states.last().map(|v| v.as_slice()).unwrap_or(&[])
    }

    pub fn final_time(&self) -> f64 {
        self.times.last().copied().unwrap_or(0.0)
    }

    pub fn final_distance(&self) -> f64 {
        self.metrics.last().map_or(f64::NAN, |m| m.distance)
    }

    /// Indices of epoch-start samples.
    pub fn epoch_starts(&self) -> Vec<usize> {
        self.epochs.iter().map(|e| e.sample).collect()
    }

    /// `‖∇P‖` at the last sampled epoch start; the distance-to-critical-set surrogate.
    pub fn final_grad_norm(&self) -> f64 {
        self.epochs.last().map_or(f64::NAN, |e| e.grad_norm)
    }
}

fn check_x0(potential: &dyn Potential, x0: &[f64], n: usize) -> Result<()> {
    if x0.len() != n {
        return Err(Error::DimensionMismatch {
            context: "initial state".into(),
            expected: n,
            found: x0.len(),
        });
    }
    let margin = potential.scene().free_space_margin(x0);
    if !(margin > 0.0) {
        return Err(Error::Infeasible(format!(
            "initial state {x0:?} is not strictly inside the free space (margin {margin:.4})"
        )));
    }
    Ok(())
}

/// Runs the sampled-data closed loop until convergence, the horizon, a
/// collision or a rank failure. Collisions and rank failures end the run
/// normally and are reported in [`Trajectory::termination`].
pub fn simulate(problem: &ClosedLoop<'_>, x0: &[f64], cfg: &SimConfig) -> Result<Trajectory> {
    cfg.validate()?;
    problem.validate()?;
    let vfs = problem.system;
    let n = vfs.state_dim();
    let m = vfs.input_dim();
    check_x0(problem.potential, x0, n)?;

    let eps = problem.params.epsilon;
    let steps = cfg.steps_per_epoch(problem.frequencies);
    let mut traj = Trajectory::empty(eps, steps);
    let mut x = x0.to_vec();
    let zero_u = vec![0.0; m];

    for j in 0.. {
        let t_j = j as f64 * eps;
        let start_metrics = metrics(problem.potential, &x);
        traj.observe(t_j, &start_metrics);
        let at_boundary = |traj: &mut Trajectory, term: Termination| {
            traj.push(t_j, &x, &zero_u, start_metrics);
            traj.termination = term;
        };
        if start_metrics.distance <= cfg.stop_distance {
            at_boundary(&mut traj, Termination::Converged);
            break;
        }
        if t_j + 0.5 * eps / steps as f64 > cfg.t_max {
            at_boundary(&mut traj, Termination::HorizonExhausted);
            break;
        }
        let (ctrl, coeffs) = match epoch_control(
            vfs,
            problem.basis,
            problem.potential,
            problem.frequencies,
            &problem.params,
            &x,
        ) {
            Ok(v) => v,
            Err(Error::RankDeficient { condition, .. }) => {
                let state = x.clone();
                at_boundary(
                    &mut traj,
                    Termination::RankFailure {
                        time: t_j,
                        state,
                        condition,
                    },
                );
                break;
            }
            Err(Error::BoundarySingularity { .. }) => {
                let state = x.clone();
                let margin = start_metrics.margin;
                at_boundary(
                    &mut traj,
                    Termination::Collision {
                        time: t_j,
                        state,
                        margin,
                    },
                );
                break;
            }
            Err(e) => return Err(e),
        };

        let sample = traj.len();
        traj.push(t_j, &x, &ctrl.eval(0.0), start_metrics);
        let x_start = x.clone();
        let mut collision = None;
        let mut max_excursion = 0.0f64;
        let sup = integrate_epoch(vfs, &ctrl, &mut x, eps, steps, |v| {
            let t = t_j + v.tau;
            let mt = metrics(problem.potential, v.x);
            traj.observe(t, &mt);
            let exc =
                v.x.iter()
                    .zip(&x_start)
                    .map(|(a, b)| (a - b) * (a - b))
                    .sum::<f64>()
                    .sqrt();
            max_excursion = max_excursion.max(exc);
            let hit = !(mt.margin >= cfg.collision_margin);
            if v.step < steps && (v.step % cfg.record_stride == 0 || hit) {
                traj.push(t, v.x, v.u, mt);
            }
            if hit {
                collision = Some(Termination::Collision {
                    time: t,
                    state: v.x.to_vec(),
                    margin: mt.margin,
                });
                return false;
            }
            true
        });
        traj.epochs.push(EpochRecord {
            index: j,
            t_start: t_j,
            sample,
            x_start,
            potential: start_metrics.potential,
            grad_norm: coeffs.grad.norm(),
            coefficients: coeffs.a.as_slice().to_vec(),
            condition: coeffs.matrix.condition_estimate,
            control_sup: sup,
            max_excursion,
        });
        if let Some(term) = collision {
            traj.termination = term;
            break;
        }
    }
    Ok(traj)
}

/// [`simulate`], with collisions and rank failures turned into errors.
pub fn pi_epsilon_solve(problem: &ClosedLoop<'_>, x0: &[f64], cfg: &SimConfig) -> Result<Trajectory> {
    let traj = simulate(problem, x0, cfg)?;
    match &traj.termination {
        Termination::Collision { time, state, margin } => Err(Error::Collision {
            time: *time,
            state: state.clone(),
            margin: *margin,
        }),
        Termination::RankFailure { condition, .. } => Err(Error::RankDeficient {
            condition: *condition,
            threshold: crate::system::RANK_CONDITION_THRESHOLD,
        }),
        _ => Ok(traj),
    }
}

/// Re-integrates one epoch from its recorded start, returning the state after
/// every substep.
pub fn replay_epoch(problem: &ClosedLoop<'_>, epoch: &EpochRecord, steps: usize) -> Result<Vec<Vec<f64>>> {
    let (ctrl, _) = epoch_control(
        problem.system,
        problem.basis,
        problem.potential,
        problem.frequencies,
        &problem.params,
        &epoch.x_start,
    )?;
    let mut x = epoch.x_start.clone();
    let mut out = Vec::with_capacity(steps);
    integrate_epoch(problem.system, &ctrl, &mut x, problem.params.epsilon, steps, |v| {
        out.push(v.x.to_vec());
        true
    });
    Ok(out)
}

/// Integrates one epoch from `x0` and returns the endpoint.
pub fn one_epoch(problem: &ClosedLoop<'_>, x0: &[f64], steps: usize) -> Result<Vec<f64>> {
    let (ctrl, _) = epoch_control(
        problem.system,
        problem.basis,
        problem.potential,
        problem.frequencies,
        &problem.params,
        x0,
    )?;
    let mut x = x0.to_vec();
    integrate_epoch(problem.system, &ctrl, &mut x, problem.params.epsilon, steps, |_| true);
    Ok(x)
}

/// Reference trajectory of `ẋ = −∇P(x)` by fixed-step RK4 with `cfg.flow_step`.
pub fn gradient_flow_solve(potential: &dyn Potential, x0: &[f64], cfg: &SimConfig) -> Result<Trajectory> {
    cfg.validate()?;
    let n = potential.scene().dim();
    check_x0(potential, x0, n)?;
    let h = cfg.flow_step;
    let mut traj = Trajectory::empty(h, 1);
    let mut x = x0.to_vec();
    let mut tmp = vec![0.0; n];
    let stage = |y: &[f64]| potential.gradient(y).map(|g| -g);

    for i in 0usize.. {
        let t = i as f64 * h;
        let mt = metrics(potential, &x);
        traj.observe(t, &mt);
        let record = i % cfg.record_stride == 0;
        if mt.distance <= cfg.stop_distance {
            traj.push(t, &x, &[], mt);
            traj.termination = Termination::Converged;
            break;
        }
        if t + 0.5 * h > cfg.t_max {
            traj.push(t, &x, &[], mt);
            traj.termination = Termination::HorizonExhausted;
            break;
        }
        if mt.margin < cfg.collision_margin {
            traj.push(t, &x, &[], mt);
            traj.termination = Termination::Collision {
                time: t,
                state: x.clone(),
                margin: mt.margin,
            };
            break;
        }
        if record {
            traj.push(t, &x, &[], mt);
        }
        let step = (|| -> Result<DVector<f64>> {
            let k1 = stage(&x)?;
            for r in 0..n {
                tmp[r] = x[r] + 0.5 * h * k1[r];
            }
            let k2 = stage(&tmp)?;
            for r in 0..n {
                tmp[r] = x[r] + 0.5 * h * k2[r];
            }
            let k3 = stage(&tmp)?;
            for r in 0..n {
                tmp[r] = x[r] + h * k3[r];
            }
            let k4 = stage(&tmp)?;
            Ok((k1 + k2 * 2.0 + k3 * 2.0 + k4) * (h / 6.0))
        })();
        match step {
            Ok(dx) => {
                for r in 0..n {
                    x[r] += dx[r];
                }
            }
            Err(Error::BoundarySingularity { .. }) => {
                traj.termination = Termination::Collision {
                    time: t,
                    state: x.clone(),
                    margin: mt.margin,
                };
                break;
            }
            Err(e) => return Err(e),
        }
    }
    Ok(traj)
}

/// Least-squares slope and intercept of `ys` against `xs`, with residuals.
pub fn fit_line(xs: &[f64], ys: &[f64]) -> (f64, f64, Vec<f64>) {
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let sxy: f64 = xs.iter().zip(ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let sxx: f64 = xs.iter().map(|x| (x - mx) * (x - mx)).sum();
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let res = xs.iter().zip(ys).map(|(x, y)| y - (intercept + slope * x)).collect();
    (slope, intercept, res)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DisplacementRow {
    pub epsilon: f64,
    /// `‖x(ε) − x⁰ + εγ∇P(x⁰)‖`.
    pub remainder: f64,
    /// `‖(x(ε) − x⁰)/ε + γ∇P(x⁰)‖ / ‖γ∇P(x⁰)‖`.
    pub direction_error: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochDisplacementReport {
    pub rows: Vec<DisplacementRow>,
    /// Fitted slope of `ln r` against `ln ε`; `None` when the gradient vanishes.
    pub slope: Option<f64>,
    pub residuals: Vec<f64>,
    pub grad_norm: f64,
}

/// One-epoch remainders `r(ε)` for each `ε`, integrated with
/// `substeps_per_unit_frequency · max|K|` steps.
pub fn epoch_displacement_oracle(
    problem: &ClosedLoop<'_>,
    x0: &[f64],
    epsilons: &[f64],
    substeps_per_unit_frequency: usize,
) -> Result<EpochDisplacementReport> {
    problem.validate()?;
    check_x0(problem.potential, x0, problem.system.state_dim())?;
    let grad = problem.potential.gradient(x0)?;
    let gamma = problem.params.gamma;
    let steps = substeps_per_unit_frequency * problem.frequencies.max_frequency().max(1) as usize;
    let mut rows = Vec::with_capacity(epsilons.len());
    for &eps in epsilons {
        let p = ClosedLoop {
            params: ControlParams::new(eps, gamma)?,
            ..*problem
        };
        let xe = one_epoch(&p, x0, steps)?;
        let d = DVector::from_vec(xe) - DVector::from_column_slice(x0);
        let target = &grad * (-gamma);
        let remainder = (&d - &target * eps).norm();
        let direction_error = if grad.norm() > 0.0 {
            (&d / eps - &target).norm() / target.norm()
        } else {
            0.0
        };
        rows.push(DisplacementRow {
            epsilon: eps,
            remainder,
            direction_error,
        });
    }
    let usable = rows.iter().all(|r| r.remainder > 0.0) && rows.len() >= 2;
    let (slope, residuals) = if usable {
        let xs: Vec<f64> = rows.iter().map(|r| r.epsilon.ln()).collect();
        let ys: Vec<f64> = rows.iter().map(|r| r.remainder.ln()).collect();
        let (s, _, res) = fit_line(&xs, &ys);
        (Some(s), res)
    } else {
        (None, Vec::new())
    };
    Ok(EpochDisplacementReport {
        rows,
        slope,
        residuals,
        grad_norm: grad.norm(),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PrimitiveRow {
    pub epsilon: f64,
    pub displacement: Vec<f64>,
    pub predicted: Vec<f64>,
    /// `‖d − p‖ / ‖p‖`.
    pub relative_error: f64,
    /// Relative error of the component where `|p|` is largest.
    pub dominant_error: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PrimitiveReport {
    pub rows: Vec<PrimitiveRow>,
    /// Fitted slope of `ln ‖d‖` against `ln ε`.
    pub exponent: Option<f64>,
    /// `log₂(‖d(ε)‖/‖d(ε/2)‖)` for consecutive halvings.
    pub halving_exponents: Vec<f64>,
    /// `‖[[f_l1, f_l2], f_outer](x⁰)‖`.
    pub bracket_norm: f64,
}

impl PrimitiveReport {
    /// Whether the leading-order formula holds within `tol` at every `ε`.
    pub fn closed_form_holds(&self, tol: f64) -> bool {
        self.bracket_norm > 0.0 && self.rows.iter().all(|r| r.relative_error < tol)
    }
}

/// Open-loop displacement of the unit-amplitude primitive over one epoch,
/// against `ε³/(16π²(K₂²−K₁²))·[[f_l1, f_l2], f_outer](x⁰)`.
#[allow(clippy::too_many_arguments)]
pub fn primitive_displacement_oracle(
    vfs: &VectorFieldSet,
    triple: (usize, usize, usize),
    frequencies: TripleFrequencies,
    variant: PrimitiveVariant,
    epsilons: &[f64],
    x0: &[f64],
    steps_per_epoch: usize,
) -> Result<PrimitiveReport> {
    let m = vfs.input_dim();
    let probe = bracket_primitive(triple, frequencies, 1.0, variant, m)?;
    let outer = probe.outer_index();
    let bracket = second_bracket(vfs, triple.0, triple.1, outer, x0)?;
    let mut rows = Vec::with_capacity(epsilons.len());
    for &eps in epsilons {
        let prim = bracket_primitive(triple, frequencies, eps, variant, m)?;
        let mut x = x0.to_vec();
        integrate_epoch(vfs, &prim, &mut x, eps, steps_per_epoch, |_| true);
        let d = DVector::from_vec(x) - DVector::from_column_slice(x0);
        let p = &bracket * (eps.powi(3) * frequencies.displacement_coefficient());
        let relative_error = if p.norm() > 0.0 {
            (&d - &p).norm() / p.norm()
        } else {
            f64::INFINITY
        };
        let dominant = p.iamax();
        let dominant_error = if p[dominant] != 0.0 {
            ((d[dominant] - p[dominant]) / p[dominant]).abs()
        } else {
            f64::INFINITY
        };
        rows.push(PrimitiveRow {
            epsilon: eps,
            displacement: d.as_slice().to_vec(),
            predicted: p.as_slice().to_vec(),
            relative_error,
            dominant_error,
        });
    }
    let norms: Vec<f64> = rows.iter().map(|r| norm(&r.displacement)).collect();
    let exponent = if rows.len() >= 2 && norms.iter().all(|v| *v > 0.0) {
        let xs: Vec<f64> = rows.iter().map(|r| r.epsilon.ln()).collect();
        let ys: Vec<f64> = norms.iter().map(|v| v.ln()).collect();
        Some(fit_line(&xs, &ys).0)
    } else {
        None
    };
    let halving_exponents = rows
        .windows(2)
        .zip(norms.windows(2))
        .filter(|(r, _)| (r[0].epsilon / r[1].epsilon - 2.0).abs() < 1e-9)
        .map(|(_, nn)| (nn[0] / nn[1]).log2())
        .collect();
    Ok(PrimitiveReport {
        rows,
        exponent,
        halving_exponents,
        bracket_norm: bracket.norm(),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MonotonicityReport {
    /// `P` at every epoch boundary, including the final state.
    pub values: Vec<f64>,
    /// `(epoch index, increase)` for every increase above the tolerance.
    pub increases: Vec<(usize, f64)>,
    pub max_increase: f64,
    pub tolerance: f64,
}

impl MonotonicityReport {
    pub fn passed(&self) -> bool {
        self.increases.is_empty()
    }
}

pub fn monotonicity_check(traj: &Trajectory) -> MonotonicityReport {
    let mut values: Vec<f64> = traj.epochs.iter().map(|e| e.potential).collect();
    let last_is_boundary = traj.epochs.last().is_none_or(|e| {
        traj.times
            .last()
            .is_some_and(|t| (t - e.t_start - traj.epsilon).abs() < 1e-9 * traj.epsilon.max(1.0))
    });
    if last_is_boundary {
        if let Some(m) = traj.metrics.last() {
            values.push(m.potential);
        }
    }
    let mut increases = Vec::new();
    let mut max_increase = f64::NEG_INFINITY;
    for (i, w) in values.windows(2).enumerate() {
        let d = w[1] - w[0];
        max_increase = max_increase.max(d);
        if d > MONOTONICITY_TOLERANCE {
            increases.push((i, d));
        }
    }
    MonotonicityReport {
        values,
        increases,
        max_increase: if max_increase.is_finite() { max_increase } else { 0.0 },
        tolerance: MONOTONICITY_TOLERANCE,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExcursionViolation {
    pub epoch: usize,
    pub time: f64,
    pub excursion: f64,
    pub bound: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExcursionReport {
    /// Estimated Lipschitz constant: max Jacobian spectral norm over the samples.
    pub lipschitz: f64,
    /// Max `‖f_i‖` over the samples.
    pub field_bound: f64,
    pub epochs_checked: usize,
    pub samples_checked: usize,
    pub violations: Vec<ExcursionViolation>,
    /// Max of excursion / bound over samples with a positive bound.
    pub max_ratio: f64,
}

impl ExcursionReport {
    pub fn passed(&self) -> bool {
        self.violations.is_empty()
    }
}

/// `L` and `M` estimated from `samples` uniform points in the trajectory's
/// bounding box plus the trajectory states themselves.
pub fn estimate_lipschitz(vfs: &VectorFieldSet, traj: &Trajectory, samples: usize, seed: u64) -> Result<(f64, f64)> {
    let n = vfs.state_dim();
    let mut lo = vec![f64::INFINITY; n];
    let mut hi = vec![f64::NEG_INFINITY; n];
    for x in &traj.states {
        for k in 0..n {
            lo[k] = lo[k].min(x[k]);
            hi[k] = hi[k].max(x[k]);
        }
    }
    let mut pts: Vec<Vec<f64>> = Vec::with_capacity(samples + 2048);
    if traj.states.is_empty() {
        return Ok((0.0, 0.0));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for _ in 0..samples {
        pts.push(
            (0..n)
                .map(|k| {
                    if hi[k] > lo[k] {
                        rng.random_range(lo[k]..=hi[k])
                    } else {
                        lo[k]
                    }
                })
                .collect(),
        );
    }
    let stride = (traj.states.len() / 2048).max(1);
    pts.extend(traj.states.iter().step_by(stride).cloned());
    pts.extend(traj.epochs.iter().map(|e| e.x_start.clone()));

    let (mut l, mut mm) = (0.0f64, 0.0f64);
    for p in &pts {
        for i in 0..vfs.input_dim() {
            l = l.max(spectral_norm(&vfs.jacobian(i, p)?));
            mm = mm.max(vfs.eval(i, p)?.norm());
        }
    }
    Ok((l, mm))
}

/// `‖x(t) − x(t_j)‖ ≤ (M/L)(e^{L·U_j·(t−t_j)} − 1)` at every recorded sample
/// of every epoch, with `U_j` the epoch's control sup.
pub fn excursion_bound_check(traj: &Trajectory, vfs: &VectorFieldSet, seed: u64) -> Result<ExcursionReport> {
    let (l, mm) = estimate_lipschitz(vfs, traj, EXCURSION_SAMPLES, seed)?;
    let bound = |u: f64, tau: f64| {
        if l > 1e-14 {
            mm / l * (l * u * tau).exp_m1()
        } else {
            mm * u * tau
        }
    };
    let mut report = ExcursionReport {
        lipschitz: l,
        field_bound: mm,
        epochs_checked: 0,
        samples_checked: 0,
        violations: Vec::new(),
        max_ratio: 0.0,
    };
    for (k, e) in traj.epochs.iter().enumerate() {
        let end = traj.epochs.get(k + 1).map_or(traj.len(), |next| next.sample + 1);
        for s in e.sample..end.min(traj.len()) {
            let tau = traj.times[s] - e.t_start;
            let exc = norm(
                &traj.states[s]
                    .iter()
                    .zip(&e.x_start)
                    .map(|(a, b)| a - b)
                    .collect::<Vec<_>>(),
            );
            let b = bound(e.control_sup, tau);
            report.samples_checked += 1;
            if b > 0.0 {
                report.max_ratio = report.max_ratio.max(exc / b);
            }
            if exc > b * (1.0 + 1e-9) + 1e-12 {
                report.violations.push(ExcursionViolation {
                    epoch: e.index,
                    time: traj.times[s],
                    excursion: exc,
                    bound: b,
                });
            }
        }
        report.epochs_checked += 1;
    }
    Ok(report)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum CriticalKind {
    Minimum,
    Saddle,
    Maximum,
    Degenerate,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CriticalPointReport {
    pub state: Vec<f64>,
    pub grad_norm: f64,
    /// Ascending Hessian eigenvalues.
    pub eigenvalues: Vec<f64>,
    pub kind: CriticalKind,
    /// Unit eigenvector of the smallest eigenvalue.
    pub softest_direction: Vec<f64>,
}

/// Classifies `x` by the eigenvalues of the central-difference Hessian of `P`
/// (differences of the analytic gradient with step `h`).
pub fn classify_critical_point(potential: &dyn Potential, x: &[f64], h: f64) -> Result<CriticalPointReport> {
    let n = x.len();
    let g = potential.gradient(x)?;
    let mut hess = DMatrix::zeros(n, n);
    let mut y = x.to_vec();
    for c in 0..n {
        y[c] = x[c] + h;
        let gp = potential.gradient(&y)?;
        y[c] = x[c] - h;
        let gm = potential.gradient(&y)?;
        y[c] = x[c];
        hess.set_column(c, &((gp - gm) / (2.0 * h)));
    }
    let hess = (&hess + hess.transpose()) * 0.5;
    let eig = SymmetricEigen::new(hess);
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|a, b| eig.eigenvalues[*a].total_cmp(&eig.eigenvalues[*b]));
    let eigenvalues: Vec<f64> = order.iter().map(|&i| eig.eigenvalues[i]).collect();
    let scale = eigenvalues.iter().map(|v| v.abs()).fold(0.0, f64::max).max(1e-300);
    let tiny = 1e-6 * scale;
    let kind = if eigenvalues.iter().any(|v| v.abs() <= tiny) {
        CriticalKind::Degenerate
    } else if eigenvalues.iter().all(|v| *v > 0.0) {
        CriticalKind::Minimum
    } else if eigenvalues.iter().all(|v| *v < 0.0) {
        CriticalKind::Maximum
    } else {
        CriticalKind::Saddle
    };
    Ok(CriticalPointReport {
        state: x.to_vec(),
        grad_norm: g.norm(),
        eigenvalues,
        kind,
        softest_direction: eig.eigenvectors.column(order[0]).iter().copied().collect(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::control::FrequencyAssignment;
    use crate::potential::{NavigationFunction, QuadricFunction, Scene};
    use crate::system::builtin;

    fn ex1() -> (VectorFieldSet, BracketBasis, NavigationFunction, FrequencyAssignment) {
        let scene = Scene::new(
            QuadricFunction::ball_workspace(&[0.0, 0.0, 0.0], 12.25),
            vec![
                QuadricFunction::ball_obstacle(&[0.0, 0.0, 1.75], 0.5625),
                QuadricFunction::ball_obstacle(&[0.5, 0.0, -1.5], 0.5625),
                QuadricFunction::ball_obstacle(&[-2.0, 0.0, 0.0], 0.36),
            ],
            vec![0.0, 0.0, 3.0],
        )
        .unwrap();
        (
            builtin::rigid_body(),
            BracketBasis::new(vec![0, 1], vec![], vec![(0, 1, 0)]).unwrap(),
            NavigationFunction::new(scene),
            FrequencyAssignment::new(vec![], vec![TripleFrequencies::new(1, 3)]),
        )
    }

    fn problem<'a>(
        parts: &'a (VectorFieldSet, BracketBasis, NavigationFunction, FrequencyAssignment),
        eps: f64,
    ) -> ClosedLoop<'a> {
        ClosedLoop {
            system: &parts.0,
            basis: &parts.1,
            potential: &parts.2,
            frequencies: &parts.3,
            params: ControlParams::new(eps, 0.5).unwrap(),
        }
    }

    #[test]
    fn rk4_matches_exact_rotation() {
        // ẋ1 = u1, ẋ2 = u2, ẋ3 = x1²u2 − x2²u1 with u = (cos t, sin t) on
        // [0, 2π]: x1 = sin t, x2 = 1 − cos t, and the exact x3 gain is
        // ∫ sin²t·sin t − (1−cos t)²cos t dt = 0 − ∫(cos t − 2cos²t + cos³t) = 2π.
        struct Circle;
        impl ControlSignal for Circle {
            fn input_dim(&self) -> usize {
                2
            }
            fn eval_into(&self, tau: f64, u: &mut [f64]) {
                u[0] = tau.cos();
                u[1] = tau.sin();
            }
        }
        let vfs = builtin::rigid_body();
        let mut x = vec![0.0, 0.0, 0.0];
        let sup = integrate_epoch(&vfs, &Circle, &mut x, 2.0 * std::f64::consts::PI, 2000, |_| true);
        assert!(x[0].abs() < 1e-10 && x[1].abs() < 1e-10);
        assert!((x[2] - 2.0 * std::f64::consts::PI).abs() < 1e-9, "{}", x[2]);
        assert!((sup - 2f64.sqrt()).abs() < 1e-5);
    }

    #[test]
    fn stationary_at_target() {
        let parts = ex1();
        let p = problem(&parts, 0.5);
        let cfg = SimConfig {
            stop_distance: 1e-9,
            t_max: 2.0,
            ..SimConfig::default()
        };
        let x = [0.0, 0.0, 3.0];
        // distance 0 <= stop_distance ends immediately
        let t = simulate(&p, &x, &cfg).unwrap();
        assert_eq!(t.termination, Termination::Converged);
        assert_eq!(t.final_state(), &x);
    }

    #[test]
    fn short_run_is_collision_free_and_monotone() {
        let parts = ex1();
        let p = problem(&parts, 0.5);
        let cfg = SimConfig {
            t_max: 10.0,
            ..SimConfig::default()
        };
        let t = pi_epsilon_solve(&p, &[0.0, 0.0, -3.0], &cfg).unwrap();
        assert!(t.min_margin > 0.0);
        assert_eq!(t.epochs.len(), 20);
        assert!(monotonicity_check(&t).passed());
        assert!(t.times.windows(2).all(|w| w[1] > w[0]));
        for e in &t.epochs {
            assert!((t.times[e.sample] - e.index as f64 * 0.5).abs() < 1e-12);
        }
    }

    #[test]
    fn replay_is_bit_identical() {
        let parts = ex1();
        let p = problem(&parts, 0.5);
        let cfg = SimConfig {
            t_max: 3.0,
            ..SimConfig::default()
        };
        let t = simulate(&p, &[0.0, 0.0, -3.0], &cfg).unwrap();
        let e = &t.epochs[3];
        let states = replay_epoch(&p, e, t.steps_per_epoch).unwrap();
        for (k, s) in states.iter().enumerate().take(t.steps_per_epoch - 1) {
            assert_eq!(s, &t.states[e.sample + 1 + k]);
        }
        assert_eq!(states.last().unwrap(), &t.epochs[4].x_start);
    }

    #[test]
    fn record_stride_keeps_epoch_starts() {
        let parts = ex1();
        let p = problem(&parts, 0.5);
        let cfg = SimConfig {
            t_max: 2.0,
            record_stride: 37,
            ..SimConfig::default()
        };
        let t = simulate(&p, &[0.0, 0.0, -3.0], &cfg).unwrap();
        for e in &t.epochs {
            assert_eq!(t.states[e.sample], e.x_start);
        }
    }

    #[test]
    fn gradient_flow_decreases_potential() {
        let parts = ex1();
        let cfg = SimConfig {
            t_max: 5.0,
            ..SimConfig::default()
        };
        let t = gradient_flow_solve(&parts.2, &[0.0, 0.0, -3.0], &cfg).unwrap();
        assert!(t.metrics.windows(2).all(|w| w[1].potential < w[0].potential));
        let s = gradient_flow_solve(&parts.2, &[0.0, 0.0, 3.0], &cfg).unwrap();
        assert_eq!(s.termination, Termination::Converged);
    }

    #[test]
    fn zero_gradient_zero_remainder() {
        let parts = ex1();
        let p = problem(&parts, 0.5);
        let r = epoch_displacement_oracle(&p, &[0.0, 0.0, 3.0], &[0.1, 0.05], 100).unwrap();
        assert!(r.rows.iter().all(|row| row.remainder == 0.0));
        assert!(r.slope.is_none());
    }

    #[test]
    fn excursion_bound_trivial_for_zero_controls() {
        let parts = ex1();
        let p = problem(&parts, 0.5);
        let cfg = SimConfig {
            t_max: 1.0,
            stop_distance: 1e-12,
            ..SimConfig::default()
        };
        let t = simulate(&p, &[0.0, 0.0, 3.0], &cfg).unwrap();
        let r = excursion_bound_check(&t, &parts.0, 1).unwrap();
        assert!(r.passed());
        assert_eq!(r.max_ratio, 0.0);
    }

    #[test]
    fn large_epsilon_violations_are_reported() {
        let parts = ex1();
        let p = problem(&parts, 5.0);
        let cfg = SimConfig {
            t_max: 100.0,
            ..SimConfig::default()
        };
        let t = simulate(&p, &[0.0, 0.0, -3.0], &cfg).unwrap();
        let m = monotonicity_check(&t);
        // Either the run collides or the check sees the P sequence; both are reported, neither panics.
        assert!(matches!(t.termination, Termination::Collision { .. }) || m.values.len() >= 2);
    }

    #[test]
    fn classifier_finds_target_minimum() {
        let parts = ex1();
        let r = classify_critical_point(&parts.2, &[0.0, 0.0, 3.0], 1e-4).unwrap();
        assert_eq!(r.kind, CriticalKind::Minimum);
        assert_eq!(r.grad_norm, 0.0);
    }

    #[test]
    fn line_fit() {
        let (s, i, r) = fit_line(&[0.0, 1.0, 2.0], &[1.0, 3.0, 5.0]);
        assert!((s - 2.0).abs() < 1e-15 && (i - 1.0).abs() < 1e-15);
        assert!(r.iter().all(|v| v.abs() < 1e-15));
    }
}
