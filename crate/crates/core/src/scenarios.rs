//! Built-in scenarios and the TOML scenario format.
//!
//! ```toml
//! name = "rigid-body"
//!
//! [system]
//! builtin = "rigid-body"           # or: dimension = 3, fields = [["1", "0", "-x2^2"], ...]
//!
//! [basis]                          # 1-based indices
//! s1 = [1, 2]
//! s2 = []
//! s3 = [[1, 2, 1]]
//!
//! [control]
//! epsilon = 0.5
//! gamma = 0.5
//! pairs = []                       # optional; searched for when both lists are absent
//! triples = [[1, 3]]
//! seed = 7                         # optional, only used by the search
//!
//! [scene]
//! target = [0.0, 0.0, 3.0]
//!
//! [scene.workspace]                # beta(x) = x'Qx + lin'x + const
//! quad = [[-1.0, 0.0, 0.0], [0.0, -1.0, 0.0], [0.0, 0.0, -1.0]]
//! lin = [0.0, 0.0, 0.0]
//! const = 12.25
//!
//! [[scene.obstacles]]              # or the ball shorthand: center = [...], radius_sq = ...
//! center = [0.0, 0.0, 1.75]
//! radius_sq = 0.5625
//!
//! [sim]
//! initial_state = [0.0, 0.0, -3.0]
//! t_max = 200.0
//! ```

use std::f64::consts::FRAC_PI_4;
use std::path::Path;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::control::{
    assign_frequencies, validate_nonresonance, ControlParams, FrequencyAssignment, TripleFrequencies,
};
use crate::error::{Error, Result};
use crate::potential::{validate_scene, NavigationFunction, Potential, QuadricFunction, Scene};
use crate::sim::{simulate, ClosedLoop, SimConfig, Trajectory};
use crate::system::{build_bracket_matrix, builtin, check_jacobians, BracketBasis, SystemSource, VectorFieldSet};

pub const BUILTIN_NAMES: [&str; 2] = ["rigid-body", "rolling-disc"];

/// Grid resolution used by [`Scenario::validate`] for the scene scan.
pub const SCENE_SCAN_RESOLUTION: usize = 41;

#[derive(Debug, Clone, PartialEq)]
pub struct Scenario {
    pub name: String,
    pub system: VectorFieldSet,
    pub basis: BracketBasis,
    pub potential: NavigationFunction,
    pub params: ControlParams,
    pub frequencies: FrequencyAssignment,
    /// Seed of the frequency search, kept only for serialization.
    pub seed: Option<u64>,
    pub sim: SimConfig,
    pub x0: Vec<f64>,
}

impl Scenario {
    pub fn scene(&self) -> &Scene {
        self.potential.scene()
    }

    pub fn closed_loop(&self) -> ClosedLoop<'_> {
        ClosedLoop {
            system: &self.system,
            basis: &self.basis,
            potential: &self.potential,
            frequencies: &self.frequencies,
            params: self.params,
        }
    }

    pub fn simulate(&self) -> Result<Trajectory> {
        simulate(&self.closed_loop(), &self.x0, &self.sim)
    }

    /// Dimensions, basis indices, frequencies and interiority of `x0` and `x*`.
    fn check_consistency(&self) -> Result<()> {
        let n = self.system.state_dim();
        self.basis.validate_for(n, self.system.input_dim())?;
        if self.scene().dim() != n {
            return Err(Error::DimensionMismatch {
                context: "scene dimension".into(),
                expected: n,
                found: self.scene().dim(),
            });
        }
        if self.x0.len() != n {
            return Err(Error::DimensionMismatch {
                context: "initial_state".into(),
                expected: n,
                found: self.x0.len(),
            });
        }
        if self.frequencies.pairs.len() != self.basis.s2().len()
            || self.frequencies.triples.len() != self.basis.s3().len()
        {
            return Err(Error::DimensionMismatch {
                context: "frequency lists (pairs + triples) vs |S2| + |S3|".into(),
                expected: self.basis.s2().len() + self.basis.s3().len(),
                found: self.frequencies.pairs.len() + self.frequencies.triples.len(),
            });
        }
        self.params.validate()?;
        self.sim.validate()?;
        let margin = self.scene().free_space_margin(&self.x0);
        if !(margin > 0.0) {
            return Err(Error::Infeasible(format!(
                "initial state {:?} is not inside the free space (margin {margin:.4})",
                self.x0
            )));
        }
        Ok(())
    }

    /// Runs every static check and reports each one.
    pub fn validate(&self) -> ValidationReport {
        let mut r = ValidationReport::default();
        let target: Vec<f64> = self.scene().target().iter().copied().collect();
        let n = self.system.state_dim();

        r.push(
            "dimensions",
            self.check_consistency()
                .map(|_| format!("n = {n}, m = {}, basis {}", self.system.input_dim(), self.basis)),
        );
        for (label, x) in [("rank at x0", &self.x0), ("rank at target", &target)] {
            let res = build_bracket_matrix(&self.system, &self.basis, x).and_then(|f| {
                if f.is_invertible() {
                    Ok(format!("condition estimate {:.3e}", f.condition_estimate))
                } else {
                    Err(Error::RankDeficient {
                        condition: f.condition_estimate,
                        threshold: crate::system::RANK_CONDITION_THRESHOLD,
                    })
                }
            });
            r.push(label, res);
        }
        let jac = check_jacobians(&self.system, &[self.x0.clone(), target.clone()]).and_then(|j| {
            if j.passed() {
                Ok(if j.analytic {
                    format!("max relative error {:.2e}", j.worst())
                } else {
                    "finite differences only".to_string()
                })
            } else {
                Err(Error::InvalidParameter(format!(
                    "analytic Jacobian disagrees with finite differences (relative error {:.2e})",
                    j.worst()
                )))
            }
        });
        r.push("jacobians", jac);

        let nr = validate_nonresonance(&self.frequencies, &self.basis);
        r.push(
            "non-resonance",
            if nr.passed() {
                Ok(format!(
                    "pairs {:?}, triples {:?}",
                    self.frequencies.pairs,
                    triple_list(&self.frequencies)
                ))
            } else {
                let v: Vec<String> = nr.violations.iter().map(|v| v.to_string()).collect();
                Err(Error::InvalidFrequencies(v.join("; ")))
            },
        );
        let worst = self.frequencies.calibration_residuals().into_iter().fold(0.0, f64::max);
        r.push(
            "calibration",
            if worst <= 1e-12 {
                Ok(format!("max residual {worst:.1e}"))
            } else {
                Err(Error::InvalidFrequencies(format!("calibration residual {worst:.3e}")))
            },
        );

        let scan = validate_scene(self.scene(), SCENE_SCAN_RESOLUTION);
        let scene_res = if scan.is_valid() {
            Ok(format!(
                "{} grid points, no overlap or containment flags",
                scan.points_checked
            ))
        } else {
            let mut parts = Vec::new();
            if !scan.overlaps.is_empty() {
                parts.push(format!("{} overlap flags", scan.overlaps.len()));
            }
            if !scan.containment.is_empty() {
                parts.push(format!(
                    "obstacles {:?} leave the workspace",
                    scan.uncontained_obstacles()
                ));
            }
            if !scan.workspace_bounded {
                parts.push("workspace is unbounded".to_string());
            }
            Err(Error::Infeasible(parts.join(", ")))
        };
        r.push("scene", scene_res);
        r
    }
}

fn triple_list(fa: &FrequencyAssignment) -> Vec<(i64, i64)> {
    fa.triples.iter().map(|t| (t.k1, t.k2)).collect()
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Check {
    pub name: String,
    pub passed: bool,
    pub detail: String,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize)]
pub struct ValidationReport {
    pub checks: Vec<Check>,
}

impl ValidationReport {
    fn push(&mut self, name: &str, res: Result<String>) {
        let (passed, detail) = match res {
            Ok(d) => (true, d),
            Err(e) => (false, e.to_string()),
        };
        self.checks.push(Check {
            name: name.to_string(),
            passed,
            detail,
        });
    }

    pub fn passed(&self) -> bool {
        self.checks.iter().all(|c| c.passed)
    }

    pub fn check(&self, name: &str) -> Option<&Check> {
        self.checks.iter().find(|c| c.name == name)
    }
}

pub fn rigid_body_scene() -> Scene {
    Scene::new(
        QuadricFunction::ball_workspace(&[0.0, 0.0, 0.0], 12.25),
        vec![
            QuadricFunction::ball_obstacle(&[0.0, 0.0, 1.75], 0.5625),
            QuadricFunction::ball_obstacle(&[0.5, 0.0, -1.5], 0.5625),
            QuadricFunction::ball_obstacle(&[-2.0, 0.0, 0.0], 0.36),
        ],
        vec![0.0, 0.0, 3.0],
    )
    .expect("rigid-body scene is feasible")
}

/// Embeds a quadric in `(x1, x2)` into ℝ⁴.
fn planar(q: [[f64; 2]; 2], lin: [f64; 2], c: f64) -> QuadricFunction {
    let mut quad = DMatrix::zeros(4, 4);
    for i in 0..2 {
        for j in 0..2 {
            quad[(i, j)] = q[i][j];
        }
    }
    QuadricFunction::new(quad, DVector::from_vec(vec![lin[0], lin[1], 0.0, 0.0]), c).expect("well-formed quadric")
}

pub fn rolling_disc_scene() -> Scene {
    // 1 − (x1−x2)²/8 − (x1+x2)²/32 − 0.1x3² − 0.1x4²
    let d = -1.0 / 8.0 - 1.0 / 32.0;
    let o = 1.0 / 8.0 - 1.0 / 32.0;
    let mut w = DMatrix::zeros(4, 4);
    w[(0, 0)] = d;
    w[(1, 1)] = d;
    w[(0, 1)] = o;
    w[(1, 0)] = o;
    w[(2, 2)] = -0.1;
    w[(3, 3)] = -0.1;
    let workspace = QuadricFunction::new(w, DVector::zeros(4), 1.0).expect("well-formed quadric");
    let third = 1.0 / 3.0;
    let obstacles = vec![
        // 2(x1−x2−1.5)² + (x1+x2+2.5)/3 − 1
        planar(
            [[2.0, -2.0], [-2.0, 2.0]],
            [-6.0 + third, 6.0 + third],
            4.5 + 2.5 * third - 1.0,
        ),
        // 2(x1−x2+1.5)² + (x1+x2+1.5)/3 − 1
        planar(
            [[2.0, -2.0], [-2.0, 2.0]],
            [6.0 + third, -6.0 + third],
            4.5 + 1.5 * third - 1.0,
        ),
        // 4(x1−1)² + (4/3)(x2−1.75) − 1
        planar([[4.0, 0.0], [0.0, 0.0]], [-8.0, 4.0 * third], 4.0 - 7.0 * third - 1.0),
    ];
    Scene::new(workspace, obstacles, vec![2.5, 1.5, 0.0, FRAC_PI_4]).expect("rolling-disc scene is feasible")
}

pub fn builtin_rigid_body() -> Scenario {
    Scenario {
        name: "rigid-body".into(),
        system: builtin::rigid_body(),
        basis: BracketBasis::new(vec![0, 1], vec![], vec![(0, 1, 0)]).expect("valid basis"),
        potential: NavigationFunction::new(rigid_body_scene()),
        params: ControlParams {
            epsilon: 0.5,
            gamma: 0.5,
        },
        frequencies: FrequencyAssignment::new(vec![], vec![TripleFrequencies::new(1, 3)]),
        seed: None,
        sim: SimConfig {
            t_max: 200.0,
            ..SimConfig::default()
        },
        x0: vec![0.0, 0.0, -3.0],
    }
}

pub fn builtin_rolling_disc() -> Scenario {
    Scenario {
        name: "rolling-disc".into(),
        system: builtin::rolling_disc(),
        basis: BracketBasis::new(vec![0, 1], vec![(0, 1)], vec![(0, 1, 1)]).expect("valid basis"),
        potential: NavigationFunction::new(rolling_disc_scene()),
        params: ControlParams {
            epsilon: 0.75,
            gamma: 0.5,
        },
        frequencies: FrequencyAssignment::new(vec![1], vec![TripleFrequencies::new(3, 7)]),
        seed: None,
        sim: SimConfig {
            t_max: 300.0,
            ..SimConfig::default()
        },
        x0: vec![-2.5, -2.5, 0.0, FRAC_PI_4],
    }
}

pub fn builtin_scenario(name: &str) -> Result<Scenario> {
    match name {
        "rigid-body" => Ok(builtin_rigid_body()),
        "rolling-disc" => Ok(builtin_rolling_disc()),
        other => Err(Error::UnknownBuiltin(other.to_string())),
    }
}

// ---- document schema ----

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct Doc {
    name: String,
    system: SystemDoc,
    basis: BasisDoc,
    control: ControlDoc,
    scene: SceneDoc,
    sim: SimDoc,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct SystemDoc {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    builtin: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    dimension: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    fields: Option<Vec<Vec<String>>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    fd_step: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct BasisDoc {
    #[serde(default)]
    s1: Vec<usize>,
    #[serde(default)]
    s2: Vec<[usize; 2]>,
    #[serde(default)]
    s3: Vec<[usize; 3]>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ControlDoc {
    epsilon: f64,
    gamma: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pairs: Option<Vec<i64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    triples: Option<Vec<[i64; 2]>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    seed: Option<u64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct QuadricDoc {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    quad: Option<Vec<Vec<f64>>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    lin: Option<Vec<f64>>,
    #[serde(default, rename = "const", skip_serializing_if = "Option::is_none")]
    constant: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    center: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    radius_sq: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct SceneDoc {
    target: Vec<f64>,
    workspace: QuadricDoc,
    #[serde(default)]
    obstacles: Vec<QuadricDoc>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct SimDoc {
    initial_state: Vec<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    t_max: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    substeps_per_unit_frequency: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    stop_distance: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    collision_margin: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    record_stride: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    flow_step: Option<f64>,
}

fn one_based(i: usize, what: &str) -> Result<usize> {
    i.checked_sub(1)
        .ok_or_else(|| Error::Schema(format!("{what}: indices are 1-based, got 0")))
}

impl QuadricDoc {
    fn build(&self, n: usize, what: &str, workspace: bool) -> Result<QuadricFunction> {
        match (self.center.as_ref(), self.radius_sq, self.quad.as_ref()) {
            (Some(center), Some(r2), None) if self.lin.is_none() && self.constant.is_none() => {
                if center.len() != n {
                    return Err(Error::DimensionMismatch {
                        context: format!("{what} center"),
                        expected: n,
                        found: center.len(),
                    });
                }
                Ok(if workspace {
                    QuadricFunction::ball_workspace(center, r2)
                } else {
                    QuadricFunction::ball_obstacle(center, r2)
                })
            }
            (None, None, Some(quad)) => {
                if quad.len() != n || quad.iter().any(|r| r.len() != n) {
                    return Err(Error::DimensionMismatch {
                        context: format!("{what} quad"),
                        expected: n,
                        found: quad.iter().map(|r| r.len()).find(|&l| l != n).unwrap_or(quad.len()),
                    });
                }
                let lin = self.lin.clone().unwrap_or_else(|| vec![0.0; n]);
                if lin.len() != n {
                    return Err(Error::DimensionMismatch {
                        context: format!("{what} lin"),
                        expected: n,
                        found: lin.len(),
                    });
                }
                let q = DMatrix::from_fn(n, n, |i, j| quad[i][j]);
                QuadricFunction::new(q, DVector::from_vec(lin), self.constant.unwrap_or(0.0))
            }
            _ => Err(Error::Schema(format!(
                "{what}: give either `quad` (+ optional `lin`, `const`) or `center` + `radius_sq`"
            ))),
        }
    }

    fn from_quadric(q: &QuadricFunction) -> Self {
        let n = q.dim();
        QuadricDoc {
            quad: Some((0..n).map(|i| (0..n).map(|j| q.quad()[(i, j)]).collect()).collect()),
            lin: Some(q.lin().iter().copied().collect()),
            constant: Some(q.constant()),
            center: None,
            radius_sq: None,
        }
    }
}

impl Doc {
    fn into_scenario(self) -> Result<Scenario> {
        let system = match (&self.system.builtin, self.system.dimension, &self.system.fields) {
            (Some(name), None, None) => builtin::by_name(name)?,
            (None, Some(n), Some(rows)) => VectorFieldSet::from_expressions(n, rows)?,
            _ => {
                return Err(Error::Schema(
                    "[system] needs either `builtin` or both `dimension` and `fields`".into(),
                ))
            }
        };
        let system = match self.system.fd_step {
            Some(h) => system.with_fd_step(h)?,
            None => system,
        };
        let n = system.state_dim();

        let s1 = self
            .basis
            .s1
            .iter()
            .map(|&i| one_based(i, "basis.s1"))
            .collect::<Result<Vec<_>>>()?;
        let s2 = self
            .basis
            .s2
            .iter()
            .map(|&[i, j]| Ok((one_based(i, "basis.s2")?, one_based(j, "basis.s2")?)))
            .collect::<Result<Vec<_>>>()?;
        let s3 = self
            .basis
            .s3
            .iter()
            .map(|&[i, j, k]| {
                Ok((
                    one_based(i, "basis.s3")?,
                    one_based(j, "basis.s3")?,
                    one_based(k, "basis.s3")?,
                ))
            })
            .collect::<Result<Vec<_>>>()?;
        let basis = BracketBasis::new(s1, s2, s3)?;
        basis.validate_for(n, system.input_dim())?;

        let params = ControlParams::new(self.control.epsilon, self.control.gamma)?;
        let frequencies = match (&self.control.pairs, &self.control.triples) {
            (None, None) => assign_frequencies(&basis, self.control.seed)?,
            (pairs, triples) => FrequencyAssignment::new(
                pairs.clone().unwrap_or_default(),
                triples
                    .clone()
                    .unwrap_or_default()
                    .into_iter()
                    .map(|[a, b]| TripleFrequencies::new(a, b))
                    .collect(),
            ),
        };

        if self.scene.target.len() != n {
            return Err(Error::DimensionMismatch {
                context: "scene.target".into(),
                expected: n,
                found: self.scene.target.len(),
            });
        }
        let workspace = self.scene.workspace.build(n, "scene.workspace", true)?;
        let obstacles = self
            .scene
            .obstacles
            .iter()
            .enumerate()
            .map(|(k, q)| q.build(n, &format!("scene.obstacles[{}]", k + 1), false))
            .collect::<Result<Vec<_>>>()?;
        let scene = Scene::new(workspace, obstacles, self.scene.target.clone())?;

        let d = SimConfig::default();
        let s = &self.sim;
        let sim = SimConfig {
            substeps_per_unit_frequency: s.substeps_per_unit_frequency.unwrap_or(d.substeps_per_unit_frequency),
            t_max: s.t_max.unwrap_or(d.t_max),
            stop_distance: s.stop_distance.unwrap_or(d.stop_distance),
            collision_margin: s.collision_margin.unwrap_or(d.collision_margin),
            record_stride: s.record_stride.unwrap_or(d.record_stride),
            flow_step: s.flow_step.unwrap_or(d.flow_step),
        };

        let scenario = Scenario {
            name: self.name,
            system,
            basis,
            potential: NavigationFunction::new(scene),
            params,
            frequencies,
            seed: self.control.seed,
            sim,
            x0: s.initial_state.clone(),
        };
        scenario.check_consistency()?;
        Ok(scenario)
    }

    fn from_scenario(sc: &Scenario) -> Result<Self> {
        let system = match sc.system.source() {
            SystemSource::Builtin(name) => SystemDoc {
                builtin: Some(name.clone()),
                dimension: None,
                fields: None,
                fd_step: None,
            },
            SystemSource::Expressions(rows) => SystemDoc {
                builtin: None,
                dimension: Some(sc.system.state_dim()),
                fields: Some(rows.clone()),
                fd_step: None,
            },
            SystemSource::Custom => {
                return Err(Error::Schema(
                    "closure-backed systems cannot be serialized; use a builtin or expressions".into(),
                ))
            }
        };
        let system = SystemDoc {
            fd_step: (sc.system.fd_step() != crate::system::DEFAULT_FD_STEP).then(|| sc.system.fd_step()),
            ..system
        };
        let scene = sc.scene();
        Ok(Doc {
            name: sc.name.clone(),
            system,
            basis: BasisDoc {
                s1: sc.basis.s1().iter().map(|i| i + 1).collect(),
                s2: sc.basis.s2().iter().map(|&(i, j)| [i + 1, j + 1]).collect(),
                s3: sc.basis.s3().iter().map(|&(i, j, k)| [i + 1, j + 1, k + 1]).collect(),
            },
            control: ControlDoc {
                epsilon: sc.params.epsilon,
                gamma: sc.params.gamma,
                pairs: Some(sc.frequencies.pairs.clone()),
                triples: Some(sc.frequencies.triples.iter().map(|t| [t.k1, t.k2]).collect()),
                seed: sc.seed,
            },
            scene: SceneDoc {
                target: scene.target().iter().copied().collect(),
                workspace: QuadricDoc::from_quadric(scene.workspace()),
                obstacles: scene.obstacles().iter().map(QuadricDoc::from_quadric).collect(),
            },
            sim: SimDoc {
                initial_state: sc.x0.clone(),
                t_max: Some(sc.sim.t_max),
                substeps_per_unit_frequency: Some(sc.sim.substeps_per_unit_frequency),
                stop_distance: Some(sc.sim.stop_distance),
                collision_margin: Some(sc.sim.collision_margin),
                record_stride: Some(sc.sim.record_stride),
                flow_step: Some(sc.sim.flow_step),
            },
        })
    }
}

/// Parses a scenario document. Schema problems, dimension mismatches and
/// infeasible start/target points produce distinct error variants.
pub fn load_scenario(text: &str) -> Result<Scenario> {
    let doc: Doc = toml::from_str(text).map_err(|e| Error::Schema(e.message().to_string()))?;
    doc.into_scenario()
}

pub fn load_scenario_file(path: &Path) -> Result<Scenario> {
    load_scenario(&std::fs::read_to_string(path)?)
}

pub fn save_scenario(sc: &Scenario) -> Result<String> {
    let doc = Doc::from_scenario(sc)?;
    toml::to_string(&doc).map_err(|e| Error::Schema(e.to_string()))
}

/// A builtin name, or otherwise a path to a scenario file.
pub fn resolve(spec: &str) -> Result<Scenario> {
    if BUILTIN_NAMES.contains(&spec) {
        return builtin_scenario(spec);
    }
    let path = Path::new(spec);
    if path.exists() {
        load_scenario_file(path)
    } else {
        Err(Error::UnknownBuiltin(format!(
            "{spec} (not a builtin scenario and no such file)"
        )))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::system::solve_coefficients;

    #[test]
    fn builtins_round_trip() {
        for sc in [builtin_rigid_body(), builtin_rolling_disc()] {
            let text = save_scenario(&sc).unwrap();
            let back = load_scenario(&text).unwrap();
            assert_eq!(back, sc);
            assert_eq!(save_scenario(&back).unwrap(), text);
        }
    }

    #[test]
    fn beta3_at_center() {
        let s = rigid_body_scene();
        assert!((s.obstacles()[2].eval(&[-2.0, 0.0, 0.0]) + 0.36).abs() < 1e-15);
    }

    #[test]
    fn rolling_disc_betas_match_written_out_formulas() {
        let s = rolling_disc_scene();
        let written = [
            |x: &[f64]| {
                1.0 - (x[0] - x[1]).powi(2) / 8.0 - (x[0] + x[1]).powi(2) / 32.0 - 0.1 * x[2] * x[2] - 0.1 * x[3] * x[3]
            },
            |x: &[f64]| 2.0 * (x[0] - x[1] - 1.5).powi(2) + (x[0] + x[1] + 2.5) / 3.0 - 1.0,
            |x: &[f64]| 2.0 * (x[0] - x[1] + 1.5).powi(2) + (x[0] + x[1] + 1.5) / 3.0 - 1.0,
            |x: &[f64]| 4.0 * (x[0] - 1.0).powi(2) + 4.0 / 3.0 * (x[1] - 1.75) - 1.0,
        ];
        let pts = [
            [-2.5, -2.5, 0.0, FRAC_PI_4],
            [2.5, 1.5, 0.0, FRAC_PI_4],
            [0.3, -1.2, 0.7, -0.4],
            [1.9, 2.2, -1.1, 2.0],
        ];
        for x in &pts {
            for (b, f) in s.betas().zip(written.iter()) {
                assert!((b.eval(x) - f(x)).abs() < 1e-12);
            }
        }
        assert!(s.workspace().eval(&pts[0]) > 0.0);
    }

    #[test]
    fn builtin_frequencies_and_ranks_validate() {
        for sc in [builtin_rigid_body(), builtin_rolling_disc()] {
            let r = sc.validate();
            for name in [
                "dimensions",
                "rank at x0",
                "rank at target",
                "jacobians",
                "non-resonance",
                "calibration",
            ] {
                let c = r.check(name).unwrap();
                assert!(c.passed, "{} {}: {}", sc.name, name, c.detail);
            }
        }
        assert!(builtin_rigid_body().validate().passed());
    }

    #[test]
    fn rolling_disc_obstacles_cross_workspace_boundary() {
        let r = builtin_rolling_disc().validate();
        let c = r.check("scene").unwrap();
        assert!(!c.passed);
        assert!(c.detail.contains("leave the workspace"));
    }

    #[test]
    fn tampered_frequencies_are_rejected() {
        let mut sc = builtin_rigid_body();
        sc.frequencies = FrequencyAssignment::new(vec![], vec![TripleFrequencies::new(2, 2)]);
        assert!(!sc.validate().check("non-resonance").unwrap().passed);
    }

    #[test]
    fn generic_coefficients_at_start() {
        let sc = builtin_rigid_body();
        let g = sc.potential.gradient(&sc.x0).unwrap();
        let f = build_bracket_matrix(&sc.system, &sc.basis, &sc.x0).unwrap();
        let a = solve_coefficients(&f, &g, 0.5).unwrap();
        // x1 = x2 = 0: F = [e1, e2, (0,0,−2)], so a = −γ(P1, P2, −P3/2).
        assert!((a[0] + 0.5 * g[0]).abs() < 1e-12);
        assert!((a[1] + 0.5 * g[1]).abs() < 1e-12);
        assert!((a[2] - 0.25 * g[2]).abs() < 1e-10);
    }

    fn doc_with(edit: impl FnOnce(&mut Doc)) -> String {
        let mut d = Doc::from_scenario(&builtin_rigid_body()).unwrap();
        edit(&mut d);
        toml::to_string(&d).unwrap()
    }

    #[test]
    fn distinct_diagnostics() {
        let e = load_scenario("name = 1").unwrap_err();
        assert!(matches!(e, Error::Schema(_)), "{e}");

        let e = load_scenario(&doc_with(|d| d.basis.s3.clear())).unwrap_err();
        assert!(matches!(e, Error::DimensionMismatch { .. }), "{e}");

        let e = load_scenario(&doc_with(|d| d.scene.target = vec![0.0, 0.0, 1.75])).unwrap_err();
        assert!(matches!(e, Error::Infeasible(_)), "{e}");

        let e = load_scenario(&doc_with(|d| d.sim.initial_state = vec![0.0, 0.0, 9.0])).unwrap_err();
        assert!(matches!(e, Error::Infeasible(_)), "{e}");

        let e = load_scenario(&doc_with(|d| d.basis.s1 = vec![0, 1])).unwrap_err();
        assert!(matches!(e, Error::Schema(_)), "{e}");

        let e = load_scenario(&doc_with(|d| d.system.builtin = Some("nope".into()))).unwrap_err();
        assert!(matches!(e, Error::UnknownBuiltin(_)), "{e}");
    }

    #[test]
    fn expression_system_and_ball_shorthand() {
        let text = r#"
name = "custom"
[system]
dimension = 3
fields = [["1", "0", "-x2^2"], ["0", "1", "x1^2"]]
[basis]
s1 = [1, 2]
s3 = [[1, 2, 1]]
[control]
epsilon = 0.5
gamma = 0.5
[scene]
target = [0.0, 0.0, 3.0]
[scene.workspace]
center = [0.0, 0.0, 0.0]
radius_sq = 12.25
[[scene.obstacles]]
center = [0.0, 0.0, 1.75]
radius_sq = 0.5625
[sim]
initial_state = [0.0, 0.0, -3.0]
"#;
        let sc = load_scenario(text).unwrap();
        assert_eq!(sc.frequencies.triples, vec![TripleFrequencies::new(1, 3)]);
        assert!(!sc.system.has_analytic_jacobians());
        let back = load_scenario(&save_scenario(&sc).unwrap()).unwrap();
        assert_eq!(back, sc);
        assert!(sc.validate().passed());
    }
}
