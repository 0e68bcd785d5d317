//! Integer frequency assignment and the oscillatory control law.
//!
//! Within an epoch `[t_j, t_j + ε)` with held state `x_j`, channel `k` is
//!
//! ```text
//! u_k = Σ_{S1} a_i δ_ki
//!     + ε^{-1/2} Σ_{S2} √|a| · 2√(πK) (δ_{k,j1} sign(a) cos ωτ + δ_{k,j2} sin ωτ)
//!     + ε^{-2/3} Σ_{S3} ∛a · 2(2π²K₃K₄)^{1/3} (δ_{k,l1} cos ω₁τ + δ_{k,l2} sin ω₂τ
//!                                              + δ_{k,l3} cos ω₁τ sin ω₂τ)
//! ```
//!
//! with `τ = t − t_j`, `ω = 2πK/ε`, `K₃ = K₁ + K₂`, `K₄ = K₂ − K₁`, and
//! `a = −γ F(x_j)⁻¹ ∇P(x_j)`.

use std::f64::consts::PI;
use std::fmt;

use nalgebra::DVector;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::potential::Potential;
use crate::system::{build_bracket_matrix, solve_coefficients, BracketBasis, BracketMatrix, VectorFieldSet};

/// Largest frequency magnitude tried by [`assign_frequencies`].
pub const ASSIGNMENT_BOUND: i64 = 997;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ControlParams {
    pub epsilon: f64,
    pub gamma: f64,
}

impl ControlParams {
    pub fn new(epsilon: f64, gamma: f64) -> Result<Self> {
        let p = ControlParams { epsilon, gamma };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.epsilon > 0.0 && self.epsilon.is_finite()) {
            return Err(Error::InvalidParameter(format!(
                "epsilon must be positive, got {}",
                self.epsilon
            )));
        }
        if !(self.gamma > 0.0 && self.gamma.is_finite()) {
            return Err(Error::InvalidParameter(format!(
                "gamma must be positive, got {}",
                self.gamma
            )));
        }
        Ok(())
    }
}

/// `(K₁, K₂)` for one second-order bracket.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct TripleFrequencies {
    pub k1: i64,
    pub k2: i64,
}

impl TripleFrequencies {
    pub fn new(k1: i64, k2: i64) -> Self {
        TripleFrequencies { k1, k2 }
    }

    pub fn k3(&self) -> i64 {
        self.k1 + self.k2
    }

    pub fn k4(&self) -> i64 {
        self.k2 - self.k1
    }

    /// `[K₁, K₂, K₃, K₄]`.
    pub fn all(&self) -> [i64; 4] {
        [self.k1, self.k2, self.k3(), self.k4()]
    }

    /// `2·(2π²K₃K₄)^{1/3}`, signed.
    pub fn amplitude(&self) -> f64 {
        2.0 * (2.0 * PI * PI * (self.k3() * self.k4()) as f64).cbrt()
    }

    /// `1 / (16π²(K₂² − K₁²))`, the coefficient of `ε³` in the open-loop displacement.
    pub fn displacement_coefficient(&self) -> f64 {
        1.0 / (16.0 * PI * PI * (self.k2 * self.k2 - self.k1 * self.k1) as f64)
    }
}

/// `2√(πK)`, the S₂ amplitude.
pub fn pair_amplitude(k: i64) -> f64 {
    2.0 * (PI * k.unsigned_abs() as f64).sqrt()
}

/// Frequencies aligned with a basis: `pairs[i]` belongs to `S2[i]`,
/// `triples[i]` to `S3[i]`.
#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct FrequencyAssignment {
    pub pairs: Vec<i64>,
    pub triples: Vec<TripleFrequencies>,
}

impl FrequencyAssignment {
    pub fn new(pairs: Vec<i64>, triples: Vec<TripleFrequencies>) -> Self {
        FrequencyAssignment { pairs, triples }
    }

    /// Largest `|K|` that appears in any channel, including `K₃`.
    pub fn max_frequency(&self) -> i64 {
        self.pairs
            .iter()
            .map(|k| k.abs())
            .chain(self.triples.iter().flat_map(|t| t.all().map(i64::abs)))
            .max()
            .unwrap_or(0)
    }

    /// Identity residuals `(amplitude³·coefficient − 1)` for every triple and
    /// `(2√(πK))²/(4πK) − 1` for every pair.
    pub fn calibration_residuals(&self) -> Vec<f64> {
        self.pairs
            .iter()
            .map(|&k| pair_amplitude(k).powi(2) / (4.0 * PI * k.abs() as f64) - 1.0)
            .chain(
                self.triples
                    .iter()
                    .map(|t| t.amplitude().powi(3) * t.displacement_coefficient() - 1.0),
            )
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Violation {
    Coverage {
        pairs: usize,
        triples: usize,
    },
    ZeroFrequency {
        element: String,
    },
    DuplicatePairMagnitude {
        first: usize,
        second: usize,
        magnitude: i64,
    },
    SideCondition {
        triple: usize,
        condition: &'static str,
    },
    Resonance {
        relation: String,
    },
    CrossSet {
        pair: usize,
        triple: usize,
        magnitude: i64,
    },
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Violation::Coverage { pairs, triples } => write!(
                f,
                "assignment covers {pairs} pairs and {triples} triples, basis differs"
            ),
            Violation::ZeroFrequency { element } => write!(f, "zero frequency in {element}"),
            Violation::DuplicatePairMagnitude {
                first,
                second,
                magnitude,
            } => write!(f, "S2 pairs #{} and #{} share |K| = {magnitude}", first + 1, second + 1),
            Violation::SideCondition { triple, condition } => {
                write!(f, "S3 triple #{} violates {condition}", triple + 1)
            }
            Violation::Resonance { relation } => write!(f, "resonance {relation}"),
            Violation::CrossSet {
                pair,
                triple,
                magnitude,
            } => write!(
                f,
                "S2 pair #{} and S3 triple #{} share |K| = {magnitude}",
                pair + 1,
                triple + 1
            ),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct NonresonanceReport {
    pub violations: Vec<Violation>,
}

impl NonresonanceReport {
    pub fn passed(&self) -> bool {
        self.violations.is_empty()
    }
}

/// Checks the non-resonance conditions:
///
/// * every frequency, `K₃` and `K₄` nonzero;
/// * `|K|` pairwise distinct across S₂ pairs;
/// * per triple `|K₁| ≠ |K₂|`, `|K₁| ≠ 2|K₂|`, `2|K₁| ≠ |K₂|`;
/// * for distinct labels `(s, triple)`, `c₁K_a + c₂K_b = c₃K_c` only when all
///   three labels belong to the same triple;
/// * no S₂ magnitude equals any `|K_s|` of a triple.
pub fn validate_nonresonance(fa: &FrequencyAssignment, basis: &BracketBasis) -> NonresonanceReport {
    if fa.pairs.len() != basis.s2().len() || fa.triples.len() != basis.s3().len() {
        return NonresonanceReport {
            violations: vec![Violation::Coverage {
                pairs: fa.pairs.len(),
                triples: fa.triples.len(),
            }],
        };
    }
    NonresonanceReport {
        violations: violations(&fa.pairs, &fa.triples, usize::MAX),
    }
}

fn violations(pairs: &[i64], triples: &[TripleFrequencies], limit: usize) -> Vec<Violation> {
    let mut out = Vec::new();
    macro_rules! push {
        ($v:expr) => {{
            out.push($v);
            if out.len() >= limit {
                return out;
            }
        }};
    }

    for (i, &k) in pairs.iter().enumerate() {
        if k == 0 {
            push!(Violation::ZeroFrequency {
                element: format!("S2 pair #{}", i + 1)
            });
        }
    }
    for (i, t) in triples.iter().enumerate() {
        if t.all().contains(&0) {
            push!(Violation::ZeroFrequency {
                element: format!("S3 triple #{} (K1..K4 = {:?})", i + 1, t.all())
            });
        }
    }
    for i in 0..pairs.len() {
        for j in i + 1..pairs.len() {
            if pairs[i].abs() == pairs[j].abs() {
                push!(Violation::DuplicatePairMagnitude {
                    first: i,
                    second: j,
                    magnitude: pairs[i].abs(),
                });
            }
        }
    }
    for (i, t) in triples.iter().enumerate() {
        let (a, b) = (t.k1.abs(), t.k2.abs());
        if a == b {
            push!(Violation::SideCondition {
                triple: i,
                condition: "|K1| != |K2|"
            });
        }
        if a == 2 * b {
            push!(Violation::SideCondition {
                triple: i,
                condition: "|K1| != 2|K2|"
            });
        }
        if 2 * a == b {
            push!(Violation::SideCondition {
                triple: i,
                condition: "2|K1| != |K2|"
            });
        }
    }

    // Labels (s, triple) with s in 1..=4.
    let labels: Vec<(usize, usize, i64)> = triples
        .iter()
        .enumerate()
        .flat_map(|(t, tf)| tf.all().into_iter().enumerate().map(move |(s, k)| (s, t, k)))
        .collect();
    for (ia, &(sa, ta, ka)) in labels.iter().enumerate() {
        for (ib, &(sb, tb, kb)) in labels.iter().enumerate() {
            if ib == ia {
                continue;
            }
            for (ic, &(sc, tc, kc)) in labels.iter().enumerate() {
                if ic == ia || ic == ib || (ta == tb && tb == tc) {
                    continue;
                }
                for c1 in [1i64, -1] {
                    for c2 in [1i64, -1] {
                        for c3 in [1i64, -1] {
                            if c1 * ka + c2 * kb == c3 * kc {
                                push!(Violation::Resonance {
                                    relation: format!(
                                        "{c1:+}·K{}[#{}] {c2:+}·K{}[#{}] = {c3:+}·K{}[#{}] ({ka}, {kb}, {kc})",
                                        sa + 1,
                                        ta + 1,
                                        sb + 1,
                                        tb + 1,
                                        sc + 1,
                                        tc + 1
                                    ),
                                });
                            }
                        }
                    }
                }
            }
        }
    }

    for (i, &k) in pairs.iter().enumerate() {
        for &(_, t, kt) in &labels {
            if k.abs() == kt.abs() {
                push!(Violation::CrossSet {
                    pair: i,
                    triple: t,
                    magnitude: k.abs(),
                });
                break;
            }
        }
    }
    out
}

/// Nodes the exhaustive search may visit before falling back to a greedy
/// element-by-element assignment.
pub const ASSIGNMENT_SEARCH_BUDGET: u64 = 2_000_000;

/// Deterministic smallest-magnitude search.
///
/// Unknowns are the S₂ frequencies followed by `(K₁, K₂)` of each triple.
/// Tuples of positive integers are visited by increasing maximum magnitude,
/// lexicographically within a level; the `seed`-th passing tuple (zero-based)
/// is returned. Large bases exhaust [`ASSIGNMENT_SEARCH_BUDGET`]; they are
/// then assigned greedily, each element taking the smallest value compatible
/// with the ones before it (the seed then skips candidates of the first element).
pub fn assign_frequencies(basis: &BracketBasis, seed: Option<u64>) -> Result<FrequencyAssignment> {
    let np = basis.s2().len();
    let unknowns = np + 2 * basis.s3().len();
    if unknowns == 0 {
        return Ok(FrequencyAssignment::default());
    }
    let mut state = Search {
        np,
        skip: seed.unwrap_or(0),
        budget: ASSIGNMENT_SEARCH_BUDGET,
    };
    let mut tuple = vec![0i64; unknowns];
    for level in 1..=ASSIGNMENT_BOUND {
        match state.run(&mut tuple, 0, level, false) {
            Step::Found(fa) => return Ok(fa),
            Step::Exhausted => break,
            Step::Continue => {}
        }
    }
    if state.budget > 0 {
        return Err(Error::AssignmentFailed {
            bound: ASSIGNMENT_BOUND,
        });
    }
    greedy_assignment(np, basis.s3().len(), seed.unwrap_or(0))
}

fn greedy_assignment(np: usize, nt: usize, seed: u64) -> Result<FrequencyAssignment> {
    let mut prefix: Vec<i64> = Vec::with_capacity(np + 2 * nt);
    let mut skip = seed;
    for e in 0..np + nt {
        let is_pair = e < np;
        let mut chosen = false;
        'levels: for level in 1..=ASSIGNMENT_BOUND {
            let candidates: Vec<Vec<i64>> = if is_pair {
                vec![vec![level]]
            } else {
                (1..=level)
                    .flat_map(|a| (1..=level).map(move |b| vec![a, b]))
                    .filter(|c| c.contains(&level))
                    .collect()
            };
            for c in candidates {
                let len = prefix.len();
                prefix.extend_from_slice(&c);
                if newest_element_ok(&prefix, np) {
                    if skip == 0 || e > 0 {
                        chosen = true;
                        break 'levels;
                    }
                    skip -= 1;
                }
                prefix.truncate(len);
            }
        }
        if !chosen {
            return Err(Error::AssignmentFailed {
                bound: ASSIGNMENT_BOUND,
            });
        }
    }
    let (pairs, triples) = split(&prefix, np);
    Ok(FrequencyAssignment { pairs, triples })
}

enum Step {
    Found(FrequencyAssignment),
    Continue,
    Exhausted,
}

struct Search {
    np: usize,
    skip: u64,
    budget: u64,
}

impl Search {
    fn run(&mut self, tuple: &mut Vec<i64>, pos: usize, level: i64, hit_level: bool) -> Step {
        if pos == tuple.len() {
            if !hit_level {
                return Step::Continue;
            }
            if self.skip == 0 {
                let (pairs, triples) = split(tuple, self.np);
                return Step::Found(FrequencyAssignment { pairs, triples });
            }
            self.skip -= 1;
            return Step::Continue;
        }
        for v in 1..=level {
            if self.budget == 0 {
                return Step::Exhausted;
            }
            self.budget -= 1;
            tuple[pos] = v;
            let filled = pos + 1;
            // Prune as soon as a complete element makes the prefix invalid.
            let element_done = filled <= self.np || (filled - self.np).is_multiple_of(2);
            if element_done && !newest_element_ok(&tuple[..filled], self.np) {
                continue;
            }
            match self.run(tuple, filled, level, hit_level || v == level) {
                Step::Continue => {}
                other => return other,
            }
        }
        tuple[pos] = 0;
        Step::Continue
    }
}

fn split(tuple: &[i64], np: usize) -> (Vec<i64>, Vec<TripleFrequencies>) {
    let pairs = tuple[..np.min(tuple.len())].to_vec();
    let triples = tuple
        .get(np..)
        .unwrap_or(&[])
        .chunks_exact(2)
        .map(|c| TripleFrequencies::new(c[0], c[1]))
        .collect();
    (pairs, triples)
}

/// Checks every condition that involves the last complete element of a
/// prefix whose earlier elements already passed.
fn newest_element_ok(prefix: &[i64], np: usize) -> bool {
    if prefix.len() <= np {
        let (last, rest) = prefix.split_last().expect("non-empty prefix");
        return *last != 0 && rest.iter().all(|k| k.abs() != last.abs());
    }
    let pairs = &prefix[..np];
    let flat = &prefix[np..];
    let nt = flat.len() / 2;
    let tf = |t: usize| TripleFrequencies::new(flat[2 * t], flat[2 * t + 1]);
    let new = tf(nt - 1);
    let (a, b) = (new.k1.abs(), new.k2.abs());
    if new.all().contains(&0) || a == b || a == 2 * b || 2 * a == b {
        return false;
    }
    if pairs.iter().any(|p| new.all().iter().any(|k| k.abs() == p.abs())) {
        return false;
    }
    let labels: Vec<(usize, i64)> = (0..nt)
        .flat_map(|t| tf(t).all().into_iter().map(move |k| (t, k)))
        .collect();
    let fresh = nt - 1;
    for (ia, &(ta, ka)) in labels.iter().enumerate() {
        for (ib, &(tb, kb)) in labels.iter().enumerate() {
            if ib == ia {
                continue;
            }
            for (ic, &(tc, kc)) in labels.iter().enumerate() {
                if ic == ia || ic == ib {
                    continue;
                }
                let touches = ta == fresh || tb == fresh || tc == fresh;
                if !touches || (ta == tb && tb == tc) {
                    continue;
                }
                if (ka + kb).abs() == kc.abs() || (ka - kb).abs() == kc.abs() {
                    return false;
                }
            }
        }
    }
    true
}

/// Per-basis-element contribution of `φ^{(k,ε)}(t)` to channel `k` (zero-based).
///
/// `signs[i]` is `sign(a)` of the i-th S₂ pair.
pub fn eval_phi(
    fa: &FrequencyAssignment,
    basis: &BracketBasis,
    k: usize,
    t: f64,
    epsilon: f64,
    signs: &[f64],
) -> Vec<f64> {
    let delta = |a: usize| if a == k { 1.0 } else { 0.0 };
    let mut out = Vec::with_capacity(basis.len());
    for &i in basis.s1() {
        out.push(delta(i));
    }
    for (idx, (&(j1, j2), &kk)) in basis.s2().iter().zip(&fa.pairs).enumerate() {
        let w = 2.0 * PI * kk as f64 / epsilon;
        let s = signs.get(idx).copied().unwrap_or(1.0);
        out.push(pair_amplitude(kk) * (delta(j1) * s * (w * t).cos() + delta(j2) * (w * t).sin()));
    }
    for (&(l1, l2, l3), tf) in basis.s3().iter().zip(&fa.triples) {
        let w1 = 2.0 * PI * tf.k1 as f64 / epsilon;
        let w2 = 2.0 * PI * tf.k2 as f64 / epsilon;
        let (c, s) = ((w1 * t).cos(), (w2 * t).sin());
        out.push(tf.amplitude() * (delta(l1) * c + delta(l2) * s + delta(l3) * c * s));
    }
    out
}

#[derive(Debug, Clone, Copy, PartialEq)]
struct PairTerm {
    j1: usize,
    j2: usize,
    omega: f64,
    cos_amp: f64,
    sin_amp: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
struct TripleTerm {
    l1: usize,
    l2: usize,
    l3: usize,
    w1: f64,
    w2: f64,
    amp: f64,
}

/// The control signal of one epoch, with all state-dependent factors folded in.
#[derive(Debug, Clone, PartialEq)]
pub struct EpochControl {
    m: usize,
    epsilon: f64,
    constant: Vec<f64>,
    pairs: Vec<PairTerm>,
    triples: Vec<TripleTerm>,
}

impl EpochControl {
    /// `a` must be in basis order.
    pub fn new(m: usize, basis: &BracketBasis, fa: &FrequencyAssignment, epsilon: f64, a: &[f64]) -> Self {
        let mut constant = vec![0.0; m];
        for (&i, &ai) in basis.s1().iter().zip(a) {
            constant[i] += ai;
        }
        let a2 = &a[basis.s1().len()..];
        let a3 = &a2[basis.s2().len()..];
        let pairs = basis
            .s2()
            .iter()
            .zip(&fa.pairs)
            .zip(a2)
            .map(|((&(j1, j2), &k), &aj)| {
                let amp = epsilon.powf(-0.5) * aj.abs().sqrt() * pair_amplitude(k);
                PairTerm {
                    j1,
                    j2,
                    omega: 2.0 * PI * k as f64 / epsilon,
                    cos_amp: amp * sign(aj),
                    sin_amp: amp,
                }
            })
            .collect();
        let triples = basis
            .s3()
            .iter()
            .zip(&fa.triples)
            .zip(a3)
            .map(|((&(l1, l2, l3), tf), &al)| TripleTerm {
                l1,
                l2,
                l3,
                w1: 2.0 * PI * tf.k1 as f64 / epsilon,
                w2: 2.0 * PI * tf.k2 as f64 / epsilon,
                amp: epsilon.powf(-2.0 / 3.0) * al.cbrt() * tf.amplitude(),
            })
            .collect();
        EpochControl {
            m,
            epsilon,
            constant,
            pairs,
            triples,
        }
    }

    /// An all-zero control.
    pub fn zero(m: usize, epsilon: f64) -> Self {
        EpochControl {
            m,
            epsilon,
            constant: vec![0.0; m],
            pairs: Vec::new(),
            triples: Vec::new(),
        }
    }

    pub fn input_dim(&self) -> usize {
        self.m
    }

    pub fn epsilon(&self) -> f64 {
        self.epsilon
    }

    /// `u(τ)` for epoch-local time `τ ∈ [0, ε]`.
    #[inline]
    pub fn eval_into(&self, tau: f64, u: &mut [f64]) {
        u.copy_from_slice(&self.constant);
        for p in &self.pairs {
            let (s, c) = (p.omega * tau).sin_cos();
            u[p.j1] += p.cos_amp * c;
            u[p.j2] += p.sin_amp * s;
        }
        for t in &self.triples {
            let c = (t.w1 * tau).cos();
            let s = (t.w2 * tau).sin();
            u[t.l1] += t.amp * c;
            u[t.l2] += t.amp * s;
            u[t.l3] += t.amp * c * s;
        }
    }

    pub fn eval(&self, tau: f64) -> Vec<f64> {
        let mut u = vec![0.0; self.m];
        self.eval_into(tau, &mut u);
        u
    }
}

fn sign(v: f64) -> f64 {
    if v > 0.0 {
        1.0
    } else if v < 0.0 {
        -1.0
    } else {
        0.0
    }
}

/// `a(x)`, `∇P(x)` and `F(x)` at a held state.
#[derive(Debug, Clone)]
pub struct Coefficients {
    pub a: DVector<f64>,
    pub grad: DVector<f64>,
    pub matrix: BracketMatrix,
}

pub fn coefficients(
    vfs: &VectorFieldSet,
    basis: &BracketBasis,
    potential: &dyn Potential,
    gamma: f64,
    x: &[f64],
) -> Result<Coefficients> {
    let grad = potential.gradient(x)?;
    let matrix = build_bracket_matrix(vfs, basis, x)?;
    let a = solve_coefficients(&matrix, &grad, gamma)?;
    Ok(Coefficients { a, grad, matrix })
}

/// Builds the control of the epoch whose held state is `x_hold`.
pub fn epoch_control(
    vfs: &VectorFieldSet,
    basis: &BracketBasis,
    potential: &dyn Potential,
    fa: &FrequencyAssignment,
    params: &ControlParams,
    x_hold: &[f64],
) -> Result<(EpochControl, Coefficients)> {
    let c = coefficients(vfs, basis, potential, params.gamma, x_hold)?;
    let ctrl = EpochControl::new(vfs.input_dim(), basis, fa, params.epsilon, c.a.as_slice());
    Ok((ctrl, c))
}

/// `u^ε(t, x_hold)`. Because every frequency is an integer multiple of
/// `2π/ε`, `t` may be absolute time; it is reduced modulo `ε`.
pub fn eval_control(
    vfs: &VectorFieldSet,
    basis: &BracketBasis,
    potential: &dyn Potential,
    fa: &FrequencyAssignment,
    params: &ControlParams,
    t: f64,
    x_hold: &[f64],
) -> Result<DVector<f64>> {
    let (ctrl, _) = epoch_control(vfs, basis, potential, fa, params, x_hold)?;
    Ok(DVector::from_vec(ctrl.eval(t.rem_euclid(params.epsilon))))
}

/// Upper bound on `Σ_k |u_k|` over an epoch:
/// `C₁‖∇P‖ + C₂ε^{-1/2}‖∇P‖^{1/2} + C₃ε^{-2/3}‖∇P‖^{1/3}` with
/// `α = ‖F⁻¹‖₂` and
/// `C₁ = γα√|S1|`, `C₂ = 4√(πγα)(Σ|K|^{2/3})^{3/4}`,
/// `C₃ = 6∛(2π²γα)(Σ|K₂²−K₁²|^{2/5})^{5/6}`.
pub fn control_sup_bound(
    basis: &BracketBasis,
    fa: &FrequencyAssignment,
    params: &ControlParams,
    alpha: f64,
    grad_norm: f64,
) -> f64 {
    let ga = params.gamma * alpha;
    let c1 = ga * (basis.s1().len() as f64).sqrt();
    let c2 = 4.0
        * (PI * ga).sqrt()
        * fa.pairs
            .iter()
            .map(|k| (k.abs() as f64).powf(2.0 / 3.0))
            .sum::<f64>()
            .powf(0.75);
    let c3 = 6.0
        * (2.0 * PI * PI * ga).cbrt()
        * fa.triples
            .iter()
            .map(|t| ((t.k2 * t.k2 - t.k1 * t.k1).abs() as f64).powf(0.4))
            .sum::<f64>()
            .powf(5.0 / 6.0);
    let e = params.epsilon;
    c1 * grad_norm + c2 * e.powf(-0.5) * grad_norm.sqrt() + c3 * e.powf(-2.0 / 3.0) * grad_norm.cbrt()
}

/// Which channel carries the product term of a second-order bracket primitive.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum PrimitiveVariant {
    /// `u_{l1} = cos ω₁t`, `u_{l2} = sin ω₂t`, `u_{l3} = cos ω₁t · sin ω₂t`.
    FullTriple,
    /// Product folded onto `l1`: `u_{l1} = cos ω₁t (1 + sin ω₂t)`, `u_{l2} = sin ω₂t`.
    RepeatedIndex,
}

/// Unit-amplitude open-loop primitive generating a single second-order bracket.
#[derive(Debug, Clone, PartialEq)]
pub struct BracketPrimitive {
    pub triple: (usize, usize, usize),
    pub frequencies: TripleFrequencies,
    pub epsilon: f64,
    pub variant: PrimitiveVariant,
    pub m: usize,
}

impl BracketPrimitive {
    /// Zero-based index of the outer field of the generated bracket.
    pub fn outer_index(&self) -> usize {
        match self.variant {
            PrimitiveVariant::FullTriple => self.triple.2,
            PrimitiveVariant::RepeatedIndex => self.triple.0,
        }
    }

    pub fn eval_into(&self, t: f64, u: &mut [f64]) {
        let (l1, l2, _) = self.triple;
        let c = (2.0 * PI * self.frequencies.k1 as f64 * t / self.epsilon).cos();
        let s = (2.0 * PI * self.frequencies.k2 as f64 * t / self.epsilon).sin();
        u.iter_mut().for_each(|v| *v = 0.0);
        u[l1] += c;
        u[l2] += s;
        u[self.outer_index()] += c * s;
    }

    pub fn eval(&self, t: f64) -> Vec<f64> {
        let mut u = vec![0.0; self.m];
        self.eval_into(t, &mut u);
        u
    }
}

pub fn bracket_primitive(
    triple: (usize, usize, usize),
    frequencies: TripleFrequencies,
    epsilon: f64,
    variant: PrimitiveVariant,
    m: usize,
) -> Result<BracketPrimitive> {
    let (l1, l2, l3) = triple;
    let needed = match variant {
        PrimitiveVariant::FullTriple => l1.max(l2).max(l3),
        PrimitiveVariant::RepeatedIndex => l1.max(l2),
    };
    if needed >= m {
        return Err(Error::InvalidParameter(format!(
            "triple index {} exceeds input dimension {m}",
            needed + 1
        )));
    }
    if !(epsilon > 0.0) {
        return Err(Error::InvalidParameter(format!(
            "epsilon must be positive, got {epsilon}"
        )));
    }
    if frequencies.k1 == 0 || frequencies.k2 == 0 || frequencies.k1.abs() == frequencies.k2.abs() {
        return Err(Error::InvalidFrequencies(format!(
            "primitive needs nonzero K1, K2 with |K1| != |K2|, got ({}, {})",
            frequencies.k1, frequencies.k2
        )));
    }
    Ok(BracketPrimitive {
        triple,
        frequencies,
        epsilon,
        variant,
        m,
    })
}
