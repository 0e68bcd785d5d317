//! Driftless control-affine systems `ẋ = Σ u_i f_i(x)`, their first- and
//! second-order Lie brackets, and the bracket matrix `F(x)`.
//!
//! Bracket convention: `[f, g](x) = Dg(x)·f(x) − Df(x)·g(x)`. With this sign
//! a cosine/sine pair `u_i = cos ωt`, `u_j = sin ωt` moves the state along
//! `+[f_i, f_j]`.

use std::fmt;
use std::sync::Arc;

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::expr::Expr;

/// Condition estimate above which the bracket matrix is treated as singular.
pub const RANK_CONDITION_THRESHOLD: f64 = 1e8;

/// Relative step used when differentiating an inner bracket numerically.
pub const SECOND_BRACKET_FD_STEP: f64 = 1e-4;

pub const DEFAULT_FD_STEP: f64 = 1e-6;

/// Tolerance for [`check_jacobians`].
pub const JACOBIAN_CHECK_TOLERANCE: f64 = 1e-5;

pub type FieldFn = Arc<dyn Fn(&[f64], &mut [f64]) + Send + Sync>;
pub type JacobianFn = Arc<dyn Fn(&[f64], &mut DMatrix<f64>) + Send + Sync>;

/// Where a [`VectorFieldSet`] came from; used for serialization and equality.
#[derive(Debug, Clone, PartialEq)]
pub enum SystemSource {
    Builtin(String),
    Expressions(Vec<Vec<String>>),
    Custom,
}

/// The control vector fields `f_1 … f_m` of a driftless system on `ℝⁿ`.
///
/// Evaluation is reentrant; instances can be shared between threads.
#[derive(Clone)]
pub struct VectorFieldSet {
    n: usize,
    fields: Vec<FieldFn>,
    jacobians: Option<Vec<JacobianFn>>,
    fd_step: f64,
    source: SystemSource,
}

impl fmt::Debug for VectorFieldSet {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("VectorFieldSet")
            .field("n", &self.n)
            .field("m", &self.fields.len())
            .field("analytic_jacobians", &self.jacobians.is_some())
            .field("fd_step", &self.fd_step)
            .field("source", &self.source)
            .finish()
    }
}

/// Two sets compare equal when they come from the same builtin or the same
/// expressions. Closure-backed (`Custom`) sets never compare equal.
impl PartialEq for VectorFieldSet {
    fn eq(&self, other: &Self) -> bool {
        self.source != SystemSource::Custom
            && self.source == other.source
            && self.n == other.n
            && self.fields.len() == other.fields.len()
            && self.fd_step == other.fd_step
            && self.jacobians.is_some() == other.jacobians.is_some()
    }
}

impl VectorFieldSet {
    pub fn new(n: usize, fields: Vec<FieldFn>) -> Result<Self> {
        let m = fields.len();
        if m == 0 || n == 0 {
            return Err(Error::InvalidParameter(
                "a system needs at least one state and one input".into(),
            ));
        }
        if m >= n {
            return Err(Error::InvalidParameter(format!(
                "system must be underactuated (m = {m} < n = {n})"
            )));
        }
        Ok(VectorFieldSet {
            n,
            fields,
            jacobians: None,
            fd_step: DEFAULT_FD_STEP,
            source: SystemSource::Custom,
        })
    }

    pub fn with_jacobians(mut self, jacobians: Vec<JacobianFn>) -> Result<Self> {
        if jacobians.len() != self.fields.len() {
            return Err(Error::DimensionMismatch {
                context: "jacobian list".into(),
                expected: self.fields.len(),
                found: jacobians.len(),
            });
        }
        self.jacobians = Some(jacobians);
        Ok(self)
    }

    pub fn with_fd_step(mut self, fd_step: f64) -> Result<Self> {
        if !(fd_step > 0.0 && fd_step.is_finite()) {
            return Err(Error::InvalidParameter(format!(
                "fd_step must be positive, got {fd_step}"
            )));
        }
        self.fd_step = fd_step;
        Ok(self)
    }

    pub fn with_source(mut self, source: SystemSource) -> Self {
        self.source = source;
        self
    }

    /// Drops analytic Jacobians so every derivative is taken by central differences.
    pub fn without_jacobians(mut self) -> Self {
        self.jacobians = None;
        self
    }

    /// Builds a system from one row of component expressions per field.
    pub fn from_expressions(n: usize, rows: &[Vec<String>]) -> Result<Self> {
        let mut fields: Vec<FieldFn> = Vec::with_capacity(rows.len());
        for (i, row) in rows.iter().enumerate() {
            if row.len() != n {
                return Err(Error::DimensionMismatch {
                    context: format!("field f{} components", i + 1),
                    expected: n,
                    found: row.len(),
                });
            }
            let exprs = row.iter().map(|s| Expr::parse(s)).collect::<Result<Vec<_>>>()?;
            if let Some(bad) = exprs.iter().find(|e| e.arity() > n) {
                return Err(Error::Expression(format!(
                    "`{bad}` refers to a state variable beyond x{n}"
                )));
            }
            fields.push(Arc::new(move |x: &[f64], out: &mut [f64]| {
                for (o, e) in out.iter_mut().zip(&exprs) {
                    *o = e.eval(x);
                }
            }));
        }
        Ok(VectorFieldSet::new(n, fields)?.with_source(SystemSource::Expressions(rows.to_vec())))
    }

    pub fn state_dim(&self) -> usize {
        self.n
    }

    pub fn input_dim(&self) -> usize {
        self.fields.len()
    }

    pub fn fd_step(&self) -> f64 {
        self.fd_step
    }

    pub fn source(&self) -> &SystemSource {
        &self.source
    }

    pub fn has_analytic_jacobians(&self) -> bool {
        self.jacobians.is_some()
    }

    fn check_state(&self, x: &[f64]) -> Result<()> {
        if x.len() != self.n {
            return Err(Error::DimensionMismatch {
                context: "state vector".into(),
                expected: self.n,
                found: x.len(),
            });
        }
        Ok(())
    }

    fn check_index(&self, i: usize) -> Result<()> {
        if i >= self.fields.len() {
            return Err(Error::InvalidParameter(format!(
                "field index {} out of range 1..={}",
                i + 1,
                self.fields.len()
            )));
        }
        Ok(())
    }

    /// Unchecked evaluation of `f_i(x)` into `out`. Used by the integrator.
    #[inline]
    pub fn eval_into(&self, i: usize, x: &[f64], out: &mut [f64]) {
        (self.fields[i])(x, out)
    }

    /// `f_i(x)`, with dimension and finiteness checks.
    pub fn eval(&self, i: usize, x: &[f64]) -> Result<DVector<f64>> {
        self.check_state(x)?;
        self.check_index(i)?;
        let mut out = DVector::zeros(self.n);
        self.eval_into(i, x, out.as_mut_slice());
        finite_or(out, || format!("f{}", i + 1), x)
    }

    /// Writes `Σ_k u_k f_k(x)` into `out`; `scratch` must have length n.
    #[inline]
    pub fn velocity_into(&self, x: &[f64], u: &[f64], out: &mut [f64], scratch: &mut [f64]) {
        out.iter_mut().for_each(|v| *v = 0.0);
        for (k, &uk) in u.iter().enumerate() {
            if uk == 0.0 {
                continue;
            }
            self.eval_into(k, x, scratch);
            for (o, s) in out.iter_mut().zip(scratch.iter()) {
                *o += uk * s;
            }
        }
    }

    /// Jacobian of `f_i` at `x`: analytic when available, central differences otherwise.
    pub fn jacobian(&self, i: usize, x: &[f64]) -> Result<DMatrix<f64>> {
        self.check_state(x)?;
        self.check_index(i)?;
        let jac = match &self.jacobians {
            Some(js) => {
                let mut m = DMatrix::zeros(self.n, self.n);
                (js[i])(x, &mut m);
                m
            }
            None => self.fd_jacobian_unchecked(i, x),
        };
        if jac.iter().all(|v| v.is_finite()) {
            Ok(jac)
        } else {
            Err(Error::EvaluationDomain {
                what: format!("Jacobian of f{}", i + 1),
                state: x.to_vec(),
            })
        }
    }

    /// Central-difference Jacobian with step `fd_step·max(1, ‖x‖)`.
    pub fn fd_jacobian(&self, i: usize, x: &[f64]) -> Result<DMatrix<f64>> {
        self.check_state(x)?;
        self.check_index(i)?;
        Ok(self.fd_jacobian_unchecked(i, x))
    }

    fn fd_jacobian_unchecked(&self, i: usize, x: &[f64]) -> DMatrix<f64> {
        let h = self.fd_step * norm(x).max(1.0);
        central_jacobian(self.n, x, h, |y, out| self.eval_into(i, y, out))
    }

    /// Maximum Jacobian operator (spectral) norm over the fields at `x`.
    pub fn max_jacobian_norm(&self, x: &[f64]) -> Result<f64> {
        let mut best = 0.0f64;
        for i in 0..self.input_dim() {
            let j = self.jacobian(i, x)?;
            best = best.max(spectral_norm(&j));
        }
        Ok(best)
    }
}

fn finite_or(v: DVector<f64>, what: impl FnOnce() -> String, x: &[f64]) -> Result<DVector<f64>> {
    if v.iter().all(|c| c.is_finite()) {
        Ok(v)
    } else {
        Err(Error::EvaluationDomain {
            what: what(),
            state: x.to_vec(),
        })
    }
}

pub(crate) fn norm(x: &[f64]) -> f64 {
    x.iter().map(|v| v * v).sum::<f64>().sqrt()
}

pub(crate) fn spectral_norm(m: &DMatrix<f64>) -> f64 {
    if m.iter().all(|v| *v == 0.0) {
        return 0.0;
    }
    m.clone()
        .svd(false, false)
        .singular_values
        .iter()
        .cloned()
        .fold(0.0, f64::max)
}

/// Column-by-column central differences of `g: ℝⁿ → ℝⁿ`.
pub(crate) fn central_jacobian(n: usize, x: &[f64], h: f64, mut g: impl FnMut(&[f64], &mut [f64])) -> DMatrix<f64> {
    let mut jac = DMatrix::zeros(n, n);
    let mut xp = x.to_vec();
    let mut fp = vec![0.0; n];
    let mut fm = vec![0.0; n];
    for c in 0..n {
        xp[c] = x[c] + h;
        g(&xp, &mut fp);
        xp[c] = x[c] - h;
        g(&xp, &mut fm);
        xp[c] = x[c];
        for r in 0..n {
            jac[(r, c)] = (fp[r] - fm[r]) / (2.0 * h);
        }
    }
    jac
}

/// `[f_i, f_j](x) = J_j(x)·f_i(x) − J_i(x)·f_j(x)` (zero-based indices).
pub fn lie_bracket(vfs: &VectorFieldSet, i: usize, j: usize, x: &[f64]) -> Result<DVector<f64>> {
    let fi = vfs.eval(i, x)?;
    let fj = vfs.eval(j, x)?;
    let ji = vfs.jacobian(i, x)?;
    let jj = vfs.jacobian(j, x)?;
    let out = &jj * &fi - &ji * &fj;
    finite_or(out, || format!("[f{}, f{}]", i + 1, j + 1), x)
}

/// `[[f_l1, f_l2], f_l3](x)`.
///
/// The inner bracket is differentiated by central differences with step
/// `1e-4·max(1, ‖x‖)`, regardless of whether analytic Jacobians exist.
pub fn second_bracket(vfs: &VectorFieldSet, l1: usize, l2: usize, l3: usize, x: &[f64]) -> Result<DVector<f64>> {
    let inner = lie_bracket(vfs, l1, l2, x)?;
    let g = vfs.eval(l3, x)?;
    let jg = vfs.jacobian(l3, x)?;

    let n = vfs.state_dim();
    let h = SECOND_BRACKET_FD_STEP * norm(x).max(1.0);
    let mut failure = None;
    let jh = central_jacobian(n, x, h, |y, out| match lie_bracket(vfs, l1, l2, y) {
        Ok(v) => out.copy_from_slice(v.as_slice()),
        Err(e) => {
            failure.get_or_insert(e);
            out.iter_mut().for_each(|o| *o = f64::NAN);
        }
    });
    if let Some(e) = failure {
        return Err(e);
    }
    let out = &jg * &inner - &jh * &g;
    finite_or(out, || format!("[[f{}, f{}], f{}]", l1 + 1, l2 + 1, l3 + 1), x)
}

/// One column of the bracket matrix.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum BasisElement {
    Field(usize),
    Bracket(usize, usize),
    SecondBracket(usize, usize, usize),
}

impl fmt::Display for BasisElement {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match *self {
            BasisElement::Field(i) => write!(f, "f{}", i + 1),
            BasisElement::Bracket(i, j) => write!(f, "[f{},f{}]", i + 1, j + 1),
            BasisElement::SecondBracket(i, j, k) => {
                write!(f, "[[f{},f{}],f{}]", i + 1, j + 1, k + 1)
            }
        }
    }
}

impl BasisElement {
    pub fn eval(&self, vfs: &VectorFieldSet, x: &[f64]) -> Result<DVector<f64>> {
        match *self {
            BasisElement::Field(i) => vfs.eval(i, x),
            BasisElement::Bracket(i, j) => lie_bracket(vfs, i, j, x),
            BasisElement::SecondBracket(i, j, k) => second_bracket(vfs, i, j, k, x),
        }
    }
}

/// The index sets `S1`, `S2`, `S3` (zero-based) selecting which fields and
/// brackets make up the columns of `F(x)`.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct BracketBasis {
    s1: Vec<usize>,
    s2: Vec<(usize, usize)>,
    s3: Vec<(usize, usize, usize)>,
}

impl BracketBasis {
    pub fn new(s1: Vec<usize>, s2: Vec<(usize, usize)>, s3: Vec<(usize, usize, usize)>) -> Result<Self> {
        fn no_dups<T: PartialEq + fmt::Debug>(v: &[T], name: &str) -> Result<()> {
            for (k, a) in v.iter().enumerate() {
                if v[..k].contains(a) {
                    return Err(Error::InvalidBasis(format!("duplicate entry {a:?} in {name}")));
                }
            }
            Ok(())
        }
        no_dups(&s1, "S1")?;
        no_dups(&s2, "S2")?;
        no_dups(&s3, "S3")?;
        Ok(BracketBasis { s1, s2, s3 })
    }

    pub fn s1(&self) -> &[usize] {
        &self.s1
    }

    pub fn s2(&self) -> &[(usize, usize)] {
        &self.s2
    }

    pub fn s3(&self) -> &[(usize, usize, usize)] {
        &self.s3
    }

    /// `|S1| + |S2| + |S3|`.
    pub fn len(&self) -> usize {
        self.s1.len() + self.s2.len() + self.s3.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Columns in `F(x)` order: fields, then brackets, then second brackets.
    pub fn elements(&self) -> Vec<BasisElement> {
        self.s1
            .iter()
            .map(|&i| BasisElement::Field(i))
            .chain(self.s2.iter().map(|&(i, j)| BasisElement::Bracket(i, j)))
            .chain(self.s3.iter().map(|&(i, j, k)| BasisElement::SecondBracket(i, j, k)))
            .collect()
    }

    /// Checks cardinality against `n` and every index against `m`.
    pub fn validate_for(&self, n: usize, m: usize) -> Result<()> {
        if self.len() != n {
            return Err(Error::DimensionMismatch {
                context: "|S1|+|S2|+|S3|".into(),
                expected: n,
                found: self.len(),
            });
        }
        let all = self
            .s1
            .iter()
            .copied()
            .chain(self.s2.iter().flat_map(|&(i, j)| [i, j]))
            .chain(self.s3.iter().flat_map(|&(i, j, k)| [i, j, k]));
        for idx in all {
            if idx >= m {
                return Err(Error::InvalidBasis(format!(
                    "index {} exceeds input dimension {m}",
                    idx + 1
                )));
            }
        }
        Ok(())
    }
}

impl fmt::Display for BracketBasis {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let names: Vec<String> = self.elements().iter().map(|e| e.to_string()).collect();
        write!(f, "{{{}}}", names.join(", "))
    }
}

/// `F(x)` with its 1-norm condition number.
#[derive(Debug, Clone)]
pub struct BracketMatrix {
    pub columns: DMatrix<f64>,
    pub condition_estimate: f64,
}

impl BracketMatrix {
    pub fn from_columns(columns: DMatrix<f64>) -> Self {
        let condition_estimate = condition_1norm(&columns);
        BracketMatrix {
            columns,
            condition_estimate,
        }
    }

    pub fn is_invertible(&self) -> bool {
        self.condition_estimate.is_finite() && self.condition_estimate <= RANK_CONDITION_THRESHOLD
    }

    /// `‖F⁻¹‖₂`, the local value of the bound `α`.
    pub fn inverse_norm(&self) -> Option<f64> {
        self.columns.clone().lu().try_inverse().map(|inv| spectral_norm(&inv))
    }
}

fn norm1(m: &DMatrix<f64>) -> f64 {
    m.column_iter()
        .map(|c| c.iter().map(|v| v.abs()).sum::<f64>())
        .fold(0.0, f64::max)
}

fn condition_1norm(m: &DMatrix<f64>) -> f64 {
    match m.clone().lu().try_inverse() {
        Some(inv) => {
            let c = norm1(m) * norm1(&inv);
            if c.is_finite() {
                c
            } else {
                f64::INFINITY
            }
        }
        None => f64::INFINITY,
    }
}

/// Assembles `F(x)` column by column in basis order.
pub fn build_bracket_matrix(vfs: &VectorFieldSet, basis: &BracketBasis, x: &[f64]) -> Result<BracketMatrix> {
    let n = vfs.state_dim();
    basis.validate_for(n, vfs.input_dim())?;
    let mut cols = DMatrix::zeros(n, n);
    for (c, el) in basis.elements().iter().enumerate() {
        cols.set_column(c, &el.eval(vfs, x)?);
    }
    Ok(BracketMatrix::from_columns(cols))
}

/// Solves `F·a = −γ·∇P` by LU with partial pivoting.
pub fn solve_coefficients(f: &BracketMatrix, grad: &DVector<f64>, gamma: f64) -> Result<DVector<f64>> {
    let n = f.columns.nrows();
    if grad.len() != n {
        return Err(Error::DimensionMismatch {
            context: "gradient".into(),
            expected: n,
            found: grad.len(),
        });
    }
    if !(gamma > 0.0) {
        return Err(Error::InvalidParameter(format!("gamma must be positive, got {gamma}")));
    }
    if !f.is_invertible() {
        return Err(Error::RankDeficient {
            condition: f.condition_estimate,
            threshold: RANK_CONDITION_THRESHOLD,
        });
    }
    let rhs = grad * (-gamma);
    f.columns.clone().lu().solve(&rhs).ok_or(Error::RankDeficient {
        condition: f64::INFINITY,
        threshold: RANK_CONDITION_THRESHOLD,
    })
}

/// Analytic-vs-finite-difference Jacobian comparison.
#[derive(Debug, Clone, PartialEq)]
pub struct JacobianReport {
    /// Per field: max over sample points of `‖J_a − J_fd‖_F / max(‖J_a‖_F, 1)`.
    pub max_rel_error: Vec<f64>,
    pub threshold: f64,
    pub analytic: bool,
}

impl JacobianReport {
    pub fn passed(&self) -> bool {
        self.max_rel_error.iter().all(|e| *e < self.threshold)
    }

    pub fn worst(&self) -> f64 {
        self.max_rel_error.iter().cloned().fold(0.0, f64::max)
    }
}

pub fn check_jacobians(vfs: &VectorFieldSet, points: &[Vec<f64>]) -> Result<JacobianReport> {
    let m = vfs.input_dim();
    let mut errs = vec![0.0f64; m];
    if vfs.has_analytic_jacobians() {
        for x in points {
            for (i, err) in errs.iter_mut().enumerate() {
                let ja = vfs.jacobian(i, x)?;
                let jf = vfs.fd_jacobian(i, x)?;
                let e = (&ja - &jf).norm() / ja.norm().max(1.0);
                *err = err.max(e);
            }
        }
    }
    Ok(JacobianReport {
        max_rel_error: errs,
        threshold: JACOBIAN_CHECK_TOLERANCE,
        analytic: vfs.has_analytic_jacobians(),
    })
}

/// Built-in systems with analytic Jacobians.
pub mod builtin {
    use super::*;

    fn field(f: impl Fn(&[f64], &mut [f64]) + Send + Sync + 'static) -> FieldFn {
        Arc::new(f)
    }

    fn jac(f: impl Fn(&[f64], &mut DMatrix<f64>) + Send + Sync + 'static) -> JacobianFn {
        Arc::new(move |x, m| {
            m.fill(0.0);
            f(x, m)
        })
    }

    pub const NAMES: [&str; 4] = ["rigid-body", "rolling-disc", "brockett-integrator", "three-input-chain"];

    pub fn by_name(name: &str) -> Result<VectorFieldSet> {
        match name {
            "rigid-body" => Ok(rigid_body()),
            "rolling-disc" => Ok(rolling_disc()),
            "brockett-integrator" => Ok(brockett_integrator()),
            "three-input-chain" => Ok(three_input_chain()),
            other => Err(Error::UnknownBuiltin(other.to_string())),
        }
    }

    fn finish(n: usize, fields: Vec<FieldFn>, jacs: Vec<JacobianFn>, name: &str) -> VectorFieldSet {
        VectorFieldSet::new(n, fields)
            .and_then(|v| v.with_jacobians(jacs))
            .expect("builtin system is well-formed")
            .with_source(SystemSource::Builtin(name.to_string()))
    }

    /// Rotating rigid body with oscillating masses:
    /// `ẋ1 = u1, ẋ2 = u2, ẋ3 = x1²u2 − x2²u1`.
    pub fn rigid_body() -> VectorFieldSet {
        finish(
            3,
            vec![
                field(|x, o| {
                    o[0] = 1.0;
                    o[1] = 0.0;
                    o[2] = -x[1] * x[1];
                }),
                field(|x, o| {
                    o[0] = 0.0;
                    o[1] = 1.0;
                    o[2] = x[0] * x[0];
                }),
            ],
            vec![jac(|x, m| m[(2, 1)] = -2.0 * x[1]), jac(|x, m| m[(2, 0)] = 2.0 * x[0])],
            "rigid-body",
        )
    }

    /// Unit disc rolling on a plane:
    /// `ẋ1 = u1 cos x3, ẋ2 = u1 sin x3, ẋ3 = u2, ẋ4 = u1`.
    pub fn rolling_disc() -> VectorFieldSet {
        finish(
            4,
            vec![
                field(|x, o| {
                    o[0] = x[2].cos();
                    o[1] = x[2].sin();
                    o[2] = 0.0;
                    o[3] = 1.0;
                }),
                field(|_, o| {
                    o[0] = 0.0;
                    o[1] = 0.0;
                    o[2] = 1.0;
                    o[3] = 0.0;
                }),
            ],
            vec![
                jac(|x, m| {
                    m[(0, 2)] = -x[2].sin();
                    m[(1, 2)] = x[2].cos();
                }),
                jac(|_, _| {}),
            ],
            "rolling-disc",
        )
    }

    /// `ẋ1 = u1, ẋ2 = u2, ẋ3 = x1u2 − x2u1`. All second-order brackets vanish.
    pub fn brockett_integrator() -> VectorFieldSet {
        finish(
            3,
            vec![
                field(|x, o| {
                    o[0] = 1.0;
                    o[1] = 0.0;
                    o[2] = -x[1];
                }),
                field(|x, o| {
                    o[0] = 0.0;
                    o[1] = 1.0;
                    o[2] = x[0];
                }),
            ],
            vec![jac(|_, m| m[(2, 1)] = -1.0), jac(|_, m| m[(2, 0)] = 1.0)],
            "brockett-integrator",
        )
    }

    /// Three-input test system on `ℝ⁴` with constant second-order brackets
    /// `[[f1,f2],f3] = −e4` and `[[f1,f2],f1] = −2e4`:
    /// `f1 = (1,0,0,x2²+x3)`, `f2 = (0,1,0,x1x3+x1²)`, `f3 = (0,0,1,x1²+x1x2)`.
    pub fn three_input_chain() -> VectorFieldSet {
        finish(
            4,
            vec![
                field(|x, o| {
                    o[0] = 1.0;
                    o[1] = 0.0;
                    o[2] = 0.0;
                    o[3] = x[1] * x[1] + x[2];
                }),
                field(|x, o| {
                    o[0] = 0.0;
                    o[1] = 1.0;
                    o[2] = 0.0;
                    o[3] = x[0] * x[2] + x[0] * x[0];
                }),
                field(|x, o| {
                    o[0] = 0.0;
                    o[1] = 0.0;
                    o[2] = 1.0;
                    o[3] = x[0] * x[0] + x[0] * x[1];
                }),
            ],
            vec![
                jac(|x, m| {
                    m[(3, 1)] = 2.0 * x[1];
                    m[(3, 2)] = 1.0;
                }),
                jac(|x, m| {
                    m[(3, 0)] = x[2] + 2.0 * x[0];
                    m[(3, 2)] = x[0];
                }),
                jac(|x, m| {
                    m[(3, 0)] = 2.0 * x[0] + x[1];
                    m[(3, 1)] = x[0];
                }),
            ],
            "three-input-chain",
        )
    }
}
