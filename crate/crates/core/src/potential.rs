//! Workspace, obstacles and the navigation function
//! `P(x) = ‖x − x*‖² / (‖x − x*‖⁴ + Π β_j(x))^{1/2}`.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

/// Obstacle products below this value are treated as the boundary when a
/// gradient is requested.
pub const BOUNDARY_TOLERANCE: f64 = 1e-12;

/// `β(x) = xᵀQx + lᵀx + c` with `Q` symmetric.
#[derive(Debug, Clone, PartialEq)]
pub struct QuadricFunction {
    quad: DMatrix<f64>,
    lin: DVector<f64>,
    constant: f64,
}

impl QuadricFunction {
    /// `quad` is symmetrized as `(Q + Qᵀ)/2`.
    pub fn new(quad: DMatrix<f64>, lin: DVector<f64>, constant: f64) -> Result<Self> {
        let n = quad.nrows();
        if quad.ncols() != n {
            return Err(Error::DimensionMismatch {
                context: "quadric matrix columns".into(),
                expected: n,
                found: quad.ncols(),
            });
        }
        if lin.len() != n {
            return Err(Error::DimensionMismatch {
                context: "quadric linear term".into(),
                expected: n,
                found: lin.len(),
            });
        }
        if !(quad.iter().chain(lin.iter()).all(|v| v.is_finite()) && constant.is_finite()) {
            return Err(Error::InvalidParameter("quadric coefficients must be finite".into()));
        }
        let quad = (&quad + quad.transpose()) * 0.5;
        Ok(QuadricFunction { quad, lin, constant })
    }

    /// `s·(‖x − center‖² − r²)`; `s = 1` gives a ball obstacle, `s = −1` a ball workspace.
    fn ball(center: &[f64], radius_sq: f64, s: f64) -> Self {
        let n = center.len();
        let c = DVector::from_column_slice(center);
        QuadricFunction {
            quad: DMatrix::identity(n, n) * s,
            lin: &c * (-2.0 * s),
            constant: s * (c.norm_squared() - radius_sq),
        }
    }

    pub fn ball_obstacle(center: &[f64], radius_sq: f64) -> Self {
        Self::ball(center, radius_sq, 1.0)
    }

    pub fn ball_workspace(center: &[f64], radius_sq: f64) -> Self {
        Self::ball(center, radius_sq, -1.0)
    }

    pub fn dim(&self) -> usize {
        self.lin.len()
    }

    pub fn quad(&self) -> &DMatrix<f64> {
        &self.quad
    }

    pub fn lin(&self) -> &DVector<f64> {
        &self.lin
    }

    pub fn constant(&self) -> f64 {
        self.constant
    }

    #[inline]
    pub fn eval(&self, x: &[f64]) -> f64 {
        let n = self.dim();
        let mut v = self.constant;
        for i in 0..n {
            let row: f64 = x.iter().enumerate().map(|(j, xj)| self.quad[(i, j)] * xj).sum();
            v += x[i] * row + self.lin[i] * x[i];
        }
        v
    }

    /// `2Qx + l`.
    pub fn gradient(&self, x: &[f64]) -> DVector<f64> {
        let xv = DVector::from_column_slice(x);
        &self.quad * xv * 2.0 + &self.lin
    }

    /// Axis-aligned bounding box of `{β ≥ 0}` when `Q` is negative definite.
    pub fn superlevel_bounding_box(&self) -> Option<(Vec<f64>, Vec<f64>)> {
        let neg = -&self.quad;
        let chol = neg.clone().cholesky()?;
        let inv = chol.inverse();
        // Maximizer of β is −½Q⁻¹l = ½(−Q)⁻¹l.
        let center = &inv * &self.lin * 0.5;
        let peak = self.eval(center.as_slice());
        if peak <= 0.0 {
            return None;
        }
        let mut lo = Vec::with_capacity(self.dim());
        let mut hi = Vec::with_capacity(self.dim());
        for i in 0..self.dim() {
            let half = (peak * inv[(i, i)]).sqrt();
            lo.push(center[i] - half);
            hi.push(center[i] + half);
        }
        Some((lo, hi))
    }
}

/// Workspace `β₀ ≥ 0`, obstacles `β_j < 0` and the target `x*`.
#[derive(Debug, Clone, PartialEq)]
pub struct Scene {
    workspace: QuadricFunction,
    obstacles: Vec<QuadricFunction>,
    target: DVector<f64>,
}

impl Scene {
    /// Rejects dimension mismatches and targets outside the open free space.
    pub fn new(workspace: QuadricFunction, obstacles: Vec<QuadricFunction>, target: Vec<f64>) -> Result<Self> {
        let n = workspace.dim();
        for (j, o) in obstacles.iter().enumerate() {
            if o.dim() != n {
                return Err(Error::DimensionMismatch {
                    context: format!("obstacle {}", j + 1),
                    expected: n,
                    found: o.dim(),
                });
            }
        }
        if target.len() != n {
            return Err(Error::DimensionMismatch {
                context: "target".into(),
                expected: n,
                found: target.len(),
            });
        }
        let scene = Scene {
            workspace,
            obstacles,
            target: DVector::from_vec(target),
        };
        let margin = scene.free_space_margin(scene.target.as_slice());
        if !(margin > 0.0) {
            return Err(Error::Infeasible(format!(
                "target {:?} is not strictly inside the free space (margin {margin:.4})",
                scene.target.as_slice()
            )));
        }
        Ok(scene)
    }

    pub fn dim(&self) -> usize {
        self.target.len()
    }

    pub fn workspace(&self) -> &QuadricFunction {
        &self.workspace
    }

    pub fn obstacles(&self) -> &[QuadricFunction] {
        &self.obstacles
    }

    pub fn target(&self) -> &DVector<f64> {
        &self.target
    }

    /// `β₀, β₁, …, β_N` in order.
    pub fn betas(&self) -> impl Iterator<Item = &QuadricFunction> {
        std::iter::once(&self.workspace).chain(self.obstacles.iter())
    }

    /// `Π_{j=0..N} β_j(x)`.
    pub fn product(&self, x: &[f64]) -> f64 {
        self.betas().map(|b| b.eval(x)).product()
    }

    /// `min_j β_j(x)`; positive iff `x` is strictly inside the free space.
    pub fn free_space_margin(&self, x: &[f64]) -> f64 {
        self.betas().map(|b| b.eval(x)).fold(f64::INFINITY, f64::min)
    }

    /// `ln(1 + Π β_j(x))`, the barrier metric plotted alongside trajectories.
    pub fn log_barrier(&self, x: &[f64]) -> f64 {
        self.product(x).ln_1p()
    }
}

/// Anything the closed loop can descend: a value, a gradient and the scene it lives in.
pub trait Potential: Send + Sync {
    fn value(&self, x: &[f64]) -> Result<f64>;
    fn gradient(&self, x: &[f64]) -> Result<DVector<f64>>;
    fn scene(&self) -> &Scene;
}

#[derive(Debug, Clone, PartialEq)]
pub struct NavigationFunction {
    scene: Scene,
}

impl NavigationFunction {
    pub fn new(scene: Scene) -> Self {
        NavigationFunction { scene }
    }

    fn check(&self, x: &[f64]) -> Result<()> {
        if x.len() != self.scene.dim() {
            return Err(Error::DimensionMismatch {
                context: "state vector".into(),
                expected: self.scene.dim(),
                found: x.len(),
            });
        }
        Ok(())
    }
}

impl Potential for NavigationFunction {
    fn value(&self, x: &[f64]) -> Result<f64> {
        self.check(x)?;
        let r2: f64 = x
            .iter()
            .zip(self.scene.target.iter())
            .map(|(a, b)| (a - b) * (a - b))
            .sum();
        if r2 == 0.0 {
            return Ok(0.0);
        }
        let radicand = r2 * r2 + self.scene.product(x);
        if radicand < 0.0 {
            return Err(Error::OutsideFreeSpace { radicand });
        }
        Ok(r2 / radicand.sqrt())
    }

    fn gradient(&self, x: &[f64]) -> Result<DVector<f64>> {
        self.check(x)?;
        let betas: Vec<f64> = self.scene.betas().map(|b| b.eval(x)).collect();
        let product: f64 = betas.iter().product();
        if product < BOUNDARY_TOLERANCE {
            return Err(Error::BoundarySingularity { product });
        }
        let d = DVector::from_column_slice(x) - &self.scene.target;
        let r2 = d.norm_squared();
        if r2 == 0.0 {
            return Ok(DVector::zeros(x.len()));
        }

        // ∇Π β = Σ_j (Π_{k≠j} β_k) ∇β_j, without dividing by β_j.
        let mut grad_b = DVector::zeros(x.len());
        for (j, q) in self.scene.betas().enumerate() {
            let others: f64 = betas
                .iter()
                .enumerate()
                .filter(|(k, _)| *k != j)
                .map(|(_, b)| b)
                .product();
            grad_b += q.gradient(x) * others;
        }

        let s = r2 * r2 + product;
        let s_half = s.sqrt();
        let s_3half = s * s_half;
        Ok(&d * (2.0 / s_half) - (&d * (4.0 * r2) + grad_b) * (0.5 * r2 / s_3half))
    }

    fn scene(&self) -> &Scene {
        &self.scene
    }
}

/// A sample point that violates scene validity.
#[derive(Debug, Clone, PartialEq)]
pub struct SceneFlag {
    pub point: Vec<f64>,
    /// One-based obstacle indices involved.
    pub obstacles: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct SceneReport {
    pub points_checked: usize,
    pub overlaps: Vec<SceneFlag>,
    pub containment: Vec<SceneFlag>,
    /// False when the workspace is unbounded and a fallback box around the target was scanned.
    pub workspace_bounded: bool,
}

impl SceneReport {
    pub fn is_valid(&self) -> bool {
        self.overlaps.is_empty() && self.containment.is_empty()
    }

    /// One-based indices of obstacles with at least one containment flag.
    pub fn uncontained_obstacles(&self) -> Vec<usize> {
        let mut v: Vec<usize> = self
            .containment
            .iter()
            .flat_map(|f| f.obstacles.iter().copied())
            .collect();
        v.sort_unstable();
        v.dedup();
        v
    }
}

const MAX_FLAGS: usize = 64;
const FALLBACK_HALF_WIDTH: f64 = 10.0;

/// Scans a regular grid (`resolution` points per axis) over the workspace
/// bounding box enlarged by 10%, flagging points inside two obstacles at
/// once and obstacle points outside the workspace.
pub fn validate_scene(scene: &Scene, resolution: usize) -> SceneReport {
    let n = scene.dim();
    let resolution = resolution.max(2);
    let (bounded, (lo, hi)) = match scene.workspace.superlevel_bounding_box() {
        Some(b) => (true, b),
        None => (
            false,
            (
                scene.target.iter().map(|t| t - FALLBACK_HALF_WIDTH).collect(),
                scene.target.iter().map(|t| t + FALLBACK_HALF_WIDTH).collect(),
            ),
        ),
    };
    let (lo, hi): (Vec<f64>, Vec<f64>) = lo
        .iter()
        .zip(&hi)
        .map(|(l, h)| {
            let mid = 0.5 * (l + h);
            let half = 0.55 * (h - l);
            (mid - half, mid + half)
        })
        .unzip();

    let mut report = SceneReport {
        workspace_bounded: bounded,
        ..Default::default()
    };
    let mut idx = vec![0usize; n];
    let mut x = vec![0.0; n];
    let total = resolution.pow(n as u32);
    for _ in 0..total {
        for k in 0..n {
            x[k] = lo[k] + (hi[k] - lo[k]) * idx[k] as f64 / (resolution - 1) as f64;
        }
        let inside: Vec<usize> = scene
            .obstacles
            .iter()
            .enumerate()
            .filter(|(_, o)| o.eval(&x) < 0.0)
            .map(|(j, _)| j + 1)
            .collect();
        if inside.len() >= 2 && report.overlaps.len() < MAX_FLAGS {
            report.overlaps.push(SceneFlag {
                point: x.clone(),
                obstacles: inside.clone(),
            });
        }
        if !inside.is_empty() && scene.workspace.eval(&x) <= 0.0 && report.containment.len() < MAX_FLAGS {
            report.containment.push(SceneFlag {
                point: x.clone(),
                obstacles: inside,
            });
        }
        report.points_checked += 1;
        for k in idx.iter_mut() {
            *k += 1;
            if *k < resolution {
                break;
            }
            *k = 0;
        }
    }
    report
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn rigid_body() -> Scene {
        Scene::new(
            QuadricFunction::ball_workspace(&[0.0, 0.0, 0.0], 12.25),
            vec![
                QuadricFunction::ball_obstacle(&[0.0, 0.0, 1.75], 0.5625),
                QuadricFunction::ball_obstacle(&[0.5, 0.0, -1.5], 0.5625),
                QuadricFunction::ball_obstacle(&[-2.0, 0.0, 0.0], 0.36),
            ],
            vec![0.0, 0.0, 3.0],
        )
        .unwrap()
    }

    // The four obstacle and workspace functions, typed out independently of the quadric type.
    fn rigid_body_betas(x: &[f64]) -> [f64; 4] {
        let (a, b, c) = (x[0], x[1], x[2]);
        [
            12.25 - a * a - b * b - c * c,
            a * a + b * b + (c - 1.75).powi(2) - 0.5625,
            (a - 0.5).powi(2) + b * b + (c + 1.5).powi(2) - 0.5625,
            (a + 2.0).powi(2) + b * b + c * c - 0.36,
        ]
    }

    fn fd_grad(nf: &NavigationFunction, x: &[f64], h: f64) -> DVector<f64> {
        let mut g = DVector::zeros(x.len());
        let mut y = x.to_vec();
        for i in 0..x.len() {
            y[i] = x[i] + h;
            let p = nf.value(&y).unwrap();
            y[i] = x[i] - h;
            let m = nf.value(&y).unwrap();
            y[i] = x[i];
            g[i] = (p - m) / (2.0 * h);
        }
        g
    }

    #[test]
    fn margin_examples() {
        let s = rigid_body();
        let x0 = [0.0, 0.0, -3.0];
        let want = rigid_body_betas(&x0).into_iter().fold(f64::INFINITY, f64::min);
        assert_eq!(want, 1.9375);
        assert!((s.free_space_margin(&x0) - want).abs() < 1e-12);
        assert!((s.free_space_margin(&[-2.0, 0.0, 0.0]) + 0.36).abs() < 1e-12);
        assert!(s.free_space_margin(&[0.0, 0.0, 3.0]) > 0.0);
    }

    #[test]
    fn quadrics_match_written_out_formulas() {
        let s = rigid_body();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for _ in 0..100 {
            let x: Vec<f64> = (0..3).map(|_| rng.random_range(-4.0..4.0)).collect();
            let want = rigid_body_betas(&x);
            for (q, w) in s.betas().zip(want) {
                assert!((q.eval(&x) - w).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn value_examples() {
        let nf = NavigationFunction::new(rigid_body());
        assert_eq!(nf.value(&[0.0, 0.0, 3.0]).unwrap(), 0.0);
        let x0 = [0.0, 0.0, -3.0];
        let b = rigid_body_betas(&x0);
        let want = 36.0 / (36.0f64 * 36.0 + b.iter().product::<f64>()).sqrt();
        assert!((nf.value(&x0).unwrap() - want).abs() < 1e-14);
        // On the boundary of obstacle 1 the product vanishes exactly.
        assert_eq!(nf.value(&[0.0, 0.0, 1.0]).unwrap(), 1.0);
        assert!(nf.gradient(&[0.0, 0.0, 1.0]).is_err());
    }

    #[test]
    fn gradient_zero_at_target_and_symmetric() {
        let nf = NavigationFunction::new(rigid_body());
        assert_eq!(nf.gradient(&[0.0, 0.0, 3.0]).unwrap().norm(), 0.0);
        for t in [-2.8, -0.5, 0.7, 2.7] {
            let g = nf.gradient(&[0.0, 0.0, t]).unwrap();
            assert!(g[1].abs() < 1e-15);
        }
    }

    #[test]
    fn gradient_matches_finite_differences() {
        let nf = NavigationFunction::new(rigid_body());
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let mut checked = 0;
        while checked < 200 {
            let x: Vec<f64> = (0..3).map(|_| rng.random_range(-3.5..3.5)).collect();
            if nf.scene().free_space_margin(&x) <= 0.1 {
                continue;
            }
            let g = nf.gradient(&x).unwrap();
            let fd = fd_grad(&nf, &x, 1e-5);
            assert!((&g - &fd).norm() / g.norm().max(1e-8) < 1e-6, "{x:?}");
            checked += 1;
        }
    }

    #[test]
    fn target_in_obstacle_is_infeasible() {
        let r = Scene::new(
            QuadricFunction::ball_workspace(&[0.0, 0.0], 4.0),
            vec![QuadricFunction::ball_obstacle(&[0.0, 0.0], 0.25)],
            vec![0.1, 0.0],
        );
        assert!(matches!(r, Err(Error::Infeasible(_))));
    }

    #[test]
    fn scene_validation() {
        assert!(validate_scene(&rigid_body(), 30).is_valid());

        let twin = Scene::new(
            QuadricFunction::ball_workspace(&[0.0, 0.0], 9.0),
            vec![
                QuadricFunction::ball_obstacle(&[1.0, 0.0], 0.25),
                QuadricFunction::ball_obstacle(&[1.0, 0.0], 0.25),
            ],
            vec![-2.0, 0.0],
        )
        .unwrap();
        let r = validate_scene(&twin, 41);
        assert!(!r.overlaps.is_empty() && r.containment.is_empty());

        let outside = Scene::new(
            QuadricFunction::ball_workspace(&[0.0, 0.0], 9.0),
            vec![QuadricFunction::ball_obstacle(&[3.1, 0.0], 0.25)],
            vec![-2.0, 0.0],
        )
        .unwrap();
        let r = validate_scene(&outside, 41);
        assert_eq!(r.uncontained_obstacles(), vec![1]);
    }

    #[test]
    fn symmetrization() {
        let q = QuadricFunction::new(
            DMatrix::from_row_slice(2, 2, &[1.0, 2.0, 0.0, 1.0]),
            DVector::zeros(2),
            0.0,
        )
        .unwrap();
        assert_eq!(q.quad()[(0, 1)], 1.0);
        assert_eq!(q.eval(&[1.0, 1.0]), 4.0);
    }

    proptest! {
        #[test]
        fn potential_nonnegative_in_free_space(x in proptest::collection::vec(-3.5f64..3.5, 3)) {
            let nf = NavigationFunction::new(rigid_body());
            if nf.scene().free_space_margin(&x) > 0.0 {
                prop_assert!(nf.value(&x).unwrap() >= 0.0);
            }
        }
    }
}
