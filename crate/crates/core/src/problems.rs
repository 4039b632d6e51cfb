//! Saddle problems with stochastic gradient oracles.
//!
//! Two concrete games ship: the constrained bilinear game
//! `xᵀAy + 2(b+ζ)ᵀx − 2(c+ζ)ᵀy` and a strongly convex-strongly concave
//! quadratic that adds `(μ/2)‖x‖² − (μ/2)‖y‖²`. Both draw one noise vector
//! `ζ ~ N(0, σ²I)` per sample and share it between the two gradient blocks.

use nalgebra::{DMatrix, DVector};
use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use thiserror::Error;

use crate::geometry::{BallSet, GeometryError, IteratePair, Vector, FEASIBILITY_TOL};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ProblemError {
    #[error(transparent)]
    Geometry(#[from] GeometryError),
    #[error("{block} block is infeasible: norm {norm} exceeds radius {radius}")]
    Infeasible {
        block: &'static str,
        norm: f64,
        radius: f64,
    },
    #[error("no interior saddle point: {0}")]
    NoInteriorSaddle(String),
    #[error("invalid problem parameter: {0}")]
    InvalidParameter(String),
}

/// One agent's answer to a gradient query: estimates of `∇_x f` and `∇_y f`.
#[derive(Debug, Clone, PartialEq)]
pub struct GradientSample {
    pub gx: Vector,
    pub gy: Vector,
}

impl GradientSample {
    pub fn new(gx: Vector, gy: Vector) -> Self {
        Self { gx, gy }
    }

    pub fn is_finite(&self) -> bool {
        self.gx.is_finite() && self.gy.is_finite()
    }

    pub fn scale(&self, factor: f64) -> GradientSample {
        Self::new(self.gx.scale(factor), self.gy.scale(factor))
    }

    pub fn sub(&self, other: &GradientSample) -> GradientSample {
        Self::new(self.gx.sub(&other.gx), self.gy.sub(&other.gy))
    }
}

/// A convex-concave problem `min_{x∈X} max_{y∈Y} f(x, y)` over Euclidean balls.
pub trait SaddleProblem: Send + Sync {
    fn name(&self) -> &str;
    fn set_x(&self) -> BallSet;
    fn set_y(&self) -> BallSet;
    /// Lipschitz constant `L` of both partial gradients.
    fn smoothness(&self) -> f64;
    /// Strong convexity/concavity modulus `μ`; zero when merely convex-concave.
    fn strong_convexity(&self) -> f64;
    /// Standard deviation of each noise coordinate `ζ_j`.
    fn noise_sigma(&self) -> f64;
    fn saddle(&self) -> Option<&IteratePair>;
    fn value(&self, x: &Vector, y: &Vector) -> f64;
    fn population_gradient(&self, at: &IteratePair) -> GradientSample;
    fn sample_gradient(&self, at: &IteratePair, rng: &mut dyn RngCore) -> GradientSample;
    /// `max_{y∈Y} f(x̄, y) − min_{x∈X} f(x, ȳ)`, clamped at zero.
    fn primal_dual_gap(&self, x_bar: &Vector, y_bar: &Vector) -> Result<f64, ProblemError>;

    fn dim_x(&self) -> usize {
        self.set_x().dim()
    }

    fn dim_y(&self) -> usize {
        self.set_y().dim()
    }

    /// `D = max(D_x, D_y)`.
    fn diameter(&self) -> f64 {
        self.set_x().diameter().max(self.set_y().diameter())
    }

    /// Root of the summed per-coordinate variance bounds of `g_x`.
    fn sigma_x(&self) -> f64 {
        2.0 * self.noise_sigma() * (self.dim_x() as f64).sqrt()
    }

    fn sigma_y(&self) -> f64 {
        2.0 * self.noise_sigma() * (self.dim_y() as f64).sqrt()
    }

    fn sigma(&self) -> f64 {
        self.sigma_x().max(self.sigma_y())
    }

    /// Condition number `κ = μ / L`.
    fn kappa(&self) -> f64 {
        self.strong_convexity() / self.smoothness()
    }

    /// The monotone operator `F(z) = [∇_x f; −∇_y f]`.
    fn operator(&self, at: &IteratePair) -> IteratePair {
        let g = self.population_gradient(at);
        IteratePair::new(g.gx, g.gy.scale(-1.0))
    }

    fn is_feasible(&self, at: &IteratePair) -> bool {
        self.set_x().contains(&at.x, FEASIBILITY_TOL) && self.set_y().contains(&at.y, FEASIBILITY_TOL)
    }

    /// Deterministic start: both blocks along the all-ones direction at half
    /// the radius.
    fn initial_point(&self) -> IteratePair {
        let start = |set: BallSet| {
            let entry = 0.5 * set.radius() / (set.dim() as f64).sqrt();
            Vector::filled(set.dim(), entry)
        };
        IteratePair::new(start(self.set_x()), start(self.set_y()))
    }
}

fn to_dvector(v: &Vector) -> DVector<f64> {
    DVector::from_column_slice(v.as_slice())
}

fn from_dvector(v: DVector<f64>) -> Vector {
    Vector::from_raw(v.as_slice().to_vec())
}

fn mat_vec(a: &DMatrix<f64>, v: &Vector) -> Vector {
    from_dvector(a * to_dvector(v))
}

fn mat_t_vec(a: &DMatrix<f64>, v: &Vector) -> Vector {
    from_dvector(a.tr_mul(&to_dvector(v)))
}

/// Largest singular value `‖A‖₂`.
pub fn operator_norm(a: &DMatrix<f64>) -> f64 {
    a.singular_values().max()
}

fn check_feasible(set: BallSet, v: &Vector, block: &'static str) -> Result<(), ProblemError> {
    v.check_dim(set.dim())?;
    let norm = v.norm();
    if norm > set.radius() + FEASIBILITY_TOL {
        return Err(ProblemError::Infeasible {
            block,
            norm,
            radius: set.radius(),
        });
    }
    Ok(())
}

/// Draws `ζ ~ N(0, σ²I)` of length `dim`.
fn draw_noise(sigma: f64, dim: usize, rng: &mut dyn RngCore) -> Vec<f64> {
    (0..dim)
        .map(|_| {
            let z: f64 = StandardNormal.sample(rng);
            sigma * z
        })
        .collect()
}

fn add_noise(gx: &Vector, gy: &Vector, zeta: &[f64]) -> GradientSample {
    let gx = gx
        .as_slice()
        .iter()
        .zip(zeta)
        .map(|(g, z)| g + 2.0 * z)
        .collect();
    let gy = gy
        .as_slice()
        .iter()
        .zip(zeta)
        .map(|(g, z)| g - 2.0 * z)
        .collect();
    GradientSample::new(Vector::from_raw(gx), Vector::from_raw(gy))
}

/// Maximises `gᵀw − (curvature/2)‖w‖²` over `‖w‖ ≤ radius`.
///
/// The KKT point is `w = g / (curvature + λ)` for the smallest `λ ≥ 0` that
/// makes `w` feasible; `λ` is located by bisection on the norm constraint.
/// Returns the optimal value.
pub fn ball_quadratic_max(g: &Vector, curvature: f64, radius: f64) -> f64 {
    let g_norm = g.norm();
    if g_norm == 0.0 {
        return 0.0;
    }
    if curvature > 0.0 && g_norm / curvature <= radius {
        return g_norm * g_norm / (2.0 * curvature);
    }
    if radius == 0.0 {
        return 0.0;
    }
    // ‖w(λ)‖ = ‖g‖ / (curvature + λ) is decreasing in λ.
    let mut lo = 0.0_f64;
    let mut hi = g_norm / radius;
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        let norm = g_norm / (curvature + mid);
        if norm > radius {
            lo = mid;
        } else {
            hi = mid;
        }
        if (hi - lo) <= 1e-10 * hi.max(1e-300) {
            break;
        }
    }
    // Pin the multiplier's argmax to the sphere it lies on.
    let w = g.scale(1.0 / (curvature + hi));
    let w = w.scale(radius / w.norm());
    g.dot(&w) - 0.5 * curvature * w.norm_sq()
}

/// `f(x, y) = E[xᵀAy + 2(b+ζ)ᵀx − 2(c+ζ)ᵀy]` over `‖x‖, ‖y‖ ≤ ρ`.
#[derive(Debug, Clone)]
pub struct BilinearGame {
    a: DMatrix<f64>,
    b: Vector,
    c: Vector,
    set_x: BallSet,
    set_y: BallSet,
    sigma: f64,
    smoothness: f64,
    saddle: Option<IteratePair>,
}

impl BilinearGame {
    pub fn new(
        a: DMatrix<f64>,
        b: Vector,
        c: Vector,
        radius: f64,
        sigma2: f64,
    ) -> Result<Self, ProblemError> {
        let (n, m) = a.shape();
        b.check_dim(n)?;
        c.check_dim(m)?;
        if !(sigma2.is_finite() && sigma2 >= 0.0) {
            return Err(ProblemError::InvalidParameter(format!(
                "noise variance must be nonnegative, got {sigma2}"
            )));
        }
        if a.iter().any(|v| !v.is_finite()) {
            return Err(ProblemError::InvalidParameter("matrix has non-finite entries".into()));
        }
        let mut game = Self {
            smoothness: operator_norm(&a),
            a,
            b,
            c,
            set_x: BallSet::new(radius, n)?,
            set_y: BallSet::new(radius, m)?,
            sigma: sigma2.sqrt(),
            saddle: None,
        };
        game.saddle = game.saddle_point().ok();
        Ok(game)
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.a
    }

    /// Solves `Ay* = −2b`, `Aᵀx* = 2c`; the result must be interior.
    pub fn saddle_point(&self) -> Result<IteratePair, ProblemError> {
        let (n, m) = self.a.shape();
        if n != m {
            return Err(ProblemError::NoInteriorSaddle(
                "bilinear saddle requires a square matrix".into(),
            ));
        }
        let lu = self.a.clone().lu();
        let lu_t = self.a.transpose().lu();
        let y = lu
            .solve(&(to_dvector(&self.b) * -2.0))
            .ok_or_else(|| ProblemError::NoInteriorSaddle("matrix is singular".into()))?;
        let x = lu_t
            .solve(&(to_dvector(&self.c) * 2.0))
            .ok_or_else(|| ProblemError::NoInteriorSaddle("matrix is singular".into()))?;
        let saddle = IteratePair::new(from_dvector(x), from_dvector(y));
        verify_interior_saddle(self, saddle)
    }
}

fn verify_interior_saddle(
    problem: &dyn SaddleProblem,
    saddle: IteratePair,
) -> Result<IteratePair, ProblemError> {
    if !saddle.is_finite() {
        return Err(ProblemError::NoInteriorSaddle("system is singular".into()));
    }
    let rx = problem.set_x().radius();
    let ry = problem.set_y().radius();
    if saddle.x.norm() >= rx || saddle.y.norm() >= ry {
        return Err(ProblemError::NoInteriorSaddle(format!(
            "stationary point ({:.3e}, {:.3e}) lies outside the open balls",
            saddle.x.norm(),
            saddle.y.norm()
        )));
    }
    let g = problem.population_gradient(&saddle);
    let residual = (g.gx.norm_sq() + g.gy.norm_sq()).sqrt();
    if residual > 1e-8 {
        return Err(ProblemError::NoInteriorSaddle(format!(
            "ill-conditioned system, gradient residual {residual:.3e}"
        )));
    }
    Ok(saddle)
}

impl SaddleProblem for BilinearGame {
    fn name(&self) -> &str {
        "bilinear"
    }

    fn set_x(&self) -> BallSet {
        self.set_x
    }

    fn set_y(&self) -> BallSet {
        self.set_y
    }

    fn smoothness(&self) -> f64 {
        self.smoothness
    }

    fn strong_convexity(&self) -> f64 {
        0.0
    }

    fn noise_sigma(&self) -> f64 {
        self.sigma
    }

    fn saddle(&self) -> Option<&IteratePair> {
        self.saddle.as_ref()
    }

    fn value(&self, x: &Vector, y: &Vector) -> f64 {
        x.dot(&mat_vec(&self.a, y)) + 2.0 * self.b.dot(x) - 2.0 * self.c.dot(y)
    }

    fn population_gradient(&self, at: &IteratePair) -> GradientSample {
        let gx = mat_vec(&self.a, &at.y).axpy(2.0, &self.b);
        let gy = mat_t_vec(&self.a, &at.x).axpy(-2.0, &self.c);
        GradientSample::new(gx, gy)
    }

    fn sample_gradient(&self, at: &IteratePair, rng: &mut dyn RngCore) -> GradientSample {
        let mean = self.population_gradient(at);
        let zeta = draw_noise(self.sigma, self.dim_x().max(self.dim_y()), rng);
        add_noise(&mean.gx, &mean.gy, &zeta)
    }

    fn primal_dual_gap(&self, x_bar: &Vector, y_bar: &Vector) -> Result<f64, ProblemError> {
        check_feasible(self.set_x, x_bar, "x")?;
        check_feasible(self.set_y, y_bar, "y")?;
        let best_y = mat_t_vec(&self.a, x_bar).axpy(-2.0, &self.c);
        let best_x = mat_vec(&self.a, y_bar).axpy(2.0, &self.b);
        let gap = self.set_y.radius() * best_y.norm()
            + 2.0 * self.b.dot(x_bar)
            + self.set_x.radius() * best_x.norm()
            + 2.0 * self.c.dot(y_bar);
        Ok(gap.max(0.0))
    }
}

/// `f(x, y) = (μ/2)‖x‖² + xᵀAy − (μ/2)‖y‖² + 2bᵀx − 2cᵀy` plus the shared
/// linear noise term.
#[derive(Debug, Clone)]
pub struct ScScQuadraticGame {
    mu: f64,
    a: DMatrix<f64>,
    b: Vector,
    c: Vector,
    set_x: BallSet,
    set_y: BallSet,
    sigma: f64,
    smoothness: f64,
    saddle: Option<IteratePair>,
}

impl ScScQuadraticGame {
    pub fn new(
        mu: f64,
        a: DMatrix<f64>,
        b: Vector,
        c: Vector,
        radius: f64,
        sigma2: f64,
    ) -> Result<Self, ProblemError> {
        let (n, m) = a.shape();
        b.check_dim(n)?;
        c.check_dim(m)?;
        if !(mu.is_finite() && mu > 0.0) {
            return Err(ProblemError::InvalidParameter(format!(
                "strong convexity modulus must be positive, got {mu}"
            )));
        }
        if !(sigma2.is_finite() && sigma2 >= 0.0) {
            return Err(ProblemError::InvalidParameter(format!(
                "noise variance must be nonnegative, got {sigma2}"
            )));
        }
        if a.iter().any(|v| !v.is_finite()) {
            return Err(ProblemError::InvalidParameter("matrix has non-finite entries".into()));
        }
        let mut game = Self {
            smoothness: mu + operator_norm(&a),
            mu,
            a,
            b,
            c,
            set_x: BallSet::new(radius, n)?,
            set_y: BallSet::new(radius, m)?,
            sigma: sigma2.sqrt(),
            saddle: None,
        };
        game.saddle = game.saddle_point().ok();
        Ok(game)
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.a
    }

    /// Solves `μx + Ay + 2b = 0`, `Aᵀx − μy − 2c = 0`.
    pub fn saddle_point(&self) -> Result<IteratePair, ProblemError> {
        let (n, m) = self.a.shape();
        let mut system = DMatrix::<f64>::zeros(n + m, n + m);
        for i in 0..n {
            system[(i, i)] = self.mu;
        }
        for j in 0..m {
            system[(n + j, n + j)] = -self.mu;
        }
        system.view_mut((0, n), (n, m)).copy_from(&self.a);
        system.view_mut((n, 0), (m, n)).copy_from(&self.a.transpose());
        let mut rhs = DVector::<f64>::zeros(n + m);
        for i in 0..n {
            rhs[i] = -2.0 * self.b[i];
        }
        for j in 0..m {
            rhs[n + j] = 2.0 * self.c[j];
        }
        let sol = system
            .lu()
            .solve(&rhs)
            .ok_or_else(|| ProblemError::NoInteriorSaddle("system is singular".into()))?;
        let x = Vector::from_raw(sol.as_slice()[..n].to_vec());
        let y = Vector::from_raw(sol.as_slice()[n..].to_vec());
        verify_interior_saddle(self, IteratePair::new(x, y))
    }
}

impl SaddleProblem for ScScQuadraticGame {
    fn name(&self) -> &str {
        "scsc-quadratic"
    }

    fn set_x(&self) -> BallSet {
        self.set_x
    }

    fn set_y(&self) -> BallSet {
        self.set_y
    }

    fn smoothness(&self) -> f64 {
        self.smoothness
    }

    fn strong_convexity(&self) -> f64 {
        self.mu
    }

    fn noise_sigma(&self) -> f64 {
        self.sigma
    }

    fn saddle(&self) -> Option<&IteratePair> {
        self.saddle.as_ref()
    }

    fn value(&self, x: &Vector, y: &Vector) -> f64 {
        0.5 * self.mu * x.norm_sq() + x.dot(&mat_vec(&self.a, y))
            - 0.5 * self.mu * y.norm_sq()
            + 2.0 * self.b.dot(x)
            - 2.0 * self.c.dot(y)
    }

    fn population_gradient(&self, at: &IteratePair) -> GradientSample {
        let gx = mat_vec(&self.a, &at.y)
            .axpy(self.mu, &at.x)
            .axpy(2.0, &self.b);
        let gy = mat_t_vec(&self.a, &at.x)
            .axpy(-self.mu, &at.y)
            .axpy(-2.0, &self.c);
        GradientSample::new(gx, gy)
    }

    fn sample_gradient(&self, at: &IteratePair, rng: &mut dyn RngCore) -> GradientSample {
        let mean = self.population_gradient(at);
        let zeta = draw_noise(self.sigma, self.dim_x().max(self.dim_y()), rng);
        add_noise(&mean.gx, &mean.gy, &zeta)
    }

    fn primal_dual_gap(&self, x_bar: &Vector, y_bar: &Vector) -> Result<f64, ProblemError> {
        check_feasible(self.set_x, x_bar, "x")?;
        check_feasible(self.set_y, y_bar, "y")?;
        // max_y f(x̄, y) = (μ/2)‖x̄‖² + 2bᵀx̄ + max_y [uᵀy − (μ/2)‖y‖²]
        let u = mat_t_vec(&self.a, x_bar).axpy(-2.0, &self.c);
        let upper = 0.5 * self.mu * x_bar.norm_sq()
            + 2.0 * self.b.dot(x_bar)
            + ball_quadratic_max(&u, self.mu, self.set_y.radius());
        // min_x f(x, ȳ) = −(μ/2)‖ȳ‖² − 2cᵀȳ − max_x [−vᵀx − (μ/2)‖x‖²]
        let v = mat_vec(&self.a, y_bar).axpy(2.0, &self.b);
        let lower = -0.5 * self.mu * y_bar.norm_sq() - 2.0 * self.c.dot(y_bar)
            - ball_quadratic_max(&v.scale(-1.0), self.mu, self.set_x.radius());
        Ok((upper - lower).max(0.0))
    }
}

/// Named problem presets.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Preset {
    /// Ten-dimensional bilinear game on balls of radius 100.
    BilinearSec6,
    /// Ten-dimensional SC-SC quadratic with `μ = 0.1` on balls of radius 100.
    ScScQuadratic,
}

impl Preset {
    pub fn name(self) -> &'static str {
        match self {
            Preset::BilinearSec6 => "bilinear-sec6",
            Preset::ScScQuadratic => "scsc-quadratic",
        }
    }

    pub fn from_name(name: &str) -> Option<Self> {
        match name {
            "bilinear-sec6" => Some(Preset::BilinearSec6),
            "scsc-quadratic" => Some(Preset::ScScQuadratic),
            _ => None,
        }
    }
}

/// Parameters shared by the presets. `A` is drawn from `matrix_seed` with
/// i.i.d. standard normal entries and rescaled to unit operator norm;
/// `b = c = 0`, so the saddle sits at the origin.
#[derive(Debug, Clone, PartialEq)]
pub struct PresetParams {
    pub dim: usize,
    pub radius: f64,
    pub sigma2: f64,
    pub mu: f64,
    pub matrix_seed: u64,
}

impl Default for PresetParams {
    fn default() -> Self {
        Self {
            dim: 10,
            radius: 100.0,
            sigma2: 10.0,
            mu: 0.1,
            matrix_seed: 2021,
        }
    }
}

/// `dim × dim` Gaussian matrix scaled to `‖A‖₂ = 1`.
pub fn unit_norm_gaussian_matrix(dim: usize, seed: u64) -> DMatrix<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let raw = DMatrix::from_fn(dim, dim, |_, _| {
        let z: f64 = StandardNormal.sample(&mut rng);
        z
    });
    let norm = operator_norm(&raw);
    raw / norm
}

pub fn build_preset(
    preset: Preset,
    params: &PresetParams,
) -> Result<Box<dyn SaddleProblem>, ProblemError> {
    if params.dim == 0 {
        return Err(ProblemError::InvalidParameter("dimension must be positive".into()));
    }
    let a = unit_norm_gaussian_matrix(params.dim, params.matrix_seed);
    let zero = Vector::zeros(params.dim);
    Ok(match preset {
        Preset::BilinearSec6 => Box::new(BilinearGame::new(
            a,
            zero.clone(),
            zero,
            params.radius,
            params.sigma2,
        )?),
        Preset::ScScQuadratic => Box::new(ScScQuadraticGame::new(
            params.mu,
            a,
            zero.clone(),
            zero,
            params.radius,
            params.sigma2,
        )?),
    })
}
