//! Objectives and noisy-gradient oracles.

use rand::RngCore;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{Error, Result};
use crate::linalg::{self, cholesky_psd, dist_sq, dot, spectral_radius, Matrix};

/// Bits of the ChaCha stream id reserved for the worker index.
const WORKER_BITS: u32 = 24;
/// Each step owns a window of 2^32 words in its stream.
const WORDS_PER_STEP_LOG2: u32 = 32;

/// Shape of the standardised noise before it is scaled by `Σ^½`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum NoiseDist {
    #[default]
    Gaussian,
    /// Independent ±1 coordinates.
    Rademacher,
}

/// Coordinates of one noise draw.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct StreamId {
    pub replica: u64,
    pub worker: u64,
    pub step: u64,
}

/// Counter-based noise source: a draw is a pure function of
/// `(seed, replica, worker, step)`.
///
/// The seed keys a ChaCha8 generator; `(replica, worker)` selects the
/// stream and `step` the word offset, so no state is carried between draws.
#[derive(Debug, Clone)]
pub struct NoiseStream {
    seed: u64,
    base: ChaCha8Rng,
}

impl NoiseStream {
    pub fn new(seed: u64) -> Self {
        Self {
            seed,
            base: ChaCha8Rng::seed_from_u64(seed),
        }
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    /// Generator positioned at the start of the window for `id`.
    pub fn rng_at(&self, id: StreamId) -> ChaCha8Rng {
        debug_assert!(id.worker < 1 << WORKER_BITS);
        debug_assert!(id.replica < 1 << (64 - WORKER_BITS));
        let mut rng = self.base.clone();
        rng.set_stream((id.replica << WORKER_BITS) | id.worker);
        rng.set_word_pos(u128::from(id.step) << WORDS_PER_STEP_LOG2);
        rng
    }

    /// Fills `out` with i.i.d. zero-mean, unit-variance draws.
    pub fn fill_standard(&self, id: StreamId, dist: NoiseDist, out: &mut [f64]) {
        let mut rng = self.rng_at(id);
        match dist {
            NoiseDist::Gaussian => {
                for v in out.iter_mut() {
                    *v = StandardNormal.sample(&mut rng);
                }
            }
            NoiseDist::Rademacher => {
                for v in out.iter_mut() {
                    *v = if rng.next_u32() & 1 == 0 { 1.0 } else { -1.0 };
                }
            }
        }
    }
}

/// Strong convexity modulus and gradient Lipschitz constant.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StrongConvexParams {
    pub mu: f64,
    pub ell: f64,
}

/// `F(x) = ½ xᵀA x − bᵀx` observed through `g = A x − b − ξ`, `Cov ξ = Σ`.
#[derive(Debug, Clone)]
pub struct QuadraticProblem {
    a: Matrix,
    b: Vec<f64>,
    noise_cov: Matrix,
    noise_factor: Option<Matrix>,
    noise_dist: NoiseDist,
    optimum: Vec<f64>,
    curvature: StrongConvexParams,
}

impl QuadraticProblem {
    pub fn new(a: Matrix, b: Vec<f64>, noise_cov: Matrix, noise_dist: NoiseDist) -> Result<Self> {
        let d = a.rows();
        if !a.is_square() || d == 0 {
            return Err(Error::param("A", "must be a non-empty square matrix"));
        }
        if b.len() != d {
            return Err(Error::Dimension {
                context: "QuadraticProblem b",
                expected: d,
                actual: b.len(),
            });
        }
        if noise_cov.rows() != d || noise_cov.cols() != d {
            return Err(Error::Dimension {
                context: "QuadraticProblem noise_cov",
                expected: d,
                actual: noise_cov.rows(),
            });
        }
        linalg::check_finite("QuadraticProblem b", &b)?;
        if !a.is_symmetric() {
            return Err(Error::param("A", "must be symmetric"));
        }
        if !noise_cov.is_symmetric() {
            return Err(Error::param("Sigma", "must be symmetric"));
        }
        let curvature = eigen_extremes(&a)?;
        if !(curvature.mu > 0.0) {
            return Err(Error::param("A", "must be positive definite"));
        }
        let factor = cholesky_psd(&noise_cov).map_err(|_| Error::param("Sigma", "must be positive semidefinite"))?;
        let noise_factor = (factor.max_abs() > 0.0).then_some(factor);
        let optimum = linalg::solve(&a, &b)?;
        Ok(Self {
            a,
            b,
            noise_cov,
            noise_factor,
            noise_dist,
            optimum,
            curvature,
        })
    }

    /// One-dimensional problem `F(x) = h x²/2 − b x` with noise variance σ².
    pub fn scalar(h: f64, b: f64, sigma2: f64) -> Result<Self> {
        if !(sigma2 >= 0.0) {
            return Err(Error::param("sigma2", "must be non-negative"));
        }
        Self::new(
            Matrix::new(1, 1, vec![h])?,
            vec![b],
            Matrix::new(1, 1, vec![sigma2])?,
            NoiseDist::Gaussian,
        )
    }

    pub fn with_noise_dist(mut self, dist: NoiseDist) -> Self {
        self.noise_dist = dist;
        self
    }

    pub fn dim(&self) -> usize {
        self.b.len()
    }

    pub fn a(&self) -> &Matrix {
        &self.a
    }

    pub fn b(&self) -> &[f64] {
        &self.b
    }

    pub fn noise_cov(&self) -> &Matrix {
        &self.noise_cov
    }

    pub fn noise_dist(&self) -> NoiseDist {
        self.noise_dist
    }

    /// `x* = A⁻¹ b`.
    pub fn optimum(&self) -> &[f64] {
        &self.optimum
    }

    /// Extreme eigenvalues of `A`.
    pub fn mu_ell(&self) -> StrongConvexParams {
        self.curvature
    }

    /// Total noise variance `tr Σ`.
    pub fn noise_trace(&self) -> f64 {
        (0..self.dim()).map(|i| self.noise_cov[(i, i)]).sum()
    }

    pub fn objective(&self, x: &[f64]) -> Result<f64> {
        self.check_dim(x)?;
        Ok(0.5 * dot(x, &self.a.mat_vec(x)?) - dot(&self.b, x))
    }

    /// Exact gradient `A x − b`.
    pub fn gradient(&self, x: &[f64]) -> Result<Vec<f64>> {
        self.check_dim(x)?;
        Ok(self.gradient_unchecked(x))
    }

    /// `A x − b − ξ` with `ξ = Σ^½ z` and `z` drawn at `id`.
    pub fn noisy_gradient(&self, x: &[f64], noise: &NoiseStream, id: StreamId) -> Result<Vec<f64>> {
        self.check_dim(x)?;
        Ok(self.noisy_gradient_unchecked(x, noise, id))
    }

    pub(crate) fn noisy_gradient_unchecked(&self, x: &[f64], noise: &NoiseStream, id: StreamId) -> Vec<f64> {
        let mut g = self.gradient_unchecked(x);
        if let Some(factor) = &self.noise_factor {
            let d = self.dim();
            let mut z = vec![0.0; d];
            noise.fill_standard(id, self.noise_dist, &mut z);
            for (i, gi) in g.iter_mut().enumerate() {
                *gi -= dot(&factor.row(i)[..=i], &z[..=i]);
            }
        }
        g
    }

    fn gradient_unchecked(&self, x: &[f64]) -> Vec<f64> {
        (0..self.dim())
            .map(|i| dot(self.a.row(i), x) - self.b[i])
            .collect()
    }

    fn check_dim(&self, x: &[f64]) -> Result<()> {
        if x.len() != self.dim() {
            return Err(Error::Dimension {
                context: "QuadraticProblem",
                expected: self.dim(),
                actual: x.len(),
            });
        }
        Ok(())
    }
}

/// Smallest and largest eigenvalue of a symmetric matrix: closed form up to
/// dimension two, repeated-squaring radii of `A` and `ℓI − A` beyond.
fn eigen_extremes(a: &Matrix) -> Result<StrongConvexParams> {
    match a.rows() {
        1 => Ok(StrongConvexParams {
            mu: a[(0, 0)],
            ell: a[(0, 0)],
        }),
        2 => {
            let mid = 0.5 * (a[(0, 0)] + a[(1, 1)]);
            let half_gap = 0.5 * (a[(0, 0)] - a[(1, 1)]);
            let r = half_gap.hypot(a[(0, 1)]);
            Ok(StrongConvexParams {
                mu: mid - r,
                ell: mid + r,
            })
        }
        n => {
            let ell = spectral_radius(a, 1e-14)?.value;
            let shifted = Matrix::identity(n).scaled(ell).sub(a)?;
            let spread = spectral_radius(&shifted, 1e-14)?.value;
            Ok(StrongConvexParams {
                mu: ell - spread,
                ell,
            })
        }
    }
}

/// Quadratic bowl with Gaussian wells:
/// `F(x) = ½ κ ‖x‖² − Σₖ dₖ exp(−‖x − cₖ‖² / (2 s²))`, isotropic noise.
#[derive(Debug, Clone)]
pub struct NonconvexProblem {
    centers: Vec<Vec<f64>>,
    depths: Vec<f64>,
    width: f64,
    confinement: f64,
    noise_std: f64,
}

impl NonconvexProblem {
    pub fn new(
        centers: Vec<Vec<f64>>,
        depths: Vec<f64>,
        width: f64,
        confinement: f64,
        noise_std: f64,
    ) -> Result<Self> {
        if centers.len() < 2 {
            return Err(Error::param("centers", "need at least two wells"));
        }
        if depths.len() != centers.len() {
            return Err(Error::Dimension {
                context: "NonconvexProblem depths",
                expected: centers.len(),
                actual: depths.len(),
            });
        }
        let d = centers[0].len();
        if d == 0 || centers.iter().any(|c| c.len() != d) {
            return Err(Error::param("centers", "all centers need the same non-zero dimension"));
        }
        for c in &centers {
            linalg::check_finite("NonconvexProblem centers", c)?;
        }
        linalg::check_finite("NonconvexProblem depths", &depths)?;
        let distinct = centers.iter().skip(1).any(|c| c != &centers[0]);
        if !distinct {
            return Err(Error::param("centers", "need at least two distinct centers"));
        }
        if !(width > 0.0 && width.is_finite()) {
            return Err(Error::param("width", "must be positive"));
        }
        if !(confinement >= 0.0 && confinement.is_finite()) {
            return Err(Error::param("confinement", "must be non-negative"));
        }
        if !(noise_std >= 0.0 && noise_std.is_finite()) {
            return Err(Error::param("noise_std", "must be non-negative"));
        }
        Ok(Self {
            centers,
            depths,
            width,
            confinement,
            noise_std,
        })
    }

    pub fn dim(&self) -> usize {
        self.centers[0].len()
    }

    pub fn centers(&self) -> &[Vec<f64>] {
        &self.centers
    }

    pub fn depths(&self) -> &[f64] {
        &self.depths
    }

    pub fn width(&self) -> f64 {
        self.width
    }

    pub fn confinement(&self) -> f64 {
        self.confinement
    }

    pub fn noise_std(&self) -> f64 {
        self.noise_std
    }

    /// Center of the deepest well; the reference point for error metrics.
    pub fn deepest_center(&self) -> &[f64] {
        let best = self
            .depths
            .iter()
            .enumerate()
            .fold(0, |best, (i, &d)| if d > self.depths[best] { i } else { best });
        &self.centers[best]
    }

    pub fn objective(&self, x: &[f64]) -> f64 {
        let inv = 1.0 / (2.0 * self.width * self.width);
        let wells: f64 = self
            .centers
            .iter()
            .zip(&self.depths)
            .map(|(c, d)| d * (-dist_sq(x, c) * inv).exp())
            .sum();
        0.5 * self.confinement * dot(x, x) - wells
    }

    pub fn gradient(&self, x: &[f64]) -> Vec<f64> {
        let s2 = self.width * self.width;
        let mut g: Vec<f64> = x.iter().map(|v| self.confinement * v).collect();
        for (c, d) in self.centers.iter().zip(&self.depths) {
            let w = d * (-dist_sq(x, c) / (2.0 * s2)).exp() / s2;
            for ((gi, xi), ci) in g.iter_mut().zip(x).zip(c) {
                *gi += w * (xi - ci);
            }
        }
        g
    }

    pub fn noisy_gradient(&self, x: &[f64], noise: &NoiseStream, id: StreamId) -> Vec<f64> {
        let mut g = self.gradient(x);
        if self.noise_std > 0.0 {
            let mut z = vec![0.0; g.len()];
            noise.fill_standard(id, NoiseDist::Gaussian, &mut z);
            for (gi, zi) in g.iter_mut().zip(&z) {
                *gi -= self.noise_std * zi;
            }
        }
        g
    }
}

/// Any objective the harness can drive.
#[derive(Debug, Clone)]
pub enum Problem {
    Quadratic(QuadraticProblem),
    Nonconvex(NonconvexProblem),
}

impl Problem {
    pub fn dim(&self) -> usize {
        match self {
            Problem::Quadratic(q) => q.dim(),
            Problem::Nonconvex(n) => n.dim(),
        }
    }

    /// Point errors are measured against.
    pub fn reference_point(&self) -> &[f64] {
        match self {
            Problem::Quadratic(q) => q.optimum(),
            Problem::Nonconvex(n) => n.deepest_center(),
        }
    }

    /// Objective value; the caller guarantees `x.len() == dim()`.
    pub fn objective(&self, x: &[f64]) -> f64 {
        match self {
            Problem::Quadratic(q) => {
                let ax = q.gradient_unchecked(x);
                // F(x) = ½ xᵀ(Ax − b) − ½ bᵀx
                0.5 * dot(x, &ax) - 0.5 * dot(q.b(), x)
            }
            Problem::Nonconvex(n) => n.objective(x),
        }
    }

    /// Noisy gradient; the caller guarantees `x.len() == dim()`.
    pub fn sample_gradient(&self, x: &[f64], noise: &NoiseStream, id: StreamId) -> Vec<f64> {
        match self {
            Problem::Quadratic(q) => q.noisy_gradient_unchecked(x, noise, id),
            Problem::Nonconvex(n) => n.noisy_gradient(x, noise, id),
        }
    }
}

impl From<QuadraticProblem> for Problem {
    fn from(q: QuadraticProblem) -> Self {
        Problem::Quadratic(q)
    }
}

impl From<NonconvexProblem> for Problem {
    fn from(n: NonconvexProblem) -> Self {
        Problem::Nonconvex(n)
    }
}
