//! Mean and variance of the synchronous center variable on the scalar
//! quadratic, its stability region and the large-`p` limit.

use super::Axis;
use crate::error::{Error, Result};

/// Scalar synchronous setting: curvature `h`, noise variance `σ²`, `p`
/// workers, learning rate `η`, moving rate `α`, and initial offsets from the
/// optimum (`x̃₀ − x*` and `xⁱ₀ − x*`).
#[derive(Debug, Clone, PartialEq)]
pub struct Lemma1Params {
    pub h: f64,
    pub sigma2: f64,
    pub p: usize,
    pub eta: f64,
    pub alpha: f64,
    pub x0_center: f64,
    pub x0_workers: Vec<f64>,
}

/// Roots of `λ² − (2 − a)λ + (1 − a + c²)`, larger first.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Roots {
    Real { gamma: f64, phi: f64 },
    Complex { re: f64, im: f64 },
}

impl Roots {
    pub fn max_modulus(&self) -> f64 {
        match *self {
            Roots::Real { gamma, phi } => gamma.abs().max(phi.abs()),
            Roots::Complex { re, im } => re.hypot(im),
        }
    }
}

/// Time index for mean/variance evaluation.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Horizon {
    Step(u64),
    Infinity,
}

impl Lemma1Params {
    pub fn new(
        h: f64,
        sigma2: f64,
        p: usize,
        eta: f64,
        alpha: f64,
        x0_center: f64,
        x0_workers: Vec<f64>,
    ) -> Result<Self> {
        if !(h > 0.0 && h.is_finite()) {
            return Err(Error::param("h", "must be positive"));
        }
        if !(sigma2 >= 0.0 && sigma2.is_finite()) {
            return Err(Error::param("sigma2", "must be non-negative"));
        }
        if p == 0 {
            return Err(Error::param("p", "need at least one worker"));
        }
        if !(eta > 0.0 && eta.is_finite()) {
            return Err(Error::param("eta", "must be positive"));
        }
        if !alpha.is_finite() || !x0_center.is_finite() {
            return Err(Error::param("alpha", "must be finite"));
        }
        if x0_workers.len() != p {
            return Err(Error::Dimension {
                context: "Lemma1Params x0_workers",
                expected: p,
                actual: x0_workers.len(),
            });
        }
        Ok(Self {
            h,
            sigma2,
            p,
            eta,
            alpha,
            x0_center,
            x0_workers,
        })
    }

    /// All variables start at the same offset `x0`; `α = β / p`.
    pub fn uniform(h: f64, sigma2: f64, p: usize, eta: f64, beta: f64, x0: f64) -> Result<Self> {
        if p == 0 {
            return Err(Error::param("p", "need at least one worker"));
        }
        Self::new(h, sigma2, p, eta, beta / p as f64, x0, vec![x0; p])
    }

    pub fn beta(&self) -> f64 {
        self.p as f64 * self.alpha
    }

    /// `a = ηh + (p + 1)α`.
    pub fn a(&self) -> f64 {
        self.eta * self.h + (self.p as f64 + 1.0) * self.alpha
    }

    /// `c² = ηh p α`.
    pub fn c2(&self) -> f64 {
        self.eta * self.h * self.p as f64 * self.alpha
    }

    /// Sum of the roots, `2 − a`.
    pub fn root_sum(&self) -> f64 {
        2.0 - self.a()
    }

    /// Product of the roots, `1 − a + c²`.
    pub fn root_product(&self) -> f64 {
        1.0 - self.a() + self.c2()
    }

    pub fn roots(&self) -> Roots {
        let a = self.a();
        let disc = a * a - 4.0 * self.c2();
        if disc >= 0.0 {
            let sq = disc.sqrt();
            Roots::Real {
                gamma: 1.0 - (a - sq) / 2.0,
                phi: 1.0 - (a + sq) / 2.0,
            }
        } else {
            Roots::Complex {
                re: 1.0 - a / 2.0,
                im: (-disc).sqrt() / 2.0,
            }
        }
    }

    fn sum_workers(&self) -> f64 {
        self.x0_workers.iter().sum()
    }
}

/// `(D_t, D_{t+1})` with `D_k = (γᵏ − φᵏ)/(γ − φ)`, by the real recurrence
/// `D_{k+1} = s D_k − q D_{k−1}`; valid for distinct, repeated and complex
/// roots alike.
fn divided_powers(s: f64, q: f64, t: u64) -> (f64, f64) {
    let (mut prev, mut cur) = (0.0, 1.0);
    for _ in 0..t {
        let next = s * cur - q * prev;
        prev = cur;
        cur = next;
    }
    (prev, cur)
}

/// Relative root gap below which the divided-difference forms are replaced
/// by the recurrence.
const ROOT_GAP: f64 = 1e-6;

fn separated(gamma: f64, phi: f64) -> bool {
    gamma - phi > ROOT_GAP * gamma.abs().max(phi.abs()).max(1.0)
}

/// `E[x̃_t − x*]` from the root formula, falling back to
/// [`lemma1_mean_recurrence`] for repeated or complex roots.
pub fn lemma1_mean(params: &Lemma1Params, t: u64) -> f64 {
    if let Roots::Real { gamma, phi } = params.roots() {
        let pa = params.p as f64 * params.alpha;
        let denom = 1.0 - pa - phi;
        if separated(gamma, phi) && denom.abs() > 1e-12 {
            let tf = t as f64;
            let gt = gamma.powf(tf);
            let ft = phi.powf(tf);
            let u0: f64 = params
                .x0_workers
                .iter()
                .map(|x| x - params.alpha / denom * params.x0_center)
                .sum();
            return gt * params.x0_center + (gt - ft) / (gamma - phi) * params.alpha * u0;
        }
    }
    lemma1_mean_recurrence(params, t)
}

/// Root-free form: `E = D_{t+1} x̃₀ + D_t (α Σxⁱ₀ − (1 − α − ηh) x̃₀)`.
pub fn lemma1_mean_recurrence(params: &Lemma1Params, t: u64) -> f64 {
    let (d_t, d_next) = divided_powers(params.root_sum(), params.root_product(), t);
    let local = 1.0 - params.alpha - params.eta * params.h;
    d_next * params.x0_center + d_t * (params.alpha * params.sum_workers() - local * params.x0_center)
}

/// `Σ_{k=1}^{t−1} rᵏ`.
fn geometric_tail(r: f64, t: u64) -> f64 {
    if t <= 1 {
        return 0.0;
    }
    if (1.0 - r).abs() < 1e-12 {
        return (t - 1) as f64;
    }
    (r - r.powf(t as f64)) / (1.0 - r)
}

/// `Var[x̃_t]`. Finite horizons use the root formula (recurrence for
/// repeated or complex roots); the infinite horizon needs stability.
pub fn lemma1_variance(params: &Lemma1Params, horizon: Horizon) -> Result<f64> {
    let scale = params.sigma2 / params.p as f64;
    let pae = params.p as f64 * params.alpha * params.eta;
    match horizon {
        Horizon::Step(t) => {
            if let Roots::Real { gamma, phi } = params.roots() {
                if separated(gamma, phi) {
                    let bracket = geometric_tail(gamma * gamma, t) + geometric_tail(phi * phi, t)
                        - 2.0 * geometric_tail(gamma * phi, t);
                    let gap = gamma - phi;
                    return Ok(pae * pae / (gap * gap) * bracket * scale);
                }
            }
            Ok(lemma1_variance_recurrence(params, t))
        }
        Horizon::Infinity => {
            let verdict = sync_stability(params);
            if !verdict.stable {
                return Err(Error::Unstable(format!(
                    "center variance has no limit: max root modulus {}",
                    verdict.max_modulus
                )));
            }
            match verdict.roots {
                Roots::Real { gamma, phi } => {
                    let gp = gamma * phi;
                    Ok(pae * pae / ((1.0 - gamma * gamma) * (1.0 - phi * phi)) * (1.0 + gp) / (1.0 - gp) * scale)
                }
                Roots::Complex { .. } => {
                    // (1−γ²)(1−φ²) = c²(4 − 2a + c²) and 1 − γφ = a − c².
                    let (a, c2) = (params.a(), params.c2());
                    Ok(pae * pae * (2.0 - a + c2) / (c2 * (4.0 - 2.0 * a + c2) * (a - c2)) * scale)
                }
            }
        }
    }
}

/// `α²η² p σ² Σ_{k=1}^{t−1} D_k²`, summed directly.
pub fn lemma1_variance_recurrence(params: &Lemma1Params, t: u64) -> f64 {
    let (s, q) = (params.root_sum(), params.root_product());
    let (mut prev, mut cur) = (0.0_f64, 1.0_f64);
    let mut total = 0.0;
    for _ in 1..t {
        total += cur * cur;
        let next = s * cur - q * prev;
        prev = cur;
        cur = next;
    }
    let ae = params.alpha * params.eta;
    ae * ae * params.p as f64 * params.sigma2 * total
}

/// `E[(x̃_t − x*)²] = mean² + variance`.
pub fn lemma1_mse(params: &Lemma1Params, horizon: Horizon) -> Result<f64> {
    let var = lemma1_variance(params, horizon)?;
    let mean = match horizon {
        Horizon::Step(t) => lemma1_mean(params, t),
        Horizon::Infinity => 0.0,
    };
    Ok(mean * mean + var)
}

/// Verdict on `−1 < φ < γ < 1`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SyncStability {
    /// From the inequality characterisation.
    pub stable: bool,
    /// From the computed roots.
    pub numeric_stable: bool,
    pub roots: Roots,
    pub max_modulus: f64,
}

/// Real roots: `c² > 0`, `(2 − ηh)(2 − pα) > 2α`, `(2 − ηh) + (2 − pα) > α`.
/// Complex roots (an extension): `|γ|² = 1 − a + c² < 1`.
pub fn sync_stability(params: &Lemma1Params) -> SyncStability {
    let roots = params.roots();
    let max_modulus = roots.max_modulus();
    let (eh, pa, alpha) = (params.eta * params.h, params.p as f64 * params.alpha, params.alpha);
    let stable = match roots {
        Roots::Real { .. } => {
            params.c2() > 0.0 && (2.0 - eh) * (2.0 - pa) > 2.0 * alpha && (2.0 - eh) + (2.0 - pa) > alpha
        }
        Roots::Complex { .. } => params.c2() < params.a(),
    };
    SyncStability {
        stable,
        numeric_stable: max_modulus < 1.0,
        roots,
        max_modulus,
    }
}

/// Limit of `p · MSE` at `t = ∞` as `p → ∞` with `β` and `ηh` fixed.
pub fn corollary1_limit(beta: f64, eta_h: f64, sigma2: f64, h: f64) -> Result<f64> {
    if !(beta > 0.0 && beta < 2.0) {
        return Err(Error::Unstable(format!("beta = {beta} outside (0, 2)")));
    }
    if !(eta_h > 0.0 && eta_h < 2.0) {
        return Err(Error::Unstable(format!("eta*h = {eta_h} outside (0, 2)")));
    }
    if !(h > 0.0) || !(sigma2 >= 0.0) {
        return Err(Error::param("h/sigma2", "need h > 0 and sigma2 >= 0"));
    }
    let be = beta * eta_h;
    let first = be / ((2.0 - beta) * (2.0 - eta_h));
    let second = (2.0 - beta - eta_h + be) / (beta + eta_h - be);
    Ok(first * second * sigma2 / (h * h))
}

/// Axes and fixed quantities of a theoretical MSE sweep.
#[derive(Debug, Clone, PartialEq)]
pub struct MseGridSpec {
    pub h: f64,
    pub sigma2: f64,
    /// Common initial offset of center and workers.
    pub x0: f64,
    pub p_list: Vec<usize>,
    pub horizons: Vec<Horizon>,
    pub eta_axis: Axis,
    pub beta_axis: Axis,
}

/// One cell of an MSE sweep.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MseCell {
    pub p: usize,
    pub horizon: Horizon,
    pub eta: f64,
    pub beta: f64,
    /// `inf` for unstable cells at the infinite horizon.
    pub mse: f64,
    pub diverged: bool,
}

/// Sweeps `p`, then horizon, then `η` (outer) and `β` (inner).
pub fn mse_grid(spec: &MseGridSpec) -> Result<Vec<MseCell>> {
    let etas = spec.eta_axis.points();
    let betas = spec.beta_axis.points();
    let mut out = Vec::with_capacity(spec.p_list.len() * spec.horizons.len() * etas.len() * betas.len());
    for &p in &spec.p_list {
        for &horizon in &spec.horizons {
            for &eta in &etas {
                for &beta in &betas {
                    let params = Lemma1Params::uniform(spec.h, spec.sigma2, p, eta, beta, spec.x0)?;
                    let diverged = !sync_stability(&params).stable;
                    let mse = match (horizon, diverged) {
                        (Horizon::Infinity, true) => f64::INFINITY,
                        _ => lemma1_mse(&params, horizon)?,
                    };
                    out.push(MseCell {
                        p,
                        horizon,
                        eta,
                        beta,
                        mse,
                        diverged,
                    });
                }
            }
        }
    }
    Ok(out)
}
